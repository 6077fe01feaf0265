"""Batch experiments: simulation, lifespan, energy drift and divisor campaign.

Each driver writes CSV tables plus a ``summary.json`` into an output
directory and returns the summary as a dict. Outputs depend only on the
configuration, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, ExperimentConfig
from .dispersion import ModelParams, omega_from_norm_sq
from .hamiltonians import QuadraticDiagonal, ResonanceError, TrilinearHamiltonian, build_K3_w
from .integrator import ModeProfile, ReducedFlow, default_dt, evolve, prepare_initial
from .lattice import Grid, Lattice, TorusShape
from .modified_energy import (
    ModifiedEnergy,
    build_E3,
    coefficient_bound_constant,
    exact_rates,
    verify_cancellation,
)
from .small_divisors import (
    DivisorScan,
    count_violations,
    enumerate_triples,
    measure_estimate,
    write_records_csv,
)

__all__ = [
    "LifespanResult",
    "simulate",
    "run_lifespan",
    "run_drift",
    "run_divisors",
    "energy_check",
    "loglog_slope",
    "DRIFT_HEADER",
]

DRIFT_HEADER = ["t", "E_s", "N_s", "dE_dt", "dN_dt"]


def _write_summary(out: Path, kind: str, cfg: ExperimentConfig, results: dict) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    summary = {"schema": f"qhdtori.{kind}", "version": SCHEMA_VERSION, "config": cfg.to_dict(), "results": results}
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
    return summary


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or np.unique(x).size < 2:
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _setup(cfg: ExperimentConfig):
    shape, p = cfg.shape, cfg.params
    grid = Grid(shape, cfg.grid)
    lat = Lattice.ball(cfg.J_max, shape)
    return shape, p, grid, lat


def _initial(cfg: ExperimentConfig, eps: float, seed: int, grid: Grid, p: ModelParams):
    prof = ModeProfile(cfg.profile_J0, cfg.profile_decay)
    return prepare_initial(eps, prof, seed, grid, p, cfg.s)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class _Run:
    eps: float
    seed: int
    times: list = field(default_factory=list)
    z_norm: list = field(default_factory=list)
    w_norm: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    exit_time: float | None = None
    aborted: str | None = None
    t_end: float = 0.0


def _run_trajectory(args) -> _Run:
    """Integrate one ``(epsilon, seed)`` pair; stop at the exit level if given."""
    cfg, eps, seed, exit_level = args
    shape, p, grid, lat = _setup(cfg)
    psi0 = _initial(cfg, eps, seed, grid, p)
    run = _Run(eps, seed)
    guard = cfg.guard_factor * eps
    if cfg.integrator == "strang":
        dt = cfg.dt or default_dt(grid, p)
        every = max(1, int(round(cfg.sample_dt / dt)))
        tr = evolve(psi0, cfg.T_max, dt, grid, p, every, cfg.s, guard, exit_level, False, lat, cfg.nonlinear)
        run.times, run.z_norm, run.w_norm, run.mass = tr.times, tr.z_norm, tr.w_norm, tr.mass
        run.exit_time, run.aborted, run.t_end = tr.exit_time, tr.aborted, tr.times[-1]
        return run
    flow = ReducedFlow(lat, grid, p, cfg.nonlinear)
    w0 = flow.w_from_psi(psi0)
    wt = lat.sobolev_weights(cfg.s)

    def cb(t, w):
        zn = flow.z_norm(w, cfg.s)
        run.times.append(t)
        run.z_norm.append(zn)
        run.w_norm.append(float(np.sqrt(np.sum(wt * np.abs(w) ** 2))))
        run.mass.append(float(np.sum(np.abs(w) ** 2)))
        if exit_level is not None and zn > exit_level and run.exit_time is None:
            run.exit_time = t
            return True
        if zn > guard:
            run.aborted = f"guard exceeded at t={t}"
            return True
        return False

    every = max(1, int(round(cfg.sample_dt / cfg.h)))
    run.t_end, _ = flow.run(w0, cfg.T_max, cfg.h, every, cb)
    return run


def _write_monitors(path: Path, run: _Run) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "z_norm", "w_norm", "mass_nonzero"])
        for row in zip(run.times, run.z_norm, run.w_norm, run.mass):
            w.writerow([repr(float(v)) for v in row])


def simulate(cfg: ExperimentConfig, out: str | Path) -> dict:
    """Integrate every ``(epsilon, seed)`` to ``T_max`` and record monitors."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, e, s, None) for e in sorted(cfg.epsilons, reverse=True) for s in cfg.seeds]
    runs = _map(_run_trajectory, jobs, cfg.threads)
    rows = []
    for r in runs:
        name = f"monitors_eps{r.eps:.3e}_seed{r.seed}.csv"
        _write_monitors(out / name, r)
        rows.append(
            {"epsilon": r.eps, "seed": r.seed, "file": name, "t_end": r.t_end, "max_z_norm": max(r.z_norm),
             "aborted": r.aborted}
        )
    return _write_summary(out, "simulate", cfg, {"runs": rows})


# ---------------------------------------------------------------------------
# lifespan


@dataclass
class LifespanResult:
    """Exit times of ``||z||_{H^s}`` through ``2 epsilon`` per run.

    Censored runs report their final time. ``max_ratio`` is the largest
    sampled ``||z||_{H^s} / epsilon``. ``slope`` is the least-squares slope
    of ``log T`` against ``log epsilon`` over uncensored runs (``nan`` if
    fewer than two distinct epsilons exited).
    """

    epsilons: list
    seeds: list
    exit_times: list
    censored: list
    slope: float
    aborted: list
    max_ratio: list = field(default_factory=list)

    def rows(self):
        return zip(self.epsilons, self.seeds, self.exit_times, self.censored, self.aborted)


def run_lifespan(cfg: ExperimentConfig, out: str | Path | None = None) -> LifespanResult:
    jobs = [(cfg, e, s, 2 * e) for e in sorted(cfg.epsilons, reverse=True) for s in cfg.seeds]
    runs = _map(_run_trajectory, jobs, cfg.threads)
    eps, seeds, times, cens, ab, peak = [], [], [], [], [], []
    for r in runs:
        peak.append(max(r.z_norm) / r.eps)
        eps.append(r.eps)
        seeds.append(r.seed)
        cens.append(r.exit_time is None)
        times.append(r.exit_time if r.exit_time is not None else r.t_end)
        ab.append(r.aborted)
    ok = [i for i, c in enumerate(cens) if not c]
    slope = loglog_slope([eps[i] for i in ok], [times[i] for i in ok])
    res = LifespanResult(eps, seeds, times, cens, slope, ab, peak)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "lifespan.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "seed", "exit_time", "censored"])
            for e, s, t, c, _ in res.rows():
                w.writerow([repr(e), s, repr(float(t)), int(c)])
        for r in runs:
            _write_monitors(out / f"monitors_eps{r.eps:.3e}_seed{r.seed}.csv", r)
        _write_summary(
            out,
            "lifespan",
            cfg,
            {
                "epsilon": eps,
                "seed": seeds,
                "exit_time": times,
                "censored": cens,
                "slope": slope,
                "all_censored": all(cens),
                "exit_over_local_floor": [t * e for t, e in zip(times, eps)],
                "aborted": ab,
                "max_z_over_eps": peak,
            },
        )
    return res


# ---------------------------------------------------------------------------
# drift


def _drift_one(args):
    cfg, eps, seed = args
    shape, p, grid, lat = _setup(cfg)
    flow = ReducedFlow(lat, grid, p, cfg.nonlinear)
    K3 = build_K3_w(p, lat, flow.mats)
    N = cfg.cutoff(eps)
    if cfg.modified_energy:
        me = build_E3(K3, cfg.s, N, p)
    else:
        zero = TrilinearHamiltonian.zeros(lat)
        me = ModifiedEnergy(cfg.s, N, zero, QuadraticDiagonal.sobolev(lat, cfg.s), {}, None, None)
    psi0 = _initial(cfg, eps, seed, grid, p)
    w0 = flow.w_from_psi(psi0)
    rows = []

    def cb(t, w):
        dE, dN = exact_rates(me, w, flow.field)
        rows.append((t, me(w), me.Ns.evaluate(w), dE, dN))

    T = cfg.drift_T_factor / eps
    every = max(1, int(round(cfg.sample_dt / cfg.h)))
    flow.run(w0, T, cfg.h, every, cb)
    arr = np.array(rows)
    ratio = float(np.abs(arr[:, 3]).max() / np.abs(arr[:, 4]).max())
    return eps, seed, N, arr, ratio, me.provenance


def run_drift(cfg: ExperimentConfig, out: str | Path | None = None) -> dict:
    """Drift of ``E_s`` versus ``N_s`` over ``[0, drift_T_factor / epsilon]``.

    The reported ratio is ``max |dE_s/dt| / max |dN_s/dt|`` over the samples;
    ``improvement`` compares consecutive epsilons (larger over smaller).
    """
    jobs = [(cfg, e, s) for e in sorted(cfg.epsilons, reverse=True) for s in cfg.seeds]
    res = _map(_drift_one, jobs, cfg.threads)
    runs = []
    for eps, seed, N, arr, ratio, prov in res:
        runs.append({"epsilon": eps, "seed": seed, "N": N, "ratio": ratio, "samples": len(arr),
                     "min_divisor": prov.get("min_divisor")})
        if out is not None:
            Path(out).mkdir(parents=True, exist_ok=True)
            with open(Path(out) / f"drift_eps{eps:.3e}_seed{seed}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(DRIFT_HEADER)
                for row in arr:
                    w.writerow([repr(float(v)) for v in row])
    improvement = []
    for seed in cfg.seeds:
        rs = [r for r in runs if r["seed"] == seed]
        for big, small in zip(rs, rs[1:]):
            improvement.append({"seed": seed, "from": big["epsilon"], "to": small["epsilon"],
                                "factor": big["ratio"] / small["ratio"]})
    results = {"runs": runs, "improvement": improvement}
    if out is not None:
        _write_summary(Path(out), "drift", cfg, results)
    return results


# ---------------------------------------------------------------------------
# divisors


def _scan_shape(args):
    a, p_dict, J, d, threshold = args
    shape = TorusShape(tuple(a))
    p = ModelParams.from_dict(p_dict, allow_degenerate=True)
    scan = DivisorScan(d, p.kappa, threshold)
    for b in enumerate_triples(J, shape, p):
        scan.update(b)
    out = {"a": list(a), "n_records": scan.n_records, "min_equal_sign": scan.min_equal_sign,
           "equal_sign_ok": scan.min_equal_sign >= math.sqrt(p.kappa)}
    try:
        fit = scan.fit()
    except ResonanceError as err:
        out.update(status="resonant", resonant=len(err.triple),
                   example=[list(map(list, (r.sigma, r.j1, r.j2, r.j3))) for r in err.triple[:5]])
        return out, scan.records()
    viol = count_violations(enumerate_triples(J, shape, p), fit, d, p.kappa)
    out.update(status="ok", gamma=fit.gamma, M=fit.M, violations=viol,
               gammas={str(k): v for k, v in fit.gammas.items()},
               worst=[[list(r.sigma), list(r.j1), list(r.j2), list(r.j3), r.omega_sum] for r in fit.worst[:3]])
    return out, scan.records()


def sample_shapes(n: int, d: int, seed: int) -> list[tuple[float, ...]]:
    rng = np.random.default_rng(seed)
    return [tuple(float(v) for v in rng.uniform(1.0, 4.0, d)) for _ in range(n)]


def run_divisors(cfg: ExperimentConfig, out: str | Path | None = None) -> dict:
    """Divisor scans over sampled shapes, the isotropic torus, and a Monte Carlo estimate."""
    d, p = cfg.d, cfg.params
    thr = cfg.report_threshold if cfg.report_threshold is not None else math.sqrt(p.kappa) / 10
    shapes = sample_shapes(cfg.divisor_shapes, d, cfg.divisor_seed)
    iso = (1.0,) * d
    degenerate = {"kappa": p.kappa, "mass": p.mass, "g_coeffs": [0.0]}
    jobs = [(a, p.to_dict(), cfg.divisor_J_max, d, thr) for a in shapes]
    jobs.append((iso, p.to_dict(), cfg.divisor_J_max, d, thr))
    jobs.append((iso, degenerate, min(cfg.divisor_J_max, 10), d, thr))
    res = _map(_scan_shape, jobs, cfg.threads)
    fits = [r for r, _ in res[:-2]]
    iso_res, iso_degenerate = res[-2][0], res[-1][0]
    iso_degenerate["beta"] = 0.0

    tri = cfg.mc_triple
    sig, js = np.array(tri[0]), np.array(tri[1:])
    a_probe = np.random.default_rng(cfg.divisor_seed).uniform(1, 4, (4096, d))
    om = np.abs((sig * omega_from_norm_sq(a_probe @ (js.astype(float) ** 2).T, p)).sum(axis=1))
    top = float(np.median(om))
    grid_g = np.geomspace(top * 10 ** (-cfg.mc_decades), top, cfg.mc_points)
    mc = measure_estimate(tri, grid_g, cfg.mc_samples, cfg.divisor_seed, p, d)

    gam = [f["gamma"] for f in fits if f["status"] == "ok"]
    results = {
        "fits": fits,
        "n_ok": sum(f["status"] == "ok" for f in fits),
        "total_violations": sum(f.get("violations", 0) for f in fits),
        "equal_sign_ok": all(f["equal_sign_ok"] for f in fits),
        "min_equal_sign": min(f["min_equal_sign"] for f in fits),
        "gamma_summary": {"min": min(gam), "median": float(np.median(gam)), "max": max(gam)} if gam else None,
        "isotropic": iso_res,
        "isotropic_beta0": iso_degenerate,
        "measure": {"triple": [list(t) for t in tri], "slope": mc.slope, "samples": mc.samples},
    }
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "fits.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "status", "gamma", "M", "violations", "min_equal_sign", "n_records"])
            for f in fits:
                w.writerow([" ".join(repr(v) for v in f["a"]), f["status"], repr(f.get("gamma")), f.get("M"),
                            f.get("violations"), repr(f["min_equal_sign"]), f["n_records"]])
        for k, (_, recs) in enumerate(res[:-2]):
            write_records_csv(out / f"records_shape{k:02d}.csv", recs)
        write_records_csv(out / "records_isotropic_beta0.csv", res[-1][1])
        mc.write_csv(out / "measure.csv")
        _write_summary(out, "divisors", cfg, results)
    return results


# ---------------------------------------------------------------------------
# algebra


def energy_check(cfg: ExperimentConfig, out: str | Path | None = None) -> dict:
    """Cancellation residuals, divisor floor and coefficient bounds of ``E_3``."""
    shape, p, grid, lat = _setup(cfg)
    flow = ReducedFlow(lat, grid, p)
    K3 = build_K3_w(p, lat, flow.mats)
    rows = []
    for eps in sorted(cfg.epsilons, reverse=True):
        N = cfg.cutoff(eps)
        me = build_E3(K3, cfg.s, N, p)
        w = flow.w_from_psi(_initial(cfg, eps, cfg.seeds[0], grid, p))
        dE, dN = exact_rates(me, w, flow.field)
        ns, ev = me.Ns.evaluate(w), me(w)
        rows.append(
            {
                "epsilon": eps,
                "N": N,
                "cancellation_abs": verify_cancellation(K3, me, cfg.s, N, p),
                "cancellation_rel": verify_cancellation(K3, me, cfg.s, N, p, relative=True),
                "min_divisor": me.provenance["min_divisor"],
                "bound_constant_M2": coefficient_bound_constant(me, 2, shape.d),
                "energy_over_norm": ev / ns,
                "dE_dt": dE,
                "dN_dt": dN,
            }
        )
    results = {"checks": rows, "K3_max_abs": K3.max_abs(), "triads": len(K3.triads)}
    if out is not None:
        _write_summary(Path(out), "energy-check", cfg, results)
    return results
