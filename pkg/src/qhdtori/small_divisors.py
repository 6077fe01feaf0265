"""Scans of three-wave small divisors on the anisotropic torus.

Every momentum-conserving signed triple belongs to a class closed under
permutation and under flipping all signs. Each class is reported once, in one
of two shapes:

* ``p + q = r`` with signs ``(+, +, -)`` on ``(p, q, r)``,
* ``p + q + r = 0`` with signs ``(+, +, +)``.

Within a record the slots are ordered by ``|j|_a`` (decreasing, ties broken
lexicographically) and the signs are normalised to ``sigma_1 = +1``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .dispersion import ModelParams, omega_from_norm_sq
from .hamiltonians import ResonanceError
from .lattice import TorusShape, ball

__all__ = [
    "Regime",
    "DivisorRecord",
    "DivisorBatch",
    "BoundFit",
    "DivisorScan",
    "enumerate_triples",
    "small_mode_triples",
    "classify_regime",
    "regime_threshold",
    "fit_lower_bound",
    "measure_estimate",
    "MeasureTable",
    "RESONANCE_TOL",
]

RESONANCE_TOL = 1e-13
M_GRID = tuple(range(2, 13))


class Regime(str, enum.Enum):
    EQUAL_SIGN = "equal-sign"
    THREE_COMPARABLE = "three-comparable"
    TWO_LARGE_ONE_SMALL = "two-large-one-small"


_REGIMES = (Regime.EQUAL_SIGN, Regime.THREE_COMPARABLE, Regime.TWO_LARGE_ONE_SMALL)


@dataclass(frozen=True)
class DivisorRecord:
    sigma: tuple[int, int, int]
    j1: tuple[int, ...]
    j2: tuple[int, ...]
    j3: tuple[int, ...]
    omega_sum: float
    mu1: float
    mu3: float
    regime: Regime


def regime_threshold(mu1, beta: float, d: int, gamma: float = 1.0):
    """Size ``J(j_1, beta)`` below which ``|j_3|`` counts as small.

    ``min{ sqrt(| |j_1|^2 - 4 d^2 beta |) / (2d),
    min{(gamma/(4 beta^2))^(1/(d+2)), (gamma/(2 beta^3))^(1/(d+1))}
    * (|j_1|^(4-d) / log(1+|j_1|)^(d+1))^(1/(d+2)) }``
    """
    mu1 = np.asarray(mu1, dtype=float)
    first = np.sqrt(np.abs(mu1**2 - 4 * d**2 * beta)) / (2 * d)
    if beta == 0:
        return first
    c = min((gamma / (4 * beta**2)) ** (1 / (d + 2)), (gamma / (2 * beta**3)) ** (1 / (d + 1)))
    with np.errstate(divide="ignore"):
        growth = (mu1 ** (4 - d) / np.log1p(mu1) ** (d + 1)) ** (1 / (d + 2))
    return np.minimum(first, c * growth)


@dataclass(eq=False)
class DivisorBatch:
    """Column storage for many records."""

    sigma: np.ndarray  # (n, 3)
    j: np.ndarray  # (n, 3, d)
    omega_sum: np.ndarray
    mu1: np.ndarray
    mu3: np.ndarray
    regime: np.ndarray  # indices into _REGIMES

    def __len__(self) -> int:
        return len(self.omega_sum)

    def take(self, mask) -> "DivisorBatch":
        return DivisorBatch(*(getattr(self, f)[mask] for f in ("sigma", "j", "omega_sum", "mu1", "mu3", "regime")))

    def record(self, k: int) -> DivisorRecord:
        js = [tuple(int(v) for v in self.j[k, i]) for i in range(3)]
        return DivisorRecord(
            tuple(int(v) for v in self.sigma[k]),
            *js,
            float(self.omega_sum[k]),
            float(self.mu1[k]),
            float(self.mu3[k]),
            _REGIMES[int(self.regime[k])],
        )

    def records(self) -> Iterator[DivisorRecord]:
        for k in range(len(self)):
            yield self.record(k)

    @classmethod
    def concat(cls, batches: list["DivisorBatch"], d: int) -> "DivisorBatch":
        if not batches:
            return cls(
                np.zeros((0, 3), int), np.zeros((0, 3, d), int), np.zeros(0), np.zeros(0), np.zeros(0),
                np.zeros(0, int),
            )
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in
                     ("sigma", "j", "omega_sum", "mu1", "mu3", "regime")))


def _make_batch(
    jj: np.ndarray, sig: np.ndarray, shape: TorusShape, p: ModelParams, gamma: float
) -> DivisorBatch:
    """Order slots, normalise signs, fill divisors and regimes."""
    a = np.asarray(shape.a)
    nsq = (jj.astype(float) ** 2 * a).sum(axis=2)
    d = shape.d
    # lexicographic tie-break: compare vectors component by component
    order = np.lexsort([jj[:, :, k] for k in range(d - 1, -1, -1)] + [nsq], axis=-1)[:, ::-1]
    jj = np.take_along_axis(jj, order[:, :, None], axis=1)
    sig = np.take_along_axis(sig, order, axis=1)
    nsq = np.take_along_axis(nsq, order, axis=1)
    sig = sig * sig[:, :1]
    om = omega_from_norm_sq(nsq, p)
    Om = (sig * om).sum(axis=1)
    norms = np.sqrt((jj.astype(float) ** 2).sum(axis=2))
    mu1, mu3 = norms[:, 0], norms[:, 2]
    eq = sig[:, 0] == sig[:, 1]
    small = mu3 < regime_threshold(mu1, p.beta, d, gamma)
    reg = np.where(eq, 0, np.where(small, 2, 1))
    return DivisorBatch(sig, jj, Om, mu1, mu3, reg)


def enumerate_triples(
    J_max: int, shape: TorusShape, p: ModelParams, rows_per_batch: int = 64, gamma: float = 1.0
) -> Iterator[DivisorBatch]:
    """Stream every class of momentum-conserving triples inside the box ``J_max``."""
    pts = ball(J_max, shape)
    P, d = pts.shape
    off = J_max
    lut = -np.ones((2 * J_max + 1,) * d, dtype=np.int64)
    lut[tuple((pts + off).T)] = np.arange(P)

    def index(v):
        inside = np.all(np.abs(v) <= J_max, axis=-1)
        out = -np.ones(v.shape[:-1], dtype=np.int64)
        out[inside] = lut[tuple((v[inside] + off).T)]
        return out

    cols = np.arange(P)
    for start in range(0, P, rows_per_batch):
        rows = np.arange(start, min(P, start + rows_per_batch))
        r_i, c_i = np.meshgrid(rows, cols, indexing="ij")
        keep = c_i >= r_i
        r_i, c_i = r_i[keep], c_i[keep]
        pp, qq = pts[r_i], pts[c_i]
        # p + q = r
        ir = index(pp + qq)
        ok = ir >= 0
        jj = np.stack([pp[ok], qq[ok], pts[ir[ok]]], axis=1)
        sig = np.broadcast_to(np.array([1, 1, -1]), (len(jj), 3)).copy()
        mixed = _make_batch(jj, sig, shape, p, gamma)
        # p + q + r = 0 with idx(p) <= idx(q) <= idx(r)
        ir = index(-pp - qq)
        ok = ir >= c_i
        jj = np.stack([pp[ok], qq[ok], pts[ir[ok]]], axis=1)
        sig = np.ones((len(jj), 3), dtype=np.int64)
        plus = _make_batch(jj, sig, shape, p, gamma)
        yield DivisorBatch.concat([mixed, plus], d)


def small_mode_triples(
    J_max: int, shape: TorusShape, p: ModelParams, mu3_max: float, gamma: float = 1.0
) -> DivisorBatch:
    """Opposite-sign classes ``p + q = r`` in the box whose smallest slot has norm ``<= mu3_max``."""
    pts = ball(J_max, shape)
    small = pts[np.sqrt((pts.astype(float) ** 2).sum(axis=1)) <= mu3_max]
    batches = []
    for s in small:
        for q, r in ((pts, pts + s), (pts - s, pts)):
            ok = np.all(np.abs(q) <= J_max, axis=1) & np.all(np.abs(r) <= J_max, axis=1) & np.any(q != 0, axis=1)
            ok &= np.any(r != 0, axis=1)
            jj = np.stack([np.broadcast_to(s, q[ok].shape), q[ok], r[ok]], axis=1)
            sig = np.broadcast_to(np.array([1, 1, -1]), (len(jj), 3)).copy()
            b = _make_batch(jj, sig, shape, p, gamma)
            batches.append(b.take((b.regime != 0) & (b.mu3 <= mu3_max)))
    return DivisorBatch.concat(batches, shape.d)


def classify_regime(rec: DivisorRecord, p: ModelParams, d: int | None = None, gamma: float = 1.0) -> Regime:
    """Label a record by its sign pattern and the size of its smallest slot."""
    if rec.sigma[0] == rec.sigma[1]:
        return Regime.EQUAL_SIGN
    d = len(rec.j1) if d is None else d
    thr = float(regime_threshold(np.linalg.norm(rec.j1), p.beta, d, gamma))
    return Regime.TWO_LARGE_ONE_SMALL if np.linalg.norm(rec.j3) < thr else Regime.THREE_COMPARABLE


@dataclass
class BoundFit:
    """Result of fitting ``sqrt(kappa)^-1 |Omega| >= gamma / (mu1^(d-1) log^(d+1)(1+mu1^2) mu3^M)``."""

    gamma: float
    M: int
    worst: list[DivisorRecord]
    gammas: dict[int, float] = field(default_factory=dict)
    n_records: int = 0
    min_equal_sign: float = float("inf")
    violations: int = 0


def _weight(b: DivisorBatch, d: int, kappa: float) -> np.ndarray:
    return np.abs(b.omega_sum) / np.sqrt(kappa) * b.mu1 ** (d - 1) * np.log1p(b.mu1**2) ** (d + 1)


@dataclass
class DivisorScan:
    """Streaming reduction over divisor batches.

    Keeps, for every ``M``, the smallest normalised divisor and its record;
    the smallest equal-sign divisor; every numerically resonant record; and
    every record with ``|Omega|`` below ``keep_below``.
    """

    d: int
    kappa: float = 1.0
    keep_below: float | None = None
    gammas: dict = field(default_factory=lambda: {M: np.inf for M in M_GRID})
    argmin: dict = field(default_factory=dict)
    min_equal_sign: float = np.inf
    min_equal_record: DivisorRecord | None = None
    resonant: list = field(default_factory=list)
    kept: list = field(default_factory=list)
    n_records: int = 0
    n_opposite: int = 0

    def update(self, b: DivisorBatch) -> None:
        self.n_records += len(b)
        if len(b) == 0:
            return
        scale = np.maximum(1.0, np.abs(b.omega_sum).max())
        res = np.abs(b.omega_sum) <= RESONANCE_TOL * scale
        if np.any(res):
            self.resonant.extend(b.take(res).records())
        eq = b.regime == 0
        if np.any(eq):
            k = int(np.argmin(np.where(eq, np.abs(b.omega_sum), np.inf)))
            if abs(b.omega_sum[k]) < self.min_equal_sign:
                self.min_equal_sign = float(abs(b.omega_sum[k]))
                self.min_equal_record = b.record(k)
        if self.keep_below is not None:
            low = np.abs(b.omega_sum) < self.keep_below
            if np.any(low):
                self.kept.append(b.take(low))
        opp = ~eq
        self.n_opposite += int(opp.sum())
        if not np.any(opp):
            return
        base = _weight(b, self.d, self.kappa)
        logmu3 = np.log(b.mu3)
        for M in M_GRID:
            v = np.where(opp, base * np.exp(M * logmu3), np.inf)
            k = int(np.argmin(v))
            if v[k] < self.gammas[M]:
                self.gammas[M] = float(v[k])
                self.argmin[M] = b.record(k)

    def fit(self, gamma_min: float = 1e-8) -> BoundFit:
        if self.resonant:
            r = self.resonant[0]
            raise ResonanceError(
                f"{len(self.resonant)} exactly resonant triple(s), e.g. {r.sigma} {r.j1} {r.j2} {r.j3}",
                self.resonant,
                r.omega_sum,
            )
        ok = [M for M in M_GRID if self.gammas[M] >= gamma_min]
        M = ok[0] if ok else M_GRID[-1]
        worst = [self.argmin[m] for m in M_GRID if m in self.argmin]
        return BoundFit(
            self.gammas[M], M, worst, dict(self.gammas), self.n_records, self.min_equal_sign, 0
        )

    def records(self) -> DivisorBatch:
        return DivisorBatch.concat(self.kept, self.d)


def count_violations(batches: Iterable[DivisorBatch], fit: BoundFit, d: int, kappa: float = 1.0) -> int:
    """Opposite-sign records violating the fitted bound in its divided form.

    A record fails if ``|Omega| / sqrt(kappa)`` is below
    ``gamma / (mu1^(d-1) log^(d+1)(1+mu1^2) mu3^M)`` by more than a relative
    rounding margin of ``1e-12``.
    """
    bad = 0
    for b in batches:
        opp = b.regime != 0
        bound = fit.gamma / (b.mu1 ** (d - 1) * np.log1p(b.mu1**2) ** (d + 1) * b.mu3 ** float(fit.M))
        lhs = np.abs(b.omega_sum) / np.sqrt(kappa)
        bad += int(np.sum(opp & (lhs < bound * (1 - 1e-12))))
    return bad


def fit_lower_bound(records, d: int, kappa: float = 1.0, gamma_min: float = 1e-8) -> BoundFit:
    """Fit ``(gamma, M)`` over a stream of batches or records.

    Raises
    ------
    ResonanceError
        If some triple has a vanishing divisor.
    """
    scan = DivisorScan(d, kappa)
    pending: list[DivisorRecord] = []
    for item in records:
        if isinstance(item, DivisorBatch):
            scan.update(item)
        else:
            pending.append(item)
    if pending:
        scan.update(_batch_from_records(pending, d))
    return scan.fit(gamma_min)


def _batch_from_records(recs: list[DivisorRecord], d: int) -> DivisorBatch:
    return DivisorBatch(
        np.array([r.sigma for r in recs]),
        np.array([[r.j1, r.j2, r.j3] for r in recs]).reshape(len(recs), 3, d),
        np.array([r.omega_sum for r in recs]),
        np.array([r.mu1 for r in recs]),
        np.array([r.mu3 for r in recs]),
        np.array([_REGIMES.index(Regime(r.regime)) for r in recs]),
    )


@dataclass
class MeasureTable:
    gamma: np.ndarray
    fraction: np.ndarray
    slope: float
    samples: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gamma", "fraction"])
            for g, f in zip(self.gamma, self.fraction):
                w.writerow([repr(float(g)), repr(float(f))])


def measure_estimate(
    triple, gamma_grid, samples: int, rng_seed: int, p: ModelParams, d: int | None = None
) -> MeasureTable:
    """Fraction of ``a`` uniform in ``(1, 4)^d`` with ``|Omega(a)| <= gamma``.

    Parameters
    ----------
    triple : (sigma, j1, j2, j3)
        A momentum-conserving signed triple.
    gamma_grid : array_like
        Thresholds; the log-log slope is fitted over entries with a
        positive fraction.
    """
    if samples < 1000:
        raise ValueError("at least 10^3 samples are required")
    sigma, *js = triple
    js = np.asarray(js, dtype=np.int64)
    sig = np.asarray(sigma)
    if np.any((sig[:, None] * js).sum(axis=0) != 0):
        raise ValueError("momentum condition violated")
    d = js.shape[1] if d is None else d
    rng = np.random.default_rng(rng_seed)
    a = rng.uniform(1.0, 4.0, size=(samples, d))
    nsq = a @ (js.astype(float) ** 2).T
    Om = np.abs((sig * omega_from_norm_sq(nsq, p)).sum(axis=1))
    gam = np.asarray(gamma_grid, dtype=float)
    Om.sort()
    frac = np.searchsorted(Om, gam, side="right") / samples
    pos = (frac > 0) & (gam > 0)
    slope = float(np.polyfit(np.log(gam[pos]), np.log(frac[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    return MeasureTable(gam, frac, slope, samples)


def write_records_csv(path, batch: DivisorBatch) -> None:
    d = batch.j.shape[2] if batch.j.ndim == 3 else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["s1", "s2", "s3"] + [f"j{i}_{k}" for i in (1, 2, 3) for k in range(1, d + 1)]
            + ["omega_sum", "mu1", "mu3", "regime"]
        )
        for r in batch.records():
            w.writerow([*r.sigma, *r.j1, *r.j2, *r.j3, repr(r.omega_sum), repr(r.mu1), repr(r.mu3), r.regime.value])
