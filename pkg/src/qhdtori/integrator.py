"""Time integration of the wave function and of the reduced variables.

Two schemes are provided.

``step`` / ``evolve``
    Strang splitting of ``d psi/dt = i((hbar/2) Laplacian psi - g(|psi|^2) psi / hbar)``
    into its exact linear flow (diagonal in Fourier) and its exact
    pointwise nonlinear flow ``psi -> exp(-i dt g(|psi|^2)/hbar) psi``.
    Both sub-flows are isometries, so the mass is conserved to roundoff.

``LawsonRK4``
    Integrating-factor fourth-order Runge-Kutta for ``u' = L u + F(u)``
    with diagonal ``L``. Used for the reduced flow in the diagonal
    coordinates ``w`` (``L = -i omega``) where the stiff linear rotation is
    integrated exactly and the step is limited only by the small nonlinearity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .diagonalization import ModeMatrices
from .dispersion import ModelParams, omega_from_norm_sq
from .lattice import Grid, Lattice
from .madelung import (
    GaugeState,
    RealFieldPair,
    SpectralField,
    gauge_reduce,
    hamiltonian,
    madelung_forward,
    reduced_gradient,
    theta_rate,
)
from .modified_energy import FullVectorField

__all__ = [
    "StrangPropagator",
    "step",
    "evolve",
    "Trajectory",
    "BlowUpError",
    "ModeProfile",
    "prepare_initial",
    "initial_fields",
    "LawsonRK4",
    "ReducedFlow",
    "evolve_gauge",
    "default_dt",
]


class BlowUpError(FloatingPointError):
    """Non-finite values appeared during integration."""


def default_dt(grid: Grid, p: ModelParams) -> float:
    """``0.1 / omega`` at the largest grid wavenumber."""
    return 0.1 / float(omega_from_norm_sq(grid.norm_sq_a.max(), p))


@dataclass(eq=False)
class StrangPropagator:
    """Strang step with the linear half-step phases cached for one ``dt``."""

    grid: Grid
    p: ModelParams
    dt: float
    linear: bool = True
    nonlinear: bool = True

    def __post_init__(self):
        self._half = np.exp(-0.5j * self.p.hbar * self.grid.norm_sq_a * self.dt / 2)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        g = self.grid
        if self.linear:
            psi = g.field(self._half * g.spectrum(psi))
        if self.nonlinear:
            psi = psi * np.exp(-1j * self.dt / self.p.hbar * self.p.g(np.abs(psi) ** 2))
        if self.linear:
            psi = g.field(self._half * g.spectrum(psi))
        return psi


def step(psi: np.ndarray, dt: float, grid: Grid, p: ModelParams) -> np.ndarray:
    """One Strang step of size ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return StrangPropagator(grid, p, dt)(psi)


@dataclass
class Trajectory:
    """Sampled states and conservation monitors."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    hamiltonian: list = field(default_factory=list)
    z_norm: list = field(default_factory=list)
    w_norm: list = field(default_factory=list)
    exit_time: float | None = None
    aborted: str | None = None

    def monitors(self) -> dict[str, np.ndarray]:
        return {
            "t": np.asarray(self.times),
            "mass": np.asarray(self.mass),
            "hamiltonian": np.asarray(self.hamiltonian),
            "z_norm": np.asarray(self.z_norm),
            "w_norm": np.asarray(self.w_norm),
        }

    def write_csv(self, path) -> None:
        import csv

        mon = self.monitors()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(mon))
            for row in zip(*mon.values()):
                w.writerow([repr(float(v)) for v in row])


def _psi_monitors(psi, grid, p, s, mats, lattice):
    spec = grid.spectrum(psi)
    mass = float(np.sum(np.abs(spec) ** 2))
    st = gauge_reduce(psi, grid)
    zn = st.z.sobolev_norm(s)
    if mats is not None:
        zb = SpectralField.from_spectrum(lattice, grid, spec * np.exp(1j * st.theta))
        wn = float(np.sqrt(np.sum(lattice.sobolev_weights(s) * np.abs(mats.to_w(zb.coeffs)) ** 2)))
    else:
        wn = float("nan")
    return mass, hamiltonian(psi, grid, p), zn, wn


def evolve(
    psi0: np.ndarray,
    T: float,
    dt: float,
    grid: Grid,
    p: ModelParams,
    sample_every: int = 1,
    s: float = 6.0,
    guard: float | None = None,
    exit_level: float | None = None,
    store_states: bool = True,
    w_lattice: Lattice | None = None,
    nonlinear: bool = True,
) -> Trajectory:
    """Strang-integrate ``psi0`` up to time ``T``.

    Parameters
    ----------
    guard : float, optional
        Abort when ``||z||_{H^s}`` exceeds this value.
    exit_level : float, optional
        Record the first sampled time where ``||z||_{H^s} > exit_level``.
    w_lattice : Lattice, optional
        Ball on which the ``w`` norm is monitored.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    nsteps = int(round(T / dt))
    prop = StrangPropagator(grid, p, dt, nonlinear=nonlinear)
    mats = ModeMatrices.build(w_lattice, p) if w_lattice is not None else None
    traj = Trajectory()
    psi = np.asarray(psi0, dtype=complex)

    def sample(n):
        mon = _psi_monitors(psi, grid, p, s, mats, w_lattice)
        t = n * dt
        traj.times.append(t)
        traj.mass.append(mon[0])
        traj.hamiltonian.append(mon[1])
        traj.z_norm.append(mon[2])
        traj.w_norm.append(mon[3])
        if store_states:
            traj.states.append(psi.copy())
        if exit_level is not None and traj.exit_time is None and mon[2] > exit_level:
            traj.exit_time = t
        return mon[2]

    sample(0)
    for n in range(1, nsteps + 1):
        psi = prop(psi)
        if n % sample_every == 0 or n == nsteps:
            if not np.all(np.isfinite(psi)):
                raise BlowUpError(f"non-finite state at t={n * dt}")
            zn = sample(n)
            if guard is not None and zn > guard:
                traj.aborted = f"guard exceeded at t={n * dt}"
                break
    return traj


@dataclass(frozen=True)
class ModeProfile:
    """Random spectral profile of the initial perturbation.

    Coefficients are complex Gaussians on ``0 < max|j_k| <= J0`` weighted by
    ``<j>^(-decay)``.
    """

    J0: int = 2
    decay: float = 0.0


def initial_fields(profile: ModeProfile, seed: int, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised real zero-mean fields ``(rho, phi)``."""
    rng = np.random.default_rng(seed)
    k = grid.wavenumbers
    supp = np.all(np.abs(k) <= profile.J0, axis=-1) & np.any(k != 0, axis=-1)
    wts = np.where(supp, (1.0 + grid.norm_sq) ** (-profile.decay / 2), 0.0)
    out = []
    for _ in range(2):
        c = (rng.standard_normal(grid.dims) + 1j * rng.standard_normal(grid.dims)) * wts
        out.append(grid.field(c).real)
    return out[0], out[1]


def prepare_initial(
    epsilon: float,
    profile: ModeProfile,
    seed: int,
    grid: Grid,
    p: ModelParams,
    s: float = 6.0,
) -> np.ndarray:
    """Initial wave function with ``||z_0||_{H^s} = epsilon``.

    A random pair ``(rho, phi)`` is drawn, scaled by a common factor found
    by root finding and passed through the Madelung transform.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    rho, phi = initial_fields(profile, seed, grid)
    base = np.full(grid.dims, np.sqrt(p.mass), dtype=complex)
    if epsilon == 0:
        return base

    def build(lam):
        return madelung_forward(RealFieldPair(lam * rho, lam * phi, grid), p)

    def size(lam):
        return gauge_reduce(build(lam), grid).z.sobolev_norm(s) - epsilon

    hi = 0.5 * p.mass / max(np.abs(rho).max(), 1e-300)
    if size(hi) < 0:
        raise ValueError("epsilon too large for this profile")
    lam = brentq(size, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=200)
    return build(lam)


class LawsonRK4:
    """Integrating-factor RK4 for ``u' = L u + F(u)`` with diagonal ``L``."""

    def __init__(self, L: np.ndarray, F: Callable[[np.ndarray], np.ndarray], h: float):
        self.L = np.asarray(L)
        self.F = F
        self.h = h
        self.E = np.exp(self.L * h / 2)
        self.E2 = self.E**2

    def __call__(self, u: np.ndarray) -> np.ndarray:
        h, E, E2, F = self.h, self.E, self.E2, self.F
        k1 = F(u)
        k2 = F(E * (u + 0.5 * h * k1))
        k3 = F(E * u + 0.5 * h * k2)
        k4 = F(E2 * u + h * E * k3)
        return E2 * u + h / 6 * (E2 * k1 + 2 * E * (k2 + k3) + k4)


@dataclass(eq=False)
class ReducedFlow:
    """Galerkin-truncated reduced flow in ``w`` coordinates on a ball."""

    lattice: Lattice
    grid: Grid
    p: ModelParams
    nonlinear: bool = True

    def __post_init__(self):
        self.mats = ModeMatrices.build(self.lattice, self.p)
        self.field = FullVectorField(self.mats, self.grid, self.p)

    @property
    def omega(self) -> np.ndarray:
        return self.mats.omega

    def nonlinear_part(self, w: np.ndarray) -> np.ndarray:
        if not self.nonlinear:
            return np.zeros_like(w)
        return self.field(w) + 1j * self.omega * w

    def stepper(self, h: float) -> LawsonRK4:
        return LawsonRK4(-1j * self.omega, self.nonlinear_part, h)

    def w_from_psi(self, psi: np.ndarray) -> np.ndarray:
        z = gauge_reduce(psi, self.grid, self.lattice).z
        return self.mats.to_w(z.coeffs)

    def z_norm(self, w: np.ndarray, s: float) -> float:
        z = self.mats.to_z(w)
        return float(np.sqrt(np.sum(self.lattice.sobolev_weights(s) * np.abs(z) ** 2)))

    def run(
        self,
        w0: np.ndarray,
        T: float,
        h: float,
        sample_every: int,
        callback: Callable[[float, np.ndarray], bool | None] | None = None,
    ) -> tuple[float, np.ndarray]:
        """Integrate to ``T``; ``callback(t, w)`` at samples may return True to stop."""
        nsteps = int(round(T / h))
        st = self.stepper(h)
        w = np.asarray(w0, dtype=complex).copy()
        if callback is not None and callback(0.0, w):
            return 0.0, w
        for n in range(1, nsteps + 1):
            w = st(w)
            if n % sample_every == 0 or n == nsteps:
                if not np.all(np.isfinite(w)):
                    raise BlowUpError(f"non-finite state at t={n * h}")
                if callback is not None and callback(n * h, w):
                    return n * h, w
        return nsteps * h, w


def evolve_gauge(state: GaugeState, grid: Grid, p: ModelParams, T: float, dt: float) -> GaugeState:
    """Integrate ``(z, theta)`` by the reduced equations on the lattice of ``z``.

    ``i z' = dK_m/d conj(z)`` and ``theta' = theta_rate``; the kinetic part is
    integrated exactly, the rest by Lawson RK4.
    """
    lat = state.z.lattice
    P = len(lat)
    kin = 0.5 * p.hbar * lat.norm_sq_a
    L = np.concatenate([-1j * kin, [0.0]])

    def F(u):
        z = SpectralField(lat, u[:P])
        alpha = float(np.sqrt(p.mass - z.mass()))
        dz = -1j * (reduced_gradient(z, grid, p).coeffs - kin * u[:P])
        dth = theta_rate(GaugeState(alpha, 0.0, z), grid, p)
        return np.concatenate([dz, [dth]])

    u = np.concatenate([state.z.coeffs, [state.theta]]).astype(complex)
    st = LawsonRK4(L, F, dt)
    for _ in range(int(round(T / dt))):
        u = st(u)
    z = SpectralField(lat, u[:P])
    return GaugeState(float(np.sqrt(p.mass - z.mass())), float(u[P].real), z)
