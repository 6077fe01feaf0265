"""Madelung transform and zero-mode gauge reduction.

The wave function is ``psi = sqrt(m + rho) exp(i phi / hbar)``. Its zero
Fourier mode is written in polar form ``psi_0 = alpha exp(-i theta)`` and the
remaining modes as ``psi_j = z_j exp(-i theta)``, so that
``psi = (alpha + z) exp(-i theta)`` with ``alpha = sqrt(m - sum |z_j|^2)``.
The reduced variables ``z`` evolve by ``i dz_j/dt = dK_m/d conj(z_j)`` with

    K_m(z) = (hbar/2) sum |j|_a^2 |z_j|^2 + (1/hbar) mean G(|alpha + z|^2).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dispersion import ModelParams
from .lattice import Grid, Lattice

__all__ = [
    "RealFieldPair",
    "SpectralField",
    "GaugeState",
    "madelung_forward",
    "madelung_inverse",
    "gauge_reduce",
    "reconstruct",
    "alpha_from_z",
    "theta_rate",
    "sobolev_norm",
    "reduced_energy",
    "reduced_gradient",
    "hamiltonian",
]


@dataclass(frozen=True, eq=False)
class RealFieldPair:
    """Density perturbation ``rho`` (zero mean) and velocity potential ``phi``."""

    rho: np.ndarray
    phi: np.ndarray
    grid: Grid

    def __post_init__(self):
        for name in ("rho", "phi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.dims:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.grid.dims}")
            object.__setattr__(self, name, arr)
        scale = max(1.0, float(np.abs(self.rho).max()))
        if abs(self.rho.mean()) > 1e-9 * scale:
            raise ValueError("rho must have zero mean")


@dataclass(eq=False)
class SpectralField:
    """Complex coefficients ``z_j`` indexed by the points of a lattice."""

    lattice: Lattice
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (len(self.lattice),):
            raise ValueError("coefficient vector does not match the lattice")

    @classmethod
    def zeros(cls, lattice: Lattice) -> "SpectralField":
        return cls(lattice, np.zeros(len(lattice), dtype=complex))

    @classmethod
    def random(cls, lattice: Lattice, rng, scale: float = 1.0, decay: float = 0.0) -> "SpectralField":
        """Gaussian coefficients weighted by ``<j>^(-decay)``."""
        c = rng.standard_normal(len(lattice)) + 1j * rng.standard_normal(len(lattice))
        return cls(lattice, scale * c * lattice.brackets ** (-decay))

    @classmethod
    def from_mapping(cls, lattice: Lattice, mapping: dict) -> "SpectralField":
        out = cls.zeros(lattice)
        for j, c in mapping.items():
            k = int(lattice.index(np.asarray(j)))
            if k < 0:
                raise KeyError(f"{j} is not a point of the lattice")
            out.coeffs[k] = c
        return out

    def as_mapping(self) -> dict:
        return {tuple(int(v) for v in j): complex(c) for j, c in zip(self.lattice.points, self.coeffs)}

    def copy(self) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs.copy())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def __mul__(self, c) -> "SpectralField":
        return SpectralField(self.lattice, c * self.coeffs)

    __rmul__ = __mul__

    def mass(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def sobolev_norm(self, s: float) -> float:
        return float(np.sqrt(np.sum(self.lattice.sobolev_weights(s) * np.abs(self.coeffs) ** 2)))

    def to_spectrum(self, grid: Grid) -> np.ndarray:
        """Full FFT-layout array holding these coefficients (zero mode empty)."""
        out = np.zeros(grid.dims, dtype=complex)
        out[self.lattice.grid_positions(grid.n)] = self.coeffs
        return out

    @classmethod
    def from_spectrum(cls, lattice: Lattice, grid: Grid, spec: np.ndarray) -> "SpectralField":
        return cls(lattice, spec[lattice.grid_positions(grid.n)])

    def to_grid(self, grid: Grid) -> np.ndarray:
        return grid.field(self.to_spectrum(grid))

    def is_real_field(self, tol: float = 1e-12) -> bool:
        """True if the coefficients are those of a real function."""
        c = self.coeffs
        return bool(np.abs(c - np.conj(c[self.lattice.neg_index])).max(initial=0.0) <= tol)

    def write_csv(self, path) -> None:
        d = self.lattice.shape.d
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"j{k + 1}" for k in range(d)] + ["re", "im"])
            for j, c in zip(self.lattice.points, self.coeffs):
                w.writerow([*map(int, j), repr(float(c.real)), repr(float(c.imag))])

    @classmethod
    def read_csv(cls, path, lattice: Lattice) -> "SpectralField":
        d = lattice.shape.d
        mapping = {}
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            next(rows)
            for row in rows:
                mapping[tuple(int(v) for v in row[:d])] = complex(float(row[d]), float(row[d + 1]))
        return cls.from_mapping(lattice, mapping)


@dataclass
class GaugeState:
    """Gauge variables ``(alpha, theta, z)``; ``theta`` is kept unwrapped."""

    alpha: float
    theta: float
    z: SpectralField

    def mass(self) -> float:
        return self.alpha**2 + self.z.mass()


def madelung_forward(f: RealFieldPair, p: ModelParams) -> np.ndarray:
    """``psi = sqrt(m + rho) exp(i phi / hbar)`` on the grid."""
    dens = p.mass + f.rho
    if np.any(dens <= 0):
        raise ValueError("density m + rho must be positive")
    return np.sqrt(dens) * np.exp(1j * f.phi / p.hbar)


def madelung_inverse(psi: np.ndarray, grid: Grid, p: ModelParams) -> RealFieldPair:
    """Recover ``(rho, phi)`` from ``psi``; ``phi`` is fixed up to a constant.

    The phase is measured relative to ``arg(mean psi)`` with a two-argument
    arctangent. Raises ``ValueError`` if ``psi`` vanishes or wraps around
    the origin relative to that reference.
    """
    psi = np.asarray(psi, dtype=complex)
    dens = np.abs(psi) ** 2
    if dens.min() <= 0:
        raise ValueError("psi vanishes somewhere; the phase is undefined")
    ref = np.angle(psi.mean())
    rotated = psi * np.exp(-1j * ref)
    if rotated.real.min() <= 0:
        raise ValueError("psi leaves the half-plane around its mean phase")
    rho = dens - p.mass
    rho = rho - rho.mean() if abs(rho.mean()) <= 1e-9 * max(1.0, p.mass) else rho
    phi = p.hbar * (ref + np.angle(rotated))
    return RealFieldPair(rho, phi, grid)


def gauge_reduce(psi: np.ndarray, grid: Grid, lattice: Lattice | None = None) -> GaugeState:
    """Split ``psi`` into ``(alpha, theta, z)``.

    With the default lattice (every grid mode) the split is a pure
    rearrangement of the Fourier coefficients. A smaller lattice discards
    the modes outside it.
    """
    spec = grid.spectrum(psi)
    c0 = spec.flat[0]
    if abs(c0) <= 1e-14 * np.sqrt(np.sum(np.abs(spec) ** 2)):
        raise ValueError("vanishing zero mode: theta is undefined")
    lattice = Lattice.from_grid(grid) if lattice is None else lattice
    theta = -float(np.angle(c0))
    z = SpectralField.from_spectrum(lattice, grid, spec * np.exp(1j * theta))
    return GaugeState(float(abs(c0)), theta, z)


def reconstruct(state: GaugeState, grid: Grid) -> np.ndarray:
    """``psi = (alpha + z) exp(-i theta)``."""
    spec = state.z.to_spectrum(grid)
    spec.flat[0] = state.alpha
    return grid.field(spec) * np.exp(-1j * state.theta)


def alpha_from_z(z: SpectralField, p: ModelParams) -> float:
    """Zero-mode amplitude ``sqrt(m - sum |z_j|^2)`` fixed by mass conservation."""
    rest = p.mass - z.mass()
    if rest <= 0:
        raise ValueError("sum |z_j|^2 exceeds the mass m")
    return float(np.sqrt(rest))


def _excess(alpha: float, zg: np.ndarray, zmass: float, p: ModelParams) -> np.ndarray:
    """``|alpha + z|^2 - m`` without cancellation, assuming ``alpha^2 = m - zmass``."""
    return 2 * alpha * zg.real + np.abs(zg) ** 2 - zmass


def theta_rate(state: GaugeState, grid: Grid, p: ModelParams) -> float:
    """``d theta/dt = mean(g(|alpha+z|^2) Re(alpha+z)) / (alpha hbar)``."""
    if not state.alpha > 0:
        raise ValueError("alpha must be positive")
    zg = state.z.to_grid(grid)
    u = state.alpha + zg
    exc = (state.alpha**2 - p.mass) + 2 * state.alpha * zg.real + np.abs(zg) ** 2
    return float(np.mean(p.g_excess(exc) * u.real) / (state.alpha * p.hbar))


def sobolev_norm(u, s: float, grid: Grid | None = None) -> float:
    """H^s norm of a :class:`SpectralField` or of a grid field."""
    if isinstance(u, SpectralField):
        return u.sobolev_norm(s)
    if grid is None:
        raise ValueError("a grid is required for grid fields")
    return grid.sobolev_norm(u, s)


def reduced_energy(z: SpectralField, grid: Grid, p: ModelParams) -> float:
    """Exact value of ``K_m(z)`` (zero at ``z = 0``)."""
    alpha = alpha_from_z(z, p)
    kin = 0.5 * p.hbar * np.sum(z.lattice.norm_sq_a * np.abs(z.coeffs) ** 2)
    exc = _excess(alpha, z.to_grid(grid), z.mass(), p)
    return float(kin + np.mean(p.G_excess(exc)) / p.hbar)


def reduced_gradient(z: SpectralField, grid: Grid, p: ModelParams) -> SpectralField:
    """``dK_m/d conj(z_j)`` on the lattice of ``z``; the flow is ``i z' = grad``."""
    alpha = alpha_from_z(z, p)
    zg = z.to_grid(grid)
    u = alpha + zg
    gu = p.g_excess(_excess(alpha, zg, z.mass(), p))
    nl = SpectralField.from_spectrum(z.lattice, grid, grid.spectrum(gu * u)).coeffs
    corr = np.mean(gu * u.real) / alpha
    out = 0.5 * p.hbar * z.lattice.norm_sq_a * z.coeffs + (nl - corr * z.coeffs) / p.hbar
    return SpectralField(z.lattice, out)


def hamiltonian(psi: np.ndarray, grid: Grid, p: ModelParams) -> float:
    """``mean((hbar/2)|grad psi|^2 + G(|psi|^2)/hbar)`` with anisotropic gradient."""
    spec = grid.spectrum(psi)
    kin = 0.5 * p.hbar * np.sum(grid.norm_sq_a * np.abs(spec) ** 2)
    return float(kin + np.mean(p.G(np.abs(psi) ** 2)) / p.hbar)
