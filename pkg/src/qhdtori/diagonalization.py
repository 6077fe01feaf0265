"""Per-mode symplectic change of variables diagonalising the linear flow.

Linearising the reduced flow at ``z = 0`` couples ``z_j`` with
``conj(z_{-j})``:

    i d/dt (z_j, conj z_{-j}) = [[E, c], [-c, -E]] (z_j, conj z_{-j}),

with ``E = (hbar/2)|j|_a^2 + c`` and ``c = m g'(m) / hbar``. Its eigenvalues
are ``+-omega(j)``. Setting ``A = omega + E`` and ``n = 1/sqrt(2 omega A)``,
the block

    C_j = n [[A, -c], [-c, A]],  C_j^{-1} = n [[A, c], [c, A]]

has unit determinant and ``w = C^{-1} z`` evolves by ``i w' = omega w``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dispersion import ModelParams, omega_from_norm_sq
from .lattice import Lattice, TorusShape, anisotropic_norm_sq
from .madelung import SpectralField

__all__ = [
    "ModeMatrix",
    "ModeMatrices",
    "mode_matrix",
    "to_w",
    "to_z",
    "verify_diagonalization",
    "linear_block",
    "operator_norm_bound",
]


def _block_params(nsq, p: ModelParams):
    om = omega_from_norm_sq(nsq, p)
    c = p.mass * p.g1 / p.hbar
    A = om + 0.5 * p.hbar * nsq + c
    n = 1.0 / np.sqrt(2.0 * om * A)
    return om, A, c, n


@dataclass(frozen=True)
class ModeMatrix:
    """The 2x2 block of ``C`` at one lattice point."""

    j: tuple[int, ...]
    entries: np.ndarray
    a_val: float
    norm_factor: float
    coupling: float
    omega: float

    @property
    def inverse(self) -> np.ndarray:
        n, A, c = self.norm_factor, self.a_val, self.coupling
        return n * np.array([[A, c], [c, A]])

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.entries))


def mode_matrix(j, shape: TorusShape, p: ModelParams) -> ModeMatrix:
    nsq = anisotropic_norm_sq(j, shape)
    if nsq == 0:
        raise ValueError("the zero mode has no mode matrix")
    om, A, c, n = _block_params(nsq, p)
    C = n * np.array([[A, -c], [-c, A]])
    return ModeMatrix(tuple(int(v) for v in j), C, float(A), float(n), float(c), float(om))


def linear_block(j, shape: TorusShape, p: ModelParams) -> np.ndarray:
    """Matrix ``L_j`` of the linearised flow ``i d/dt (z_j, conj z_{-j}) = L_j (.)``."""
    nsq = anisotropic_norm_sq(j, shape)
    c = p.mass * p.g1 / p.hbar
    E = 0.5 * p.hbar * nsq + c
    return np.array([[E, c], [-c, -E]])


def verify_diagonalization(j, shape: TorusShape, p: ModelParams) -> float:
    """Max-abs defect of ``C_j^{-1} L_j C_j`` from ``diag(omega, -omega)``."""
    M = mode_matrix(j, shape, p)
    D = M.inverse @ linear_block(j, shape, p) @ M.entries
    return float(np.abs(D - np.diag([M.omega, -M.omega])).max())


@dataclass(frozen=True, eq=False)
class ModeMatrices:
    """Vectorised blocks over a symmetric lattice.

    In signed notation ``z^sigma_j = a_j w^sigma_j + b_j w^{-sigma}_{-j}``
    with ``a = n A`` and ``b = -n c`` (``w^+ = w``, ``w^- = conj w``).
    """

    lattice: Lattice
    omega: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @classmethod
    def build(cls, lattice: Lattice, p: ModelParams) -> "ModeMatrices":
        om, A, c, n = _block_params(lattice.norm_sq_a, p)
        return cls(lattice, om, n * A, -n * c * np.ones_like(A))

    def to_w(self, z: np.ndarray) -> np.ndarray:
        neg = self.lattice.neg_index
        return self.a * z - self.b * np.conj(z[neg])

    def to_z(self, w: np.ndarray) -> np.ndarray:
        neg = self.lattice.neg_index
        return self.a * w + self.b * np.conj(w[neg])

    def norm_bound(self) -> float:
        """Exact operator norm ``max_j sqrt((A + c)/(A - c))`` of ``C^{+-1}``."""
        return float(np.max(self.a - self.b))


def _matrices(lattice: Lattice, p: ModelParams) -> ModeMatrices:
    return ModeMatrices.build(lattice, p)


def to_w(z: SpectralField, p: ModelParams, mats: ModeMatrices | None = None) -> SpectralField:
    """``[w, conj w] = C^{-1} [z, conj z]`` mode by mode."""
    mats = mats or _matrices(z.lattice, p)
    return SpectralField(z.lattice, mats.to_w(z.coeffs))


def to_z(w: SpectralField, p: ModelParams, mats: ModeMatrices | None = None) -> SpectralField:
    """``[z, conj z] = C [w, conj w]`` mode by mode."""
    mats = mats or _matrices(w.lattice, p)
    return SpectralField(w.lattice, mats.to_z(w.coeffs))


def operator_norm_bound(p: ModelParams) -> float:
    """Bound ``1 + sqrt(kappa) beta`` on the norms of ``C`` and its inverse."""
    return 1.0 + np.sqrt(p.kappa) * p.beta
