"""Modified Sobolev energy ``E_s = N_s + E_3``.

``E_3`` removes the cubic part of ``dN_s/dt`` except for the high-frequency
tail of the opposite-sign interactions:

    E_3 = ad_{K2}^{-1} ( {N_s, K3^{(+1)}} + {N_s, (K3^{(-1)})^{<=N}} ),

so that ``{N_s, K3} + {E_3, K2} = {N_s, (K3^{(-1)})^{>N}}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagonalization import ModeMatrices
from .dispersion import ModelParams
from .hamiltonians import (
    QuadraticDiagonal,
    TrilinearHamiltonian,
    ad_inverse,
    min_divisor,
    poisson_general,
    poisson_with_diagonal,
    split_sign,
    split_truncate,
)
from .lattice import Grid
from .madelung import SpectralField, reduced_gradient

__all__ = [
    "ModifiedEnergy",
    "build_E3",
    "cancellation_terms",
    "verify_cancellation",
    "energy_value",
    "drift_series",
    "exact_rates",
    "cubic_bracket",
    "coefficient_bound_constant",
    "default_cutoff",
    "FullVectorField",
]


@dataclass
class ModifiedEnergy:
    """``N_s + E_3`` together with the data used to build it."""

    s: float
    N: float
    E3: TrilinearHamiltonian
    Ns: QuadraticDiagonal
    provenance: dict = field(default_factory=dict)
    K3: TrilinearHamiltonian | None = None
    tail: TrilinearHamiltonian | None = None

    def __call__(self, w) -> float:
        return energy_value(self, w)

    def gradient(self, w) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.Ns.gradient(w)
        c, e = self.E3.gradient(w)
        return a + c, b + e


def default_cutoff(epsilon: float, d: int) -> float:
    """``N = epsilon^(-1/(d-1))``."""
    if d < 2:
        raise ValueError("the cutoff rule needs d >= 2")
    return float(epsilon ** (-1.0 / (d - 1)))


def _parts(K3_w: TrilinearHamiltonian, N: float):
    plus, minus = split_sign(K3_w)
    low, high = split_truncate(minus, N)
    return plus, low, high


def build_E3(
    K3_w: TrilinearHamiltonian, s: float, N: float, p: ModelParams, floor: float | None = None
) -> ModifiedEnergy:
    """Construct ``E_3``; raises :class:`ResonanceError` below ``floor``."""
    lat = K3_w.lattice
    Ns = QuadraticDiagonal.sobolev(lat, s)
    K2 = QuadraticDiagonal.K2(lat, p)
    plus, low, high = _parts(K3_w, N)
    rhs = poisson_with_diagonal(Ns, plus + low)
    floor = 1e-12 * np.sqrt(p.kappa) if floor is None else floor
    E3 = ad_inverse(rhs, K2, floor)
    prov = {
        "J_max": lat.J_max,
        "floor": floor,
        "min_divisor": min_divisor(rhs, K2),
        "support": int(np.count_nonzero(rhs.coeffs)),
    }
    return ModifiedEnergy(s, N, E3, Ns, prov, K3_w, poisson_with_diagonal(Ns, high))


def cancellation_terms(K3_w, E3, s, N, p):
    """Left side ``{N_s, K3} + {E3, K2}`` and right side ``{N_s, K3^{(-1),>N}}``."""
    lat = K3_w.lattice
    E3 = E3.E3 if isinstance(E3, ModifiedEnergy) else E3
    Ns = QuadraticDiagonal.sobolev(lat, s)
    K2 = QuadraticDiagonal.K2(lat, p)
    _, _, high = _parts(K3_w, N)
    lhs = poisson_with_diagonal(Ns, K3_w) - poisson_with_diagonal(K2, E3)
    return lhs, poisson_with_diagonal(Ns, high)


def verify_cancellation(K3_w, E3, s, N, p, relative: bool = False) -> float:
    """Max coefficientwise residual of the cancellation identity.

    With ``relative=True`` the residual is divided by ``max |{N_s, K3}|``,
    the natural scale of the terms being cancelled.
    """
    lhs, rhs = cancellation_terms(K3_w, E3, s, N, p)
    res = float(np.abs(lhs.coeffs - rhs.coeffs).max(initial=0.0))
    if relative:
        scale = poisson_with_diagonal(QuadraticDiagonal.sobolev(K3_w.lattice, s), K3_w).max_abs()
        return res / scale if scale > 0 else res
    return res


def energy_value(me: ModifiedEnergy, w) -> float:
    return me.Ns.evaluate(w) + me.E3.evaluate(w)


@dataclass(frozen=True, eq=False)
class FullVectorField:
    """Exact reduced vector field in ``w`` coordinates (Galerkin on a ball)."""

    mats: ModeMatrices
    grid: Grid
    p: ModelParams

    def __call__(self, w: np.ndarray) -> np.ndarray:
        z = SpectralField(self.mats.lattice, self.mats.to_z(w))
        zdot = -1j * reduced_gradient(z, self.grid, self.p).coeffs
        return self.mats.to_w(zdot)


def exact_rates(me: ModifiedEnergy, w: np.ndarray, field: FullVectorField) -> tuple[float, float]:
    """Instantaneous ``(dE_s/dt, dN_s/dt)`` along the full flow at state ``w``.

    ``dE_s/dt = {N_s, K3^{(-1),>N}} + {E_3, K3} + {N_s + E_3, K^{>=4}}``: the
    cubic terms ``{N_s, K3} + {E_3, K2}`` are cancelled at the level of
    coefficients instead of numerically, and the quartic tail is the exact
    field minus its linear and cubic parts.
    """
    w = np.asarray(w)
    wdot = field(w)
    gN, _ = me.Ns.gradient(w)
    dN = float(2 * np.real(np.sum(gN * wdot)))
    if me.K3 is None:
        gE, _ = me.gradient(w)
        return float(2 * np.real(np.sum(gE * wdot))), dN
    v3 = me.K3.vector_field(w).coeffs
    v4 = wdot + 1j * field.mats.omega * w - v3
    gE3, _ = me.E3.gradient(w)
    dE = me.tail.evaluate(w) + 2 * np.real(np.sum(gE3 * v3) + np.sum((gN + gE3) * v4))
    return float(dE), dN


def drift_series(me: ModifiedEnergy, trajectory, field: FullVectorField | None = None):
    """Time derivatives of ``E_s`` and ``N_s`` along a sampled trajectory.

    Parameters
    ----------
    trajectory : sequence of (t, w)
        Samples of the ``w`` coefficients.
    field : FullVectorField, optional
        If given, derivatives are evaluated exactly from the vector field at
        every sample. Otherwise centred differences of the sampled energies
        are used, which requires at least three samples.

    Returns
    -------
    list of (t, dE/dt, dN/dt)
    """
    ts = np.array([t for t, _ in trajectory], dtype=float)
    ws = [w.coeffs if isinstance(w, SpectralField) else np.asarray(w) for _, w in trajectory]
    if field is not None:
        return [(float(t), *exact_rates(me, w, field)) for t, w in zip(ts, ws)]
    if len(ts) < 3:
        raise ValueError("centred differences need at least three samples")
    E = np.array([energy_value(me, w) for w in ws])
    Nv = np.array([me.Ns.evaluate(w) for w in ws])
    dE = np.gradient(E, ts)
    dN = np.gradient(Nv, ts)
    return [(float(t), float(a), float(b)) for t, a, b in zip(ts[1:-1], dE[1:-1], dN[1:-1])]


def cubic_bracket(me: ModifiedEnergy, K3_w: TrilinearHamiltonian, p: ModelParams, w) -> float:
    """``{N_s + E_3, K2 + K3}(w)`` through the coefficient tables."""
    K2 = QuadraticDiagonal.K2(K3_w.lattice, p)
    terms = (
        poisson_general(me.Ns, K3_w, w),
        poisson_general(me.E3, K2, w),
        poisson_general(me.E3, K3_w, w),
    )
    return float(sum(terms))


def coefficient_bound_constant(me: ModifiedEnergy, M: float, d: int) -> float:
    """Smallest ``C`` with ``|E3| <= C N^(d-2) log^(d+1)(1+N) mu_3^(M+1) mu_1^(2s)``."""
    E3 = me.E3
    supp = E3.support()
    if supp.size == 0:
        return 0.0
    mu = E3.triads.mu[supp]
    N = me.N
    scale = N ** (d - 2) * np.log(1 + N) ** (d + 1) * mu[:, 2] ** (M + 1) * mu[:, 0] ** (2 * me.s)
    return float(np.max(np.abs(E3.coeffs[supp]) / scale))
