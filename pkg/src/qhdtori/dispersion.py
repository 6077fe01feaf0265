"""Physical constants, the linear frequency and signed small divisors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import TorusShape, anisotropic_norm_sq

__all__ = [
    "ModelParams",
    "omega",
    "omega_from_norm_sq",
    "omega_asymptotic",
    "small_divisor",
    "check_signs",
]


@dataclass(frozen=True)
class ModelParams:
    """Constants of the model.

    Parameters
    ----------
    kappa : float
        Capillarity, ``hbar = 2 sqrt(kappa)``.
    mass : float
        Mean density ``m``.
    g_coeffs : tuple of float
        Taylor coefficients ``(g_1, g_2, ...)`` with ``g(m + u) = sum g_k u^k``.
    allow_degenerate : bool
        Permit ``g_1 == 0``. Only meant for tests of limiting cases, the
        simulation drivers refuse such parameters.
    """

    kappa: float = 1.0
    mass: float = 1.0
    g_coeffs: tuple[float, ...] = (1.0,)
    allow_degenerate: bool = False

    def __post_init__(self):
        g = tuple(float(c) for c in np.atleast_1d(self.g_coeffs))
        object.__setattr__(self, "g_coeffs", g)
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not g:
            raise ValueError("g_coeffs must contain at least g_1")
        if self.allow_degenerate:
            if g[0] < 0:
                raise ValueError("g_1 must be non-negative")
        elif not g[0] > 0:
            raise ValueError("ellipticity requires g_1 = g'(m) > 0")

    @property
    def hbar(self) -> float:
        return 2.0 * float(np.sqrt(self.kappa))

    @property
    def lam(self) -> float:
        return 1.0 / self.hbar

    @property
    def g1(self) -> float:
        return self.g_coeffs[0]

    @property
    def g2(self) -> float:
        return self.g_coeffs[1] if len(self.g_coeffs) > 1 else 0.0

    @property
    def beta(self) -> float:
        return self.mass * self.g1 / self.kappa

    def g(self, rho):
        """``g(rho) = sum_k g_k (rho - m)^k``; vanishes at ``rho = m``."""
        return self.g_excess(np.asarray(rho, dtype=float) - self.mass)

    def G(self, rho):
        """Primitive of ``g`` normalised by ``G(m) = 0``."""
        return self.G_excess(np.asarray(rho, dtype=float) - self.mass)

    def g_excess(self, u):
        """``g(m + u)`` from the density excess ``u``."""
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for c in reversed(self.g_coeffs):
            out = (out + c) * u
        return out

    def G_excess(self, u):
        """``G(m + u)`` from the density excess ``u``."""
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for k in range(len(self.g_coeffs), 0, -1):
            out = (out + self.g_coeffs[k - 1] / (k + 1)) * u
        return out * u

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "mass": self.mass, "g_coeffs": list(self.g_coeffs)}

    @classmethod
    def from_dict(cls, data: dict, allow_degenerate: bool = False) -> "ModelParams":
        return cls(
            float(data.get("kappa", 1.0)),
            float(data.get("mass", 1.0)),
            tuple(data.get("g_coeffs", (1.0,))),
            allow_degenerate,
        )


def omega_from_norm_sq(nsq, p: ModelParams):
    """``sqrt(kappa n^2 + m g_1 n)`` for ``n = |j|_a^2``."""
    nsq = np.asarray(nsq, dtype=float)
    return np.sqrt(p.kappa * nsq**2 + p.mass * p.g1 * nsq)


def omega(j, shape: TorusShape, p: ModelParams):
    """Linear frequency ``sqrt(hbar^2/4 |j|_a^4 + m g'(m) |j|_a^2)``.

    Vectorised over leading axes of ``j``; the zero mode is rejected.
    """
    nsq = anisotropic_norm_sq(j, shape)
    if np.any(np.asarray(nsq) == 0):
        raise ValueError("omega is defined on nonzero lattice points only")
    out = omega_from_norm_sq(nsq, p)
    return float(out) if np.ndim(out) == 0 else out


def omega_asymptotic(j, shape: TorusShape, p: ModelParams) -> float:
    """Large-frequency expansion ``sqrt(kappa) (n + beta/2 - beta^2/(8 n))``.

    Raises
    ------
    ValueError
        If ``n = |j|_a^2 <= beta``, where the expansion is meaningless.
    """
    nsq = anisotropic_norm_sq(j, shape)
    b = p.beta
    if nsq <= b:
        raise ValueError(f"|j|_a^2 = {nsq} does not exceed beta = {b}")
    return float(np.sqrt(p.kappa) * (nsq + b / 2 - b**2 / (8 * nsq)))


def check_signs(sigma) -> tuple[int, int, int]:
    s = tuple(int(v) for v in sigma)
    if len(s) != 3 or any(v not in (1, -1) for v in s):
        raise ValueError(f"sign pattern must be three entries in {{+1, -1}}, got {sigma}")
    return s


def small_divisor(sigma, j1, j2, j3, shape: TorusShape, p: ModelParams) -> float:
    """Signed divisor ``sum_i sigma_i omega(j_i)`` of a momentum-conserving triple."""
    s = check_signs(sigma)
    js = [np.asarray(j, dtype=np.int64) for j in (j1, j2, j3)]
    if np.any(sum(si * ji for si, ji in zip(s, js)) != 0):
        raise ValueError("momentum condition sigma_1 j_1 + sigma_2 j_2 + sigma_3 j_3 = 0 violated")
    if any(not np.any(ji) for ji in js):
        raise ValueError("zero mode is not a dynamical index")
    return float(sum(si * omega(ji, shape, p) for si, ji in zip(s, js)))
