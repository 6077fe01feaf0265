"""Lattice geometry of the anisotropic torus.

Fields live on the standard torus ``[0, 2*pi)^d`` and the anisotropy enters
only through the Fourier multiplier ``|j|_a^2 = sum_k a_k j_k^2`` with
``a_k = nu_k^2`` the squared side ratios.

All Fourier coefficients in this package use the mean-value convention
``u(x) = sum_j u_j exp(i j.x)``, ``u_j = mean(u exp(-i j.x))``, so that
``sum_j |u_j|^2`` is the spatial mean of ``|u|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "TorusShape",
    "Lattice",
    "Grid",
    "anisotropic_norm_sq",
    "japanese_bracket",
    "ball",
    "mu_ordering",
]

A_MIN, A_MAX = 1.0, 4.0


@dataclass(frozen=True)
class TorusShape:
    """Dimension and anisotropy vector ``a = nu**2`` of a rectangular torus.

    ``a`` is accepted in the closed box ``[1, 4]^d`` so that the isotropic
    torus ``a = (1, ..., 1)`` can be used as a reference configuration.
    """

    a: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        if len(a) < 1:
            raise ValueError("torus dimension must be >= 1")
        if not all(A_MIN <= v <= A_MAX for v in a):
            raise ValueError(f"anisotropy entries must lie in [1, 4], got {a}")
        object.__setattr__(self, "a", a)

    @property
    def d(self) -> int:
        return len(self.a)

    @property
    def nu(self) -> tuple[float, ...]:
        return tuple(float(np.sqrt(v)) for v in self.a)

    @classmethod
    def from_nu(cls, nu) -> "TorusShape":
        return cls(tuple(float(v) ** 2 for v in nu))

    @classmethod
    def isotropic(cls, d: int) -> "TorusShape":
        return cls((1.0,) * d)

    def to_dict(self) -> dict:
        return {"dim": self.d, "a": list(self.a)}

    @classmethod
    def from_dict(cls, data: dict) -> "TorusShape":
        shape = cls(tuple(data["a"]))
        if "dim" in data and int(data["dim"]) != shape.d:
            raise ValueError(f"dim={data['dim']} does not match len(a)={shape.d}")
        return shape


def _as_points(j) -> np.ndarray:
    arr = np.asarray(j)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValueError("lattice points must have integer entries")
        arr = arr.astype(np.int64)
    return arr


def anisotropic_norm_sq(j, shape: TorusShape):
    """``sum_k a_k j_k^2``; vectorised over leading axes of ``j``."""
    arr = _as_points(j)
    if arr.shape[-1] != shape.d:
        raise ValueError(f"expected points of dimension {shape.d}, got {arr.shape[-1]}")
    out = (arr.astype(float) ** 2 * np.asarray(shape.a)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def japanese_bracket(j):
    """``sqrt(1 + |j|^2)`` for nonzero lattice points (vectorised)."""
    arr = _as_points(j)
    sq = (arr.astype(float) ** 2).sum(axis=-1)
    if np.any(sq == 0):
        raise ValueError("the zero mode is not a dynamical index")
    out = np.sqrt(1.0 + sq)
    return float(out) if out.ndim == 0 else out


def ball(J_max: int, shape: TorusShape | int) -> np.ndarray:
    """All nonzero ``j`` with ``max_k |j_k| <= J_max``, lexicographically sorted.

    Returns an ``(P, d)`` integer array.
    """
    if J_max < 1:
        raise ValueError("J_max must be >= 1")
    d = shape if isinstance(shape, int) else shape.d
    r = np.arange(-J_max, J_max + 1)
    pts = np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1).reshape(-1, d)
    # meshgrid with 'ij' already yields lexicographic order
    return pts[np.any(pts != 0, axis=1)]


def mu_ordering(j1, j2, j3) -> tuple[float, float, float]:
    """Euclidean norms of three lattice points in decreasing order."""
    norms = sorted((float(np.linalg.norm(_as_points(j))) for j in (j1, j2, j3)), reverse=True)
    return norms[0], norms[1], norms[2]


@dataclass(frozen=True, eq=False)
class Lattice:
    """A finite index set of nonzero lattice points with O(1) vectorised lookup.

    Built either as ``Lattice.ball(J_max, shape)`` (symmetric under ``j -> -j``)
    or as ``Lattice.from_grid(grid)`` (every nonzero FFT mode of the grid).
    """

    shape: TorusShape
    points: np.ndarray
    J_max: int
    symmetric: bool = True
    _offset: int = field(init=False, repr=False)
    _lut: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.int64)
        object.__setattr__(self, "points", pts)
        off = int(np.abs(pts).max()) if pts.size else 0
        lut = -np.ones((2 * off + 1,) * self.shape.d, dtype=np.int64)
        lut[tuple((pts + off).T)] = np.arange(len(pts))
        object.__setattr__(self, "_offset", off)
        object.__setattr__(self, "_lut", lut)

    @classmethod
    def ball(cls, J_max: int, shape: TorusShape) -> "Lattice":
        return cls(shape, ball(J_max, shape), J_max, True)

    @classmethod
    def from_grid(cls, grid: "Grid") -> "Lattice":
        k = grid.wavenumbers.reshape(-1, grid.shape.d)
        k = k[np.any(k != 0, axis=1)]
        order = np.lexsort(k.T[::-1])
        return cls(grid.shape, k[order], grid.n // 2, False)

    def __len__(self) -> int:
        return len(self.points)

    def index(self, j) -> np.ndarray:
        """Positions of points ``j`` (shape ``(..., d)``); -1 where absent or zero."""
        j = np.asarray(j, dtype=np.int64)
        inside = np.all(np.abs(j) <= self._offset, axis=-1)
        out = np.full(j.shape[:-1], -1, dtype=np.int64)
        if np.any(inside):
            jj = j[inside] + self._offset
            out[inside] = self._lut[tuple(jj.T)]
        return out

    @cached_property
    def neg_index(self) -> np.ndarray:
        """Position of ``-j`` for every point (requires a symmetric lattice)."""
        idx = self.index(-self.points)
        if np.any(idx < 0):
            raise ValueError("lattice is not symmetric under j -> -j")
        return idx

    @cached_property
    def norm_sq_a(self) -> np.ndarray:
        return anisotropic_norm_sq(self.points, self.shape)

    @cached_property
    def norms(self) -> np.ndarray:
        return np.sqrt((self.points.astype(float) ** 2).sum(axis=1))

    @cached_property
    def brackets(self) -> np.ndarray:
        return np.sqrt(1.0 + self.norms**2)

    def sobolev_weights(self, s: float) -> np.ndarray:
        """``<j>^{2s}`` on the lattice."""
        return (1.0 + self.norms**2) ** s

    @cached_property
    def triads(self):
        from .hamiltonians import TriadSet

        return TriadSet.build(self)

    def grid_positions(self, n: int) -> tuple[np.ndarray, ...]:
        """FFT array indices of every lattice point on an ``n^d`` grid."""
        if 2 * self.J_max + 1 > n and self.symmetric:
            raise ValueError(f"grid size {n} cannot resolve J_max={self.J_max}")
        return tuple((self.points % n).T)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform ``n^d`` collocation grid on ``[0, 2*pi)^d``."""

    shape: TorusShape
    n: int

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError("grid size must be an even integer >= 2")

    @classmethod
    def for_lattice(cls, shape: TorusShape, J_max: int, factor: int = 4) -> "Grid":
        """Smallest power-of-two grid with ``n >= factor * J_max``."""
        n = 1 << int(np.ceil(np.log2(max(factor * J_max, 2))))
        return cls(shape, n)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.n,) * self.shape.d

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        x = 2 * np.pi * np.arange(self.n) / self.n
        return tuple(np.meshgrid(*([x] * self.shape.d), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Signed integer wavenumber of every FFT slot, shape ``dims + (d,)``."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
        return np.stack(np.meshgrid(*([k] * self.shape.d), indexing="ij"), axis=-1)

    @cached_property
    def norm_sq_a(self) -> np.ndarray:
        return (self.wavenumbers.astype(float) ** 2 * np.asarray(self.shape.a)).sum(axis=-1)

    @cached_property
    def norm_sq(self) -> np.ndarray:
        return (self.wavenumbers.astype(float) ** 2).sum(axis=-1)

    def sobolev_weights(self, s: float) -> np.ndarray:
        return (1.0 + self.norm_sq) ** s

    def spectrum(self, u: np.ndarray) -> np.ndarray:
        """Mean-value normalised Fourier coefficients of a grid field."""
        return np.fft.fftn(u) / self.n**self.shape.d

    def field(self, c: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`spectrum` (complex output)."""
        return np.fft.ifftn(c) * self.n**self.shape.d

    def mean(self, u: np.ndarray):
        return u.mean()

    def sobolev_norm(self, u: np.ndarray, s: float, spectral: bool = False) -> float:
        """``(sum <j>^{2s} |u_j|^2)^{1/2}`` of a grid field (or its spectrum)."""
        c = u if spectral else self.spectrum(u)
        return float(np.sqrt(np.sum(self.sobolev_weights(s) * np.abs(c) ** 2)))

    def dealias_mask(self, fraction: float = 2.0 / 3.0) -> np.ndarray:
        kmax = fraction * (self.n // 2)
        return np.all(np.abs(self.wavenumbers) <= kmax, axis=-1)
