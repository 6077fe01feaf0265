"""Trilinear Hamiltonians on a finite lattice.

A trilinear Hamiltonian is

    G(w) = sum_{sigma, j} G_{sigma, j} w^{sigma_1}_{j_1} w^{sigma_2}_{j_2} w^{sigma_3}_{j_3}

over ordered signed triples with ``sigma_1 j_1 + sigma_2 j_2 + sigma_3 j_3 = 0``,
where ``w^+ = w`` and ``w^- = conj(w)``. Coefficients are symmetric under
simultaneous permutation of ``(sigma, j)``, so only one sorted representative
per permutation class is stored, together with the class size.

Every slot ``(sigma, j)`` is encoded as the integer ``2*index(j) + (sigma > 0)``.
All Hamiltonians on one lattice share a :class:`TriadSet` and store a dense
complex vector aligned with it.

The Poisson bracket is ``{H, G} = -i sum_k (dH/dw_k dG/dconj(w_k) -
dH/dconj(w_k) dG/dw_k)``, the flow of ``H`` is ``w' = -i dH/dconj(w)`` and
``dF/dt = {F, H}`` along it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .diagonalization import ModeMatrices
from .dispersion import ModelParams, check_signs, omega_from_norm_sq
from .lattice import Grid, Lattice
from .madelung import SpectralField

__all__ = [
    "TriadSet",
    "TrilinearHamiltonian",
    "QuadraticDiagonal",
    "ResonanceError",
    "build_K3_z",
    "build_K3_w",
    "cubic_energy_grid",
    "conjugate_by_C",
    "split_truncate",
    "split_sign",
    "poisson_with_diagonal",
    "ad_inverse",
    "evaluate",
    "vector_field",
    "poisson_general",
]


class ResonanceError(ArithmeticError):
    """A small divisor fell below the admissible floor."""

    def __init__(self, message: str, triple=None, divisor: float | None = None):
        super().__init__(message)
        self.triple = triple
        self.divisor = divisor


def _canonical(codes: np.ndarray) -> np.ndarray:
    return np.sort(codes, axis=-1)


@dataclass(frozen=True, eq=False)
class TriadSet:
    """All momentum-conserving permutation classes of signed triples on a lattice."""

    lattice: Lattice
    codes: np.ndarray  # (n, 3) sorted slot codes
    keys: np.ndarray  # (n,) sorted integer keys
    mult: np.ndarray  # (n,) number of distinct orderings
    conj: np.ndarray  # (n,) index of the class with all signs flipped

    @property
    def base(self) -> int:
        return 2 * len(self.lattice)

    def encode(self, codes: np.ndarray) -> np.ndarray:
        c = _canonical(np.asarray(codes, dtype=np.int64))
        B = self.base
        return (c[..., 0] * B + c[..., 1]) * B + c[..., 2]

    def locate(self, codes: np.ndarray) -> np.ndarray:
        """Class indices of (unsorted) slot-code triples; -1 if absent."""
        k = self.encode(codes)
        pos = np.searchsorted(self.keys, k)
        pos = np.minimum(pos, len(self.keys) - 1)
        return np.where(self.keys[pos] == k, pos, -1)

    @classmethod
    def build(cls, lattice: Lattice) -> "TriadSet":
        pts = lattice.points
        P = len(pts)
        i1, i2 = np.meshgrid(np.arange(P), np.arange(P), indexing="ij")
        i1, i2 = i1.ravel(), i2.ravel()
        chunks = []
        for s1 in (1, -1):
            for s2 in (1, -1):
                for s3 in (1, -1):
                    j3 = -s3 * (s1 * pts[i1] + s2 * pts[i2])
                    i3 = lattice.index(j3)
                    ok = i3 >= 0
                    c = np.stack(
                        [2 * i1[ok] + (s1 > 0), 2 * i2[ok] + (s2 > 0), 2 * i3[ok] + (s3 > 0)], axis=1
                    )
                    chunks.append(c)
        codes = np.unique(_canonical(np.concatenate(chunks)), axis=0)
        B = 2 * P
        keys = (codes[:, 0] * B + codes[:, 1]) * B + codes[:, 2]
        order = np.argsort(keys)
        codes, keys = codes[order], keys[order]
        eq01 = codes[:, 0] == codes[:, 1]
        eq12 = codes[:, 1] == codes[:, 2]
        mult = np.where(eq01 & eq12, 1, np.where(eq01 | eq12, 3, 6))
        self = cls(lattice, codes, keys, mult, np.zeros(len(keys), dtype=np.int64))
        conj = self.locate(codes ^ 1)
        if np.any(conj < 0):
            raise RuntimeError("triad set is not closed under conjugation")
        object.__setattr__(self, "conj", conj)
        return self

    def __len__(self) -> int:
        return len(self.keys)

    @cached_property
    def idx(self) -> np.ndarray:
        return self.codes >> 1

    @cached_property
    def signs(self) -> np.ndarray:
        return np.where(self.codes & 1, 1, -1).astype(np.int64)

    @cached_property
    def points(self) -> np.ndarray:
        """Lattice points of every slot, shape ``(n, 3, d)``."""
        return self.lattice.points[self.idx]

    @cached_property
    def mu(self) -> np.ndarray:
        """Euclidean norms of the three slots sorted decreasingly, shape ``(n, 3)``."""
        return -np.sort(-self.lattice.norms[self.idx], axis=1)

    def sign_sum(self, q: np.ndarray) -> np.ndarray:
        """``sum_i sigma_i q(j_i)`` for a multiplier ``q`` on the lattice."""
        return (self.signs * q[self.idx]).sum(axis=1)

    @cached_property
    def top_two_equal(self) -> np.ndarray:
        """True where the two largest slots carry equal signs.

        Slots are ranked by Euclidean norm, then lexicographically by the
        lattice vector, then by sign with ``+`` above ``-``.
        """
        sq = (self.points.astype(np.int64) ** 2).sum(axis=2)
        lex = self._lex_rank[self.idx]
        # one integer key ordering by (|j|^2, lexicographic j, sign)
        key = (sq * len(self.lattice) + lex) * 2 + (self.signs > 0)
        top = np.argsort(-key, axis=1, kind="stable")[:, :2]
        s = np.take_along_axis(self.signs, top, axis=1)
        return s[:, 0] == s[:, 1]

    @cached_property
    def _lex_rank(self) -> np.ndarray:
        pts = self.lattice.points
        order = np.lexsort(pts.T[::-1])
        rank = np.empty(len(pts), dtype=np.int64)
        rank[order] = np.arange(len(pts))
        return rank

    def slot_values(self, w: np.ndarray) -> np.ndarray:
        """Vector ``x`` with ``x[2k] = conj(w_k)`` and ``x[2k+1] = w_k``."""
        x = np.empty(2 * len(w), dtype=complex)
        x[0::2] = np.conj(w)
        x[1::2] = w
        return x

    def describe(self, k: int) -> tuple:
        """``(sigma, j1, j2, j3)`` of class ``k`` as plain tuples."""
        sig = tuple(int(v) for v in self.signs[k])
        js = tuple(tuple(int(v) for v in j) for j in self.points[k])
        return (sig, *js)


@dataclass(eq=False)
class TrilinearHamiltonian:
    """Dense coefficient vector over a :class:`TriadSet`."""

    triads: TriadSet
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (len(self.triads),):
            raise ValueError("coefficient vector does not match the triad set")

    @classmethod
    def zeros(cls, lattice_or_triads) -> "TrilinearHamiltonian":
        t = lattice_or_triads if isinstance(lattice_or_triads, TriadSet) else lattice_or_triads.triads
        return cls(t, np.zeros(len(t), dtype=complex))

    @classmethod
    def random(cls, lattice: Lattice, rng, density: float = 1.0) -> "TrilinearHamiltonian":
        """Random real Hamiltonian with ``O(1)`` coefficients."""
        t = lattice.triads
        c = rng.standard_normal(len(t)) + 1j * rng.standard_normal(len(t))
        if density < 1.0:
            c *= rng.random(len(t)) < density
        return cls(t, c).realified()

    @property
    def lattice(self) -> Lattice:
        return self.triads.lattice

    @property
    def J_max(self) -> int:
        return self.lattice.J_max

    def realified(self) -> "TrilinearHamiltonian":
        """Project onto real Hamiltonians: ``G_{-sigma,j} = conj(G_{sigma,j})``."""
        c = 0.5 * (self.coeffs + np.conj(self.coeffs[self.triads.conj]))
        return TrilinearHamiltonian(self.triads, c)

    def reality_defect(self) -> float:
        c = self.coeffs
        return float(np.abs(c - np.conj(c[self.triads.conj])).max(initial=0.0))

    def set(self, sigma, j1, j2, j3, value: complex, real: bool = True) -> None:
        """Assign a class coefficient (and its conjugate class if ``real``)."""
        k = self._find(sigma, j1, j2, j3)
        self.coeffs[k] = value
        if real:
            self.coeffs[self.triads.conj[k]] = np.conj(value)

    def get(self, sigma, j1, j2, j3) -> complex:
        return complex(self.coeffs[self._find(sigma, j1, j2, j3)])

    def _find(self, sigma, j1, j2, j3) -> int:
        s = check_signs(sigma)
        lat = self.lattice
        idx = lat.index(np.array([j1, j2, j3]))
        if np.any(idx < 0):
            raise KeyError("lattice point outside the truncation")
        codes = 2 * idx + (np.array(s) > 0)
        k = int(self.triads.locate(codes[None, :])[0])
        if k < 0:
            raise KeyError(f"{(s, j1, j2, j3)} is not momentum conserving")
        return k

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coeffs)

    def __add__(self, other):
        return TrilinearHamiltonian(self.triads, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return TrilinearHamiltonian(self.triads, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return TrilinearHamiltonian(self.triads, c * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return TrilinearHamiltonian(self.triads, -self.coeffs)

    def copy(self):
        return TrilinearHamiltonian(self.triads, self.coeffs.copy())

    def max_abs(self) -> float:
        return float(np.abs(self.coeffs).max(initial=0.0))

    # evaluation ---------------------------------------------------------

    def _weights(self) -> np.ndarray:
        return self.triads.mult * self.coeffs

    def evaluate(self, w) -> float:
        wc = w.coeffs if isinstance(w, SpectralField) else np.asarray(w)
        x = self.triads.slot_values(wc)
        c = self.triads.codes
        return float(np.real(np.sum(self._weights() * x[c[:, 0]] * x[c[:, 1]] * x[c[:, 2]])))

    def gradient(self, w) -> tuple[np.ndarray, np.ndarray]:
        """``(dG/dw, dG/dconj(w))`` on the lattice."""
        wc = w.coeffs if isinstance(w, SpectralField) else np.asarray(w)
        x = self.triads.slot_values(wc)
        c = self.triads.codes
        wt = self._weights()
        B = self.triads.base
        g = np.zeros(B, dtype=complex)
        for slot, (p, q) in enumerate(((1, 2), (0, 2), (0, 1))):
            v = wt * x[c[:, p]] * x[c[:, q]]
            g += np.bincount(c[:, slot], weights=v.real, minlength=B)
            g += 1j * np.bincount(c[:, slot], weights=v.imag, minlength=B)
        return g[1::2], g[0::2]

    def vector_field(self, w) -> SpectralField:
        """Hamiltonian vector field ``-i dG/dconj(w)``."""
        _, dbar = self.gradient(w)
        return SpectralField(self.lattice, -1j * dbar)

    # export ---------------------------------------------------------------

    def write_csv(self, path, nonzero_only: bool = True) -> None:
        d = self.lattice.shape.d
        head = ["s1", "s2", "s3"] + [f"j{i}_{k}" for i in (1, 2, 3) for k in range(1, d + 1)] + ["re", "im"]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(head)
            rows = self.support() if nonzero_only else range(len(self.coeffs))
            for k in rows:
                sig, *js = self.triads.describe(int(k))
                c = self.coeffs[k]
                out.writerow([*sig, *(v for j in js for v in j), repr(float(c.real)), repr(float(c.imag))])


@dataclass(frozen=True, eq=False)
class QuadraticDiagonal:
    """``Q(w) = sum_j q(j) |w_j|^2`` with an even multiplier ``q``."""

    lattice: Lattice
    multiplier: np.ndarray

    @classmethod
    def K2(cls, lattice: Lattice, p: ModelParams) -> "QuadraticDiagonal":
        return cls(lattice, omega_from_norm_sq(lattice.norm_sq_a, p))

    @classmethod
    def sobolev(cls, lattice: Lattice, s: float) -> "QuadraticDiagonal":
        return cls(lattice, lattice.sobolev_weights(s))

    def evaluate(self, w) -> float:
        wc = w.coeffs if isinstance(w, SpectralField) else np.asarray(w)
        return float(np.sum(self.multiplier * np.abs(wc) ** 2))

    def gradient(self, w) -> tuple[np.ndarray, np.ndarray]:
        wc = w.coeffs if isinstance(w, SpectralField) else np.asarray(w)
        return self.multiplier * np.conj(wc), self.multiplier * wc

    def vector_field(self, w) -> SpectralField:
        wc = w.coeffs if isinstance(w, SpectralField) else np.asarray(w)
        return SpectralField(self.lattice, -1j * self.multiplier * wc)


def evaluate(G, w) -> float:
    return G.evaluate(w)


def vector_field(G, w) -> SpectralField:
    return G.vector_field(w)


def poisson_general(G1, G2, w) -> float:
    """``{G1, G2}(w)`` from the two gradients."""
    a_w, a_bar = G1.gradient(w)
    b_w, b_bar = G2.gradient(w)
    return float(np.real(-1j * np.sum(a_w * b_bar - a_bar * b_w)))


def poisson_with_diagonal(Q: QuadraticDiagonal, G: TrilinearHamiltonian) -> TrilinearHamiltonian:
    """``{Q, G}``: multiply each coefficient by ``i sum_i sigma_i q(j_i)``."""
    return TrilinearHamiltonian(G.triads, 1j * G.triads.sign_sum(Q.multiplier) * G.coeffs)


def ad_inverse(
    G: TrilinearHamiltonian, Q: QuadraticDiagonal, floor: float | None = None, p: ModelParams | None = None
) -> TrilinearHamiltonian:
    """Inverse of ``ad_Q = {Q, .}`` on the support of ``G``.

    Parameters
    ----------
    floor : float, optional
        Smallest admissible ``|sum sigma_i q(j_i)|``; defaults to
        ``1e-12 sqrt(kappa)`` when ``p`` is given, else ``1e-12``.

    Raises
    ------
    ResonanceError
        If a supported class has a divisor below ``floor``.
    """
    if floor is None:
        floor = 1e-12 * (np.sqrt(p.kappa) if p is not None else 1.0)
    div = G.triads.sign_sum(Q.multiplier)
    supp = G.coeffs != 0
    bad = supp & (np.abs(div) < floor)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[np.argmin(np.abs(div[bad]))])
        trip = G.triads.describe(k)
        raise ResonanceError(f"divisor {div[k]:.3e} below floor {floor:.1e} at {trip}", trip, float(div[k]))
    out = np.zeros_like(G.coeffs)
    out[supp] = G.coeffs[supp] / (1j * div[supp])
    return TrilinearHamiltonian(G.triads, out)


def min_divisor(G: TrilinearHamiltonian, Q: QuadraticDiagonal) -> float:
    """Smallest ``|sum sigma_i q(j_i)|`` over the support of ``G``."""
    supp = G.coeffs != 0
    if not np.any(supp):
        return float("inf")
    return float(np.abs(G.triads.sign_sum(Q.multiplier)[supp]).min())


def split_truncate(G: TrilinearHamiltonian, N: float):
    """``(G^{<=N}, G^{>N})`` where ``>N`` collects classes with ``mu_2 > N``."""
    high = G.triads.mu[:, 1] > N
    return (
        TrilinearHamiltonian(G.triads, np.where(high, 0, G.coeffs)),
        TrilinearHamiltonian(G.triads, np.where(high, G.coeffs, 0)),
    )


def split_sign(G: TrilinearHamiltonian):
    """``(G^{(+1)}, G^{(-1)})`` by the relative sign of the two largest slots."""
    eq = G.triads.top_two_equal
    return (
        TrilinearHamiltonian(G.triads, np.where(eq, G.coeffs, 0)),
        TrilinearHamiltonian(G.triads, np.where(eq, 0, G.coeffs)),
    )


def build_K3_z(p: ModelParams, lattice: Lattice) -> TrilinearHamiltonian:
    """Cubic part of the reduced Hamiltonian in ``z`` coordinates.

    Expanding ``G(|alpha + z|^2)`` with ``alpha^2 = m - sum |z_j|^2`` gives

        K3 = (1/hbar) [ g_1 sqrt(m) mean((z + conj z)|z|^2)
                        + (g_2/3) m^(3/2) mean((z + conj z)^3) ],

    so a class with ``n_+`` plus signs and ``n_-`` minus signs has the
    symmetric coefficient ``(g_1 sqrt(m) n_+ n_- / 6 + g_2 m^(3/2) / 3) / hbar``.
    """
    t = lattice.triads
    npos = (t.signs > 0).sum(axis=1)
    c = p.g1 * np.sqrt(p.mass) * npos * (3 - npos) / 6.0 + p.g2 * p.mass**1.5 / 3.0
    return TrilinearHamiltonian(t, (c / p.hbar).astype(complex))


def cubic_energy_grid(z: SpectralField, grid: Grid, p: ModelParams) -> float:
    """Physical-space evaluation of the cubic part (see :func:`build_K3_z`)."""
    u = z.to_grid(grid)
    f = 2 * u.real
    val = p.g1 * np.sqrt(p.mass) * np.mean(f * np.abs(u) ** 2) + p.g2 * p.mass**1.5 / 3.0 * np.mean(f**3)
    return float(val / p.hbar)


def conjugate_by_C(G: TrilinearHamiltonian, mats: ModeMatrices) -> TrilinearHamiltonian:
    """``G(C w)``: substitute ``z^s_j = a_j w^s_j + b_j w^{-s}_{-j}`` slot by slot."""
    t = G.triads
    src = G.support()
    out = np.zeros(len(t), dtype=complex)
    if src.size == 0:
        return TrilinearHamiltonian(t, out)
    codes = t.codes[src]
    idx = codes >> 1
    sgn = codes & 1
    neg = mats.lattice.neg_index
    flipped = 2 * neg[idx] + (1 - sgn)
    wa, wb = mats.a[idx], mats.b[idx]
    base = t.mult[src] * G.coeffs[src]
    for f in range(8):
        flips = [(f >> i) & 1 for i in range(3)]
        tc = np.stack([flipped[:, i] if flips[i] else codes[:, i] for i in range(3)], axis=1)
        wt = base.copy()
        for i in range(3):
            wt = wt * (wb[:, i] if flips[i] else wa[:, i])
        tgt = t.locate(tc)
        out += np.bincount(tgt, weights=wt.real, minlength=len(t))
        out += 1j * np.bincount(tgt, weights=wt.imag, minlength=len(t))
    return TrilinearHamiltonian(t, out / t.mult)


def build_K3_w(p: ModelParams, lattice: Lattice, mats: ModeMatrices | None = None) -> TrilinearHamiltonian:
    """Cubic part in the diagonal coordinates ``w``."""
    mats = mats or ModeMatrices.build(lattice, p)
    return conjugate_by_C(build_K3_z(p, lattice), mats)
