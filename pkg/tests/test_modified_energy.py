import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhdtori.diagonalization import ModeMatrices
from qhdtori.dispersion import ModelParams
from qhdtori.hamiltonians import (
    QuadraticDiagonal,
    TrilinearHamiltonian,
    ad_inverse,
    build_K3_w,
    poisson_general,
    poisson_with_diagonal,
    split_sign,
    split_truncate,
)
from qhdtori.integrator import ModeProfile, ReducedFlow, prepare_initial
from qhdtori.lattice import Grid, Lattice, TorusShape
from qhdtori.madelung import SpectralField
from qhdtori.modified_energy import (
    ModifiedEnergy,
    build_E3,
    coefficient_bound_constant,
    default_cutoff,
    drift_series,
    energy_value,
    exact_rates,
    verify_cancellation,
)


@pytest.fixture(scope="module")
def K3(lattice, params):
    return build_K3_w(params, lattice)


def test_zero_table_gives_zero_correction(lattice, params):
    me = build_E3(TrilinearHamiltonian.zeros(lattice), 6, 10, params)
    assert me.E3.support().size == 0


def test_tiny_cutoff_drops_opposite_signs(K3, params):
    me = build_E3(K3, 6, 0.5, params)
    plus, _ = split_sign(K3)
    Ns = QuadraticDiagonal.sobolev(K3.lattice, 6)
    ref = ad_inverse(poisson_with_diagonal(Ns, plus), QuadraticDiagonal.K2(K3.lattice, params))
    assert np.array_equal(me.E3.coeffs, ref.coeffs)


@pytest.mark.parametrize("N", [4, 10])
def test_cancellation_default(K3, params, N):
    me = build_E3(K3, 6, N, params)
    # coefficients reach ~1e12 at s = 6, so the residual is measured relative to them
    assert verify_cancellation(K3, me, 6, N, params, relative=True) <= 1e-10
    assert me.provenance["min_divisor"] >= me.provenance["floor"]


def test_cancellation_without_tail(K3, params):
    N = 100.0
    me = build_E3(K3, 6, N, params)
    assert me.tail.support().size == 0
    assert verify_cancellation(K3, me, 6, N, params, relative=True) <= 1e-14


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.0, 8.0), st.floats(1.0, 6.0))
def test_cancellation_is_structural(seed, N, s):
    lat = Lattice.ball(4, TorusShape((1.9, 2.7)))
    p = ModelParams()
    G = TrilinearHamiltonian.random(lat, np.random.default_rng(seed))
    me = build_E3(G, s, N, p)
    assert verify_cancellation(G, me, s, N, p, relative=True) <= 1e-10


def test_coefficient_bound(K3, params):
    me = build_E3(K3, 6, 10, params)
    C = coefficient_bound_constant(me, 2, 2)
    assert 0 < C < np.inf
    supp = me.E3.support()
    mu = me.E3.triads.mu[supp]
    bound = C * np.log(11) ** 3 * mu[:, 2] ** 3 * mu[:, 0] ** 12
    assert np.all(np.abs(me.E3.coeffs[supp]) <= bound * (1 + 1e-12))


def test_energy_value_trivial(lattice, K3, params, rng):
    me = build_E3(K3, 6, 10, params)
    assert energy_value(me, np.zeros(len(lattice), dtype=complex)) == 0
    bare = ModifiedEnergy(6, 10, TrilinearHamiltonian.zeros(lattice), me.Ns)
    w = SpectralField.random(lattice, rng)
    assert bare(w.coeffs) == pytest.approx(w.sobolev_norm(6) ** 2, rel=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_energy_norm_equivalence(lattice, K3, params, seed):
    rng = np.random.default_rng(seed)
    me = build_E3(K3, 6, 10, params)
    w = SpectralField.random(lattice, rng, 1.0, 3)
    w = w * (1e-3 / w.sobolev_norm(6))
    E, n2 = me(w.coeffs), w.sobolev_norm(6) ** 2
    c0 = 0.5
    assert E / (1 + c0) <= n2 <= (1 + c0) * E


def test_default_cutoff():
    assert default_cutoff(1e-3, 2) == pytest.approx(1e3)
    assert default_cutoff(1e-4, 3) == pytest.approx(1e2)
    with pytest.raises(ValueError):
        default_cutoff(1e-3, 1)


def test_cubic_part_of_drift_is_the_tail(K3, params, lattice, rng):
    me = build_E3(K3, 6, 4, params)
    K2 = QuadraticDiagonal.K2(lattice, params)
    w = SpectralField.random(lattice, rng, 1e-2, 3).coeffs
    lhs = poisson_general(me.Ns, K3, w) + poisson_general(me.E3, K2, w)
    assert lhs == pytest.approx(me.tail.evaluate(w), rel=1e-8, abs=1e-8 * abs(poisson_general(me.Ns, K3, w)))


def test_linear_flow_has_no_drift(shape):
    p = ModelParams()
    lat = Lattice.ball(6, shape)
    mats = ModeMatrices.build(lat, p)
    me = build_E3(TrilinearHamiltonian.zeros(lat), 6, 10, p)
    w0 = SpectralField.random(lat, np.random.default_rng(0), 1e-3, 6).coeffs
    traj = [(t, np.exp(-1j * mats.omega * t) * w0) for t in np.linspace(0, 5, 51)]
    for _, dE, dN in drift_series(me, traj):
        assert abs(dE) <= 1e-14 * me.Ns.evaluate(w0)
        assert abs(dN) <= 1e-14 * me.Ns.evaluate(w0)


def test_exact_rates_match_trajectory_differences(shape):
    p = ModelParams()
    lat, grid = Lattice.ball(6, shape), Grid(shape, 32)
    flow = ReducedFlow(lat, grid, p)
    K3 = build_K3_w(p, lat, flow.mats)
    me = build_E3(K3, 4, 4, p)
    w0 = flow.w_from_psi(prepare_initial(2e-2, ModeProfile(), 1, grid, p, s=4))
    samples = []
    flow.run(w0, 0.05, 2e-4, 1, lambda t, w: samples.append((t, w.copy())))
    fd = drift_series(me, samples)
    ex = drift_series(me, samples[1:-1], flow.field)
    fd, ex = np.array(fd), np.array(ex)
    assert np.allclose(fd[:, 0], ex[:, 0])
    scale = np.abs(ex[:, 1]).max()
    assert np.abs(fd[:, 1] - ex[:, 1]).max() <= 1e-3 * scale
    assert np.abs(fd[:, 2] - ex[:, 2]).max() <= 1e-3 * np.abs(ex[:, 2]).max()


def test_modified_energy_drifts_less(shape):
    p = ModelParams()
    lat, grid = Lattice.ball(8, shape), Grid(shape, 32)
    flow = ReducedFlow(lat, grid, p)
    K3 = build_K3_w(p, lat, flow.mats)
    eps = 1e-3
    me = build_E3(K3, 6, 1 / eps, p)
    w0 = flow.w_from_psi(prepare_initial(eps, ModeProfile(), 0, grid, p))
    dE, dN = exact_rates(me, w0, flow.field)
    assert abs(dE) <= 0.2 * abs(dN)
