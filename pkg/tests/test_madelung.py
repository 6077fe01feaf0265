import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhdtori.dispersion import ModelParams
from qhdtori.integrator import ModeProfile, StrangPropagator, initial_fields
from qhdtori.lattice import Grid, Lattice, TorusShape
from qhdtori.madelung import (
    GaugeState,
    RealFieldPair,
    SpectralField,
    alpha_from_z,
    gauge_reduce,
    madelung_forward,
    madelung_inverse,
    reconstruct,
    reduced_energy,
    reduced_gradient,
    theta_rate,
)

S = 3.0


def small_pair(grid, seed, delta, p, offset=0.0):
    """Random low-mode pair scaled so that ||rho||/m + ||phi||/sqrt(kappa) = delta."""
    rho, phi = initial_fields(ModeProfile(2), seed, grid)
    size = grid.sobolev_norm(rho, S) / p.mass + grid.sobolev_norm(phi, S) / np.sqrt(p.kappa)
    lam = delta / size
    return RealFieldPair(lam * rho, lam * phi + offset, grid)


def test_forward_equilibrium(grid):
    p = ModelParams(mass=2.0)
    z = np.zeros(grid.dims)
    assert np.allclose(madelung_forward(RealFieldPair(z, z, grid), p), np.sqrt(2.0))


def test_forward_pure_gauge(grid):
    p = ModelParams(kappa=0.3)
    z = np.zeros(grid.dims)
    psi = madelung_forward(RealFieldPair(z, z + 0.9, grid), p)
    assert np.allclose(psi, np.exp(1j * 0.9 / p.hbar))


def test_real_pair_requires_zero_mean(grid):
    with pytest.raises(ValueError):
        RealFieldPair(np.full(grid.dims, 0.1), np.zeros(grid.dims), grid)


def test_inverse_equilibrium(grid):
    p = ModelParams()
    f = madelung_inverse(np.ones(grid.dims, dtype=complex), grid, p)
    assert np.abs(f.rho).max() == 0 and np.abs(f.phi).max() == 0


def test_inverse_rejects_vanishing(grid):
    psi = np.ones(grid.dims, dtype=complex)
    psi[3, 4] = 0
    with pytest.raises(ValueError):
        madelung_inverse(psi, grid, ModelParams())


@pytest.mark.parametrize("seed", range(5))
def test_madelung_roundtrip(grid, seed):
    p = ModelParams(kappa=0.7, mass=1.3)
    f = small_pair(grid, seed, 1e-2, p, offset=0.4)
    back = madelung_inverse(madelung_forward(f, p), grid, p)
    # S = 3: at s = 6 on this grid the <j>^s weights lift roundoff above 1e-10
    assert grid.sobolev_norm(back.rho - f.rho, S) <= 1e-10
    dphi = back.phi - f.phi
    dphi -= dphi.mean()
    assert grid.sobolev_norm(dphi, S) <= 1e-10


@pytest.mark.parametrize("seed", range(20))
def test_forward_bound(grid, seed):
    p = ModelParams(kappa=0.5, mass=1.5)
    delta = 1e-3
    f = small_pair(grid, seed, delta, p, offset=0.25)
    psi = madelung_forward(f, p)
    sigma = f.phi.mean() / p.hbar
    assert grid.sobolev_norm(psi - np.sqrt(p.mass) * np.exp(1j * sigma), S) <= 2 * np.sqrt(p.mass) * delta


@pytest.mark.parametrize("seed", range(20))
def test_gauge_bounds(grid, seed):
    p = ModelParams(kappa=0.5, mass=1.5)
    delta = 1e-3
    f = small_pair(grid, seed, delta, p)
    z = gauge_reduce(madelung_forward(f, p), grid).z
    dz = z.sobolev_norm(S)
    assert dz <= 2 * np.sqrt(p.mass) * delta
    back = madelung_inverse(madelung_forward(f, p), grid, p)
    phi0 = back.phi - back.phi.mean()
    size = grid.sobolev_norm(back.rho, S) / p.mass + grid.sobolev_norm(phi0, S) / np.sqrt(p.kappa)
    assert size <= 16 / np.sqrt(p.mass) * dz


def test_gauge_reduce_equilibrium(grid):
    st_ = gauge_reduce(np.full(grid.dims, np.sqrt(2.0), dtype=complex), grid)
    assert st_.alpha == pytest.approx(np.sqrt(2.0))
    assert st_.theta == 0.0
    assert np.abs(st_.z.coeffs).max() == 0


def test_gauge_reduce_phase(grid):
    # psi = (alpha + z) exp(-i theta), so a phase e^{0.7i} is theta = -0.7
    st_ = gauge_reduce(np.exp(0.7j) * np.ones(grid.dims), grid)
    assert st_.alpha == pytest.approx(1.0)
    assert st_.theta == pytest.approx(-0.7, abs=1e-15)
    assert np.abs(st_.z.coeffs).max() < 1e-15


@pytest.mark.parametrize("seed", range(4))
def test_gauge_parseval_and_reconstruction(grid, seed):
    rng = np.random.default_rng(seed)
    psi = 1.0 + 0.05 * (rng.standard_normal(grid.dims) + 1j * rng.standard_normal(grid.dims))
    psi *= np.exp(1.1j)
    st_ = gauge_reduce(psi, grid)
    total = np.sum(np.abs(grid.spectrum(psi)) ** 2)
    assert st_.mass() == pytest.approx(total, abs=1e-12)
    assert np.abs(reconstruct(st_, grid) - psi).max() <= 1e-12


def test_gauge_reduce_rejects_empty_zero_mode(grid):
    x = grid.coords[0]
    with pytest.raises(ValueError):
        gauge_reduce(np.exp(1j * x), grid)


def test_alpha_from_z(lattice):
    p = ModelParams(mass=2.0)
    assert alpha_from_z(SpectralField.zeros(lattice), p) == pytest.approx(np.sqrt(2.0))
    z = SpectralField.from_mapping(lattice, {(1, 0): 1.0})
    assert alpha_from_z(z, p) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        alpha_from_z(SpectralField.from_mapping(lattice, {(1, 0): 1.5}), p)


def test_theta_rate_equilibrium(lattice, grid):
    p = ModelParams()
    assert theta_rate(GaugeState(1.0, 0.0, SpectralField.zeros(lattice)), grid, p) == 0.0


def test_theta_rate_constant_field(lattice, grid):
    p = ModelParams(kappa=0.49, mass=2.0)
    rate = theta_rate(GaugeState(1.0, 0.0, SpectralField.zeros(lattice)), grid, p)
    assert rate == pytest.approx(-p.mass / (2 * p.hbar), rel=1e-14)


def test_theta_rate_against_wave_function():
    sh = TorusShape((1.7, 2.6))
    g = Grid(sh, 16)
    p = ModelParams(g_coeffs=(1.0, 0.5))
    rng = np.random.default_rng(3)
    lat = Lattice.from_grid(g)
    z = SpectralField.random(Lattice.ball(3, sh), rng, 3e-2, 2)
    spec = z.to_spectrum(g)
    spec.flat[0] = alpha_from_z(z, p)
    psi = g.field(spec)
    prop = StrangPropagator(g, p, 1e-6)
    dt = 1e-3
    back, fwd = psi.copy(), psi.copy()
    inv = StrangPropagator(g, p, -1e-6)
    for _ in range(500):
        fwd, back = prop(fwd), inv(back)
    fd = (gauge_reduce(fwd, g).theta - gauge_reduce(back, g).theta) / dt
    st0 = gauge_reduce(psi, g, lat)
    assert abs(fd - theta_rate(st0, g, p)) <= 1e-6


def test_reduced_gradient_matches_finite_differences(lattice, grid, rng):
    p = ModelParams(g_coeffs=(1.0, 0.3))
    z = SpectralField.random(lattice, rng, 1e-2, 3)
    v = SpectralField.random(lattice, rng, 1e-2, 3).coeffs
    h = 1e-4

    def K(c):
        return reduced_energy(SpectralField(lattice, c), grid, p)

    fd = (K(z.coeffs + h * v) - K(z.coeffs - h * v)) / (2 * h)
    gr = reduced_gradient(z, grid, p).coeffs
    assert fd == pytest.approx(2 * np.real(np.vdot(gr, v)), rel=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.dictionaries(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), st.complex_numbers(max_magnitude=1), max_size=6))
def test_spectral_field_mapping_roundtrip(mapping):
    lat = Lattice.ball(3, TorusShape((1.5, 2.5)))
    mapping = {k: v for k, v in mapping.items() if k != (0, 0)}
    f = SpectralField.from_mapping(lat, mapping)
    back = {k: v for k, v in f.as_mapping().items() if v != 0}
    assert back == {k: v for k, v in mapping.items() if v != 0}


def test_spectral_field_csv_roundtrip(tmp_path, small_lattice, rng):
    f = SpectralField.random(small_lattice, rng)
    f.write_csv(tmp_path / "z.csv")
    g = SpectralField.read_csv(tmp_path / "z.csv", small_lattice)
    assert np.array_equal(f.coeffs, g.coeffs)
