import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhdtori.lattice import (
    Grid,
    Lattice,
    TorusShape,
    anisotropic_norm_sq,
    ball,
    japanese_bracket,
    mu_ordering,
)


@pytest.mark.parametrize(
    "j, a, expected",
    [((1, 0), (1, 1), 1.0), ((1, 1), (2, 3), 5.0), ((2, -1, 1), (1.5, 2.5, 3.5), 12.0)],
)
def test_anisotropic_norm(j, a, expected):
    assert anisotropic_norm_sq(j, TorusShape(a)) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("j, expected", [((1, 0), math.sqrt(2)), ((3, 4), math.sqrt(26))])
def test_japanese_bracket(j, expected):
    assert japanese_bracket(j) == pytest.approx(expected, rel=1e-15)


def test_japanese_bracket_rejects_zero():
    with pytest.raises(ValueError):
        japanese_bracket((0, 0))


@pytest.mark.parametrize("J, d, count", [(1, 2, 8), (2, 2, 24), (1, 3, 26)])
def test_ball_size(J, d, count):
    pts = ball(J, d)
    assert len(pts) == count
    assert not np.any(np.all(pts == 0, axis=1))
    assert len({tuple(p) for p in pts}) == count


@pytest.mark.parametrize(
    "js, expected",
    [
        (((1, 0), (1, 0), (2, 0)), (2, 1, 1)),
        (((3, 4), (0, 1), (3, 4)), (5, 5, 1)),
        (((1, 1), (2, 2), (0, 3)), (3, math.sqrt(8), math.sqrt(2))),
    ],
)
def test_mu_ordering(js, expected):
    assert mu_ordering(*js) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("a", [(0.5, 2.0), (2.0, 4.5), (2.0, float("nan"))])
def test_shape_rejects_out_of_range(a):
    with pytest.raises(ValueError):
        TorusShape(a)


def test_shape_roundtrip():
    s = TorusShape.from_nu((1.2, 1.9))
    assert s.a == pytest.approx((1.44, 3.61))
    assert TorusShape.from_dict(s.to_dict()) == s


def test_lattice_index_and_negation(shape):
    lat = Lattice.ball(5, shape)
    k = lat.index(lat.points)
    assert np.array_equal(k, np.arange(len(lat)))
    assert np.array_equal(lat.points[lat.neg_index], -lat.points)
    assert lat.index(np.array([6, 0])) == -1


def test_grid_spectrum_roundtrip(shape, rng):
    g = Grid(shape, 16)
    u = rng.standard_normal(g.dims) + 1j * rng.standard_normal(g.dims)
    assert np.allclose(g.field(g.spectrum(u)), u, atol=1e-13)
    assert g.spectrum(np.ones(g.dims)).flat[0] == pytest.approx(1.0)


def test_grid_positions_match_wavenumbers(shape):
    g = Grid(shape, 16)
    lat = Lattice.ball(4, shape)
    k = g.wavenumbers[lat.grid_positions(g.n)]
    assert np.array_equal(k, lat.points)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(-6, 6), min_size=2, max_size=2),
    st.lists(st.floats(1.0, 4.0), min_size=2, max_size=2),
)
def test_norm_is_even_and_bounded(j, a):
    s = TorusShape(tuple(a))
    n = anisotropic_norm_sq(j, s)
    assert n == anisotropic_norm_sq([-v for v in j], s)
    e = sum(v * v for v in j)
    assert e - 1e-12 <= n <= 4 * e + 1e-12
