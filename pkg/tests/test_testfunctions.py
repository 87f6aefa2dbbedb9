from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmvzakai.errors import DimensionError, ParameterError
from cmvzakai.testfunctions import (
    Bump,
    Constant,
    Coordinate,
    GaussianBump,
    LinearCombination,
    Square,
    as_points,
    dyadic_bump_basis,
    stacked_derivs,
)

FUNCTIONS_1D = [
    Bump(center=(0.2,), radius=1.3),
    GaussianBump(center=(-0.4,), scale=0.7),
    Square(),
    Coordinate(),
    LinearCombination((Bump(center=(0.0,), radius=2.0), Square()), (0.5, -1.5)),
]
FUNCTIONS_2D = [Bump(center=(0.2, -0.1), radius=1.5), GaussianBump(center=(0.0, 0.5), scale=1.1), Square(j=1)]


def fd_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[j] = h
        g[:, j] = (f.value(x + e) - f.value(x - e)) / (2 * h)
    return g


def fd_hess(f, x, h=1e-5):
    d = x.shape[1]
    H = np.empty((x.shape[0], d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        H[:, :, j] = (f.grad(x + e) - f.grad(x - e)) / (2 * h)
    return H


@pytest.mark.parametrize(
    "f,d", [(f, 1) for f in FUNCTIONS_1D] + [(f, 2) for f in FUNCTIONS_2D], ids=lambda v: getattr(v, "name", str(v))
)
@given(data=st.data())
def test_derivatives_match_finite_differences(f, d, data):
    x = data.draw(arrays(float, (5, d), elements=st.floats(-1.0, 1.0)))
    assert np.allclose(f.grad(x), fd_grad(f, x), atol=1e-6)
    assert np.allclose(f.hess(x), fd_hess(f, x), atol=1e-5)
    v, g, H = f.derivs(x)
    assert np.array_equal(v, f.value(x))
    assert np.allclose(g, f.grad(x), rtol=1e-13, atol=1e-15)
    assert np.allclose(H, f.hess(x), rtol=1e-13, atol=1e-15)


@given(arrays(float, 20, elements=st.floats(-5, 5)))
def test_bump_support_and_symmetry(x):
    b = Bump(center=(1.0,), radius=0.5)
    pts = x[:, None]
    v = b.value(pts)
    assert np.all(v[np.abs(x - 1.0) >= 0.5] == 0.0)
    assert np.all(v >= 0) and np.all(v <= np.exp(-1.0) + 1e-15)
    assert np.allclose(v, b.value(2.0 - pts))


def test_bump_rejects_bad_input():
    with pytest.raises(ParameterError):
        Bump(center=(0.0,), radius=0.0)
    with pytest.raises(DimensionError):
        Bump(center=(0.0, 0.0), radius=1.0).value(np.zeros((3, 1)))


def test_as_points_shapes():
    assert as_points(1.5).shape == (1, 1)
    assert as_points([1.0, 2.0], 1).shape == (2, 1)
    assert as_points([1.0, 2.0], 2).shape == (1, 2)
    assert Constant(2.0).value(np.zeros((3, 2))).tolist() == [2.0, 2.0, 2.0]


def test_stacked_derivs_matches_individual_calls(rng):
    basis = dyadic_bump_basis(1, 30)
    x = rng.uniform(-3.5, 3.5, size=(200, 1))
    V, G, H = stacked_derivs(list(basis), x)
    assert V.shape == (200, 30) and G.shape == (200, 30, 1) and H.shape == (200, 30, 1, 1)
    for k, f in enumerate(basis):
        assert np.allclose(V[:, k], f.value(x), rtol=1e-13, atol=0)
        assert np.allclose(G[:, k], f.grad(x), rtol=1e-12, atol=1e-300)
        assert np.allclose(H[:, k], f.hess(x), rtol=1e-12, atol=1e-300)
    mixed = [Square(), GaussianBump(center=(0.0,))]
    V, G, H = stacked_derivs(mixed, x)
    assert np.allclose(V[:, 0], x[:, 0] ** 2)


def test_dyadic_basis_layout():
    basis = dyadic_bump_basis(1, 24)
    radii = [f.radius for f in basis]
    assert radii[:4] == [2.0] * 4 and radii[4:11] == [1.0] * 7 and radii[11:24] == [0.5] * 13
    assert [f.center[0] for f in basis][:4] == [-3.0, -1.0, 1.0, 3.0]
    assert len(dyadic_bump_basis(2, 40)) == 40
    with pytest.raises(ParameterError):
        dyadic_bump_basis(1, 0)
