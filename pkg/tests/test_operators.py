from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmvzakai.coefficients import make_coefficients
from cmvzakai.errors import DimensionError, ParameterError
from cmvzakai.measures import WeightedAtomMeasure, normalize, pair
from cmvzakai.operators import (
    CylindricalFunction,
    OuterFunction,
    alpha_beta_gamma,
    apply_H,
    apply_L,
    diffusion_matrix,
    generator_A,
    generator_measure,
    generator_measure_expanded,
    l_derivative_cylinder,
    lifted_coefficients,
    operator_terms,
    operator_terms_stacked,
)
from cmvzakai.testfunctions import Bump, Coordinate, GaussianBump, Square, dyadic_bump_basis


def measures(d=1, max_atoms=6):
    return st.integers(1, max_atoms).flatmap(
        lambda n: st.tuples(
            arrays(float, (n, d), elements=st.floats(-2.5, 2.5)),
            arrays(float, n, elements=st.floats(0.05, 2.0)),
        )
    ).map(lambda xw: WeightedAtomMeasure(*xw))


COEFFS = {name: make_coefficients(name) for name in ("bounded_smooth", "cmv_tanh", "linear_gaussian")}


def y_for(coeffs):
    return 0.4


def test_L_and_H_on_polynomials():
    c = make_coefficients("constant", {"b": 0.7, "sigma": 1.2, "rho": 0.5, "h": 2.0})
    x = np.array([[0.5], [-1.0]])
    assert np.allclose(apply_L(Coordinate(), 0.0, x, 0.0, None, c), 0.7)
    assert np.allclose(apply_L(Square(), 0.0, x, 0.0, None, c), 1.44 + 0.25 + 2 * 0.7 * x[:, 0])
    assert np.allclose(apply_H(Square(), 0.0, x, 0.0, None, c), 0.5 * 2 * x[:, 0] + 2.0 * x[:, 0] ** 2)


def test_diffusion_matrix_includes_observation_noise():
    v = make_coefficients("constant", {"sigma": [[1.0, 0.0], [0.5, 1.0]], "rho": [0.3, 0.4]}, d=2).eval(0.0, np.zeros((1, 2)), 0.0)
    a = diffusion_matrix(v)[0]
    s = np.array([[1.0, 0.0], [0.5, 1.0]])
    assert np.allclose(a, s @ s.T + np.outer([0.3, 0.4], [0.3, 0.4]))


@pytest.mark.parametrize("d", [1, 2])
def test_operator_terms_fast_paths_agree(d, rng):
    c = make_coefficients("cmv_tanh", d=d)
    x = rng.uniform(-2, 2, size=(40, d))
    v = c.eval(0.0, x, 0.1, normalize(WeightedAtomMeasure.empirical(x)))
    basis = list(dyadic_bump_basis(d, 12)) + [GaussianBump(center=(0.1,) * d)]
    stacked = operator_terms_stacked(basis, x, v)
    for k, f in enumerate(basis):
        val, Lf, Hf, Qf = operator_terms(f, x, v)
        assert np.allclose(Lf, apply_L(f, 0.0, x, 0.1, normalize(WeightedAtomMeasure.empirical(x)), c), rtol=1e-12, atol=1e-14)
        assert np.allclose(Hf, apply_H(f, 0.0, x, 0.1, normalize(WeightedAtomMeasure.empirical(x)), c), rtol=1e-12, atol=1e-14)
        for a, b in zip((val, Lf, Hf, Qf), stacked):
            assert np.allclose(a, b[:, k], rtol=1e-12, atol=1e-14)
        rg = np.einsum("ni,ni->n", v.rho, f.grad(x))
        q = 0.5 * np.einsum("ni,nij,nj->n", v.rho, f.hess(x), v.rho) + v.h * rg + 0.5 * v.h**2 * val
        assert np.allclose(Qf, q, rtol=1e-12, atol=1e-14)


OUTERS = {
    "square": (OuterFunction.square(), 1),
    "quadratic": (OuterFunction.quadratic([[2.0, 0.5], [0.5, 1.0]], [0.3, -0.2]), 2),
    "sin": (OuterFunction.sin_sum([0.7, -1.3]), 2),
}


@pytest.mark.parametrize("family", sorted(COEFFS))
@pytest.mark.parametrize("outer", sorted(OUTERS))
@given(nu=measures())
def test_generator_two_code_paths_agree(family, outer, nu):
    f, k = OUTERS[outer]
    F = CylindricalFunction.of(f, [Bump(center=(0.0,), radius=2.0), GaussianBump(center=(0.5,), scale=0.8)][:k])
    c = COEFFS[family]
    a = generator_measure(F, nu, 0.2, y_for(c), c)
    b = generator_measure_expanded(F, nu, 0.2, y_for(c), c)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


@given(nu=measures())
def test_generator_reduces_for_linear_and_constant_outer(nu):
    c = COEFFS["cmv_tanh"]
    psi = Bump(center=(0.3,), radius=1.7)
    lin = generator_measure(CylindricalFunction.of(OuterFunction.linear([1.0]), [psi]), nu, 0.0, 0.2, c)
    direct = pair(nu, lambda x: apply_L(psi, 0.0, x, 0.2, normalize(nu), c))
    assert lin == pytest.approx(direct, rel=1e-12, abs=1e-14)
    const = generator_measure(CylindricalFunction.of(OuterFunction.constant(1, 3.0), [psi]), nu, 0.0, 0.2, c)
    assert const == 0.0


@given(nu=measures(), x=st.floats(-2.0, 2.0))
def test_l_derivative_is_directional_derivative(nu, x):
    F = CylindricalFunction.of(OuterFunction.sin_sum([0.9, -0.4]), [Bump(center=(0.0,), radius=2.5), Square()])
    first, mixed, second = l_derivative_cylinder(F, nu, np.array([[x]]))
    eps = 1e-6
    bump_up = nu + WeightedAtomMeasure.dirac(x, eps)
    fd = (F(bump_up) - F(nu)) / eps
    # the value slot of the stacked derivative is the flat derivative in the mass direction
    assert first[0, -1] == pytest.approx(fd, rel=1e-4, abs=1e-5)
    # spatial derivative of the value slot equals the gradient slot
    first_h, _, _ = l_derivative_cylinder(F, nu, np.array([[x + 1e-6]]))
    assert (first_h[0, -1] - first[0, -1]) / 1e-6 == pytest.approx(first[0, 0], rel=1e-4, abs=1e-5)
    assert mixed.shape == (1, 2, 1) and second.shape == (1, 2, 2)
    assert np.allclose(second, second.transpose(0, 2, 1))


def test_l_derivative_rejects_mismatched_points():
    F = CylindricalFunction.of(OuterFunction.square(), [Square()])
    with pytest.raises(DimensionError):
        l_derivative_cylinder(F, WeightedAtomMeasure.dirac(0.0), np.zeros((2, 1)), np.zeros((3, 1)))


@given(nu=measures())
def test_lifted_coefficients_structure(nu):
    c = COEFFS["bounded_smooth"]
    basis = dyadic_bump_basis(1, 6)
    alpha, beta, gamma = lifted_coefficients(0.0, 0.1, nu, c, basis)
    assert np.array_equal(np.diag(alpha), gamma**2)
    assert np.allclose(alpha, alpha.T)
    assert np.all(np.linalg.eigvalsh(alpha) >= -1e-12)
    for i in range(6):
        assert gamma[i] == pytest.approx(pair(nu, lambda x: apply_H(basis[i], 0.0, x, 0.1, None, c)), rel=1e-12, abs=1e-15)
    z = [pair(nu, f) for f in basis]
    a12, b1, g1 = alpha_beta_gamma(0.0, 0.1, z, nu, c, basis, 1, 2)
    assert (a12, b1, g1) == (alpha[1, 2], beta[1], gamma[1])


def test_alpha_beta_gamma_checks_moments():
    nu = WeightedAtomMeasure.dirac(0.2)
    with pytest.raises(ParameterError):
        alpha_beta_gamma(0.0, 0.0, [5.0, 5.0], nu, COEFFS["bounded_smooth"], dyadic_bump_basis(1, 2), 0, 1)
    with pytest.raises(ParameterError):
        lifted_coefficients(0.0, 0.0, nu, COEFFS["bounded_smooth"], dyadic_bump_basis(1, 2), K=3)


@given(nu=measures(), ybar=st.floats(-1.0, 1.0))
def test_generator_A(nu, ybar):
    c = COEFFS["bounded_smooth"]
    basis = dyadic_bump_basis(1, 2)
    z = [pair(nu, f) for f in basis]
    # f separable in ybar: A f = (z-part generator) + 1/2 f_00
    f = OuterFunction.quadratic(np.diag([3.0, 2.0, 0.0]), [0.0, 1.0, -1.0])
    alpha, beta, gamma = lifted_coefficients(0.0, ybar, nu, c, basis)
    expect = 0.5 * 2.0 * alpha[0, 0] + (2 * z[0] + 1.0) * beta[0] - beta[1] + 0.5 * 3.0
    got = generator_A(f, 0.0, ybar, z, nu, c, basis)
    assert got == pytest.approx(expect, rel=1e-12, abs=1e-14)
    assert generator_A(f, 0.0, ybar, z, nu, c, basis, cross_term=True) == got
    # coupled in ybar: the cross term adds sum_i f_0i gamma_i
    g = OuterFunction.quadratic([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    diff = generator_A(g, 0.0, ybar, z, nu, c, basis, cross_term=True) - generator_A(g, 0.0, ybar, z, nu, c, basis)
    assert diff == pytest.approx(gamma[0], rel=1e-12, abs=1e-14)
    with pytest.raises(DimensionError):
        generator_A(OuterFunction.square(), 0.0, ybar, z, nu, c, basis)


def test_cylinder_function_validation():
    with pytest.raises(ParameterError):
        CylindricalFunction.of(OuterFunction.square(), [])
    F = CylindricalFunction.of(OuterFunction.linear([2.0, 1.0], const=1.0), [Coordinate(), Square()])
    nu = WeightedAtomMeasure(np.array([[1.0], [2.0]]), np.array([0.5, 0.25]))
    assert F.k == 2 and F(nu) == pytest.approx(1 + 2 * 1.0 + 1.5)
