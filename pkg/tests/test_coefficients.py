from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmvzakai.coefficients import (
    FAMILIES,
    CoefficientSet,
    FrozenMuPath,
    check_lipschitz,
    check_nondegeneracy,
    family_parameters,
    make_coefficients,
)
from cmvzakai.errors import CoefficientError, GridError, ParameterError
from cmvzakai.measures import ProbabilityAtomMeasure


def law(points):
    return ProbabilityAtomMeasure.empirical(np.asarray(points, dtype=float).reshape(-1, 1))


@pytest.mark.parametrize("family", sorted(FAMILIES))
@pytest.mark.parametrize("d", [1, 2])
def test_family_shapes(family, d):
    c = make_coefficients(family, d=d)
    x = np.linspace(-1, 1, 6 * d).reshape(6, d)
    y = np.zeros(4) if c.y_dependence == "path" else 0.3
    mu = ProbabilityAtomMeasure.empirical(x) if c.uses_mu else None
    v = c.eval(0.1, x, y, mu)
    assert v.b.shape == (6, d) and v.sigma.shape == (6, d, d) and v.rho.shape == (6, d) and v.h.shape == (6,)
    assert set(c.sup_norms) == {"b", "h", "rho", "sigma"}


def test_mean_field_needs_law():
    c = make_coefficients("cmv_tanh")
    with pytest.raises(ParameterError):
        c.eval(0.0, np.zeros((2, 1)), 0.0)
    v1 = c.eval(0.0, np.zeros((1, 1)), 0.0, law([0.0]))
    v2 = c.eval(0.0, np.zeros((1, 1)), 0.0, law([1.0, 2.0]))
    assert v2.b[0, 0] - v1.b[0, 0] == pytest.approx(0.5 * np.tanh(1.5))


def test_linear_gaussian_closed_form():
    c = make_coefficients("linear_gaussian", {"a": -0.7, "c": 2.0, "rho": 0.4})
    v = c.eval(0.0, np.array([[1.5]]), 0.0)
    assert v.b[0, 0] == pytest.approx(-1.05) and v.h[0] == pytest.approx(3.0) and v.rho[0, 0] == 0.4
    assert c.oracle_only


def test_non_finite_output_raises():
    c = CoefficientSet(
        "bad", 1, b=lambda t, x, y, mu: np.log(x), sigma=lambda t, x, y, mu: np.ones((x.shape[0], 1, 1)),
        rho=lambda t, x, y, mu: np.zeros((x.shape[0], 1)), h=lambda t, x, y, mu: np.zeros(x.shape[0]),
    )
    with np.errstate(all="ignore"), pytest.raises(CoefficientError, match="particle 1"):
        c.eval(0.0, np.array([[1.0], [-1.0]]), 0.0)


def test_declared_dependence_validated():
    f = lambda t, x, y, mu: 0.0  # noqa: E731
    with pytest.raises(ParameterError):
        CoefficientSet("x", 1, f, f, f, f, y_dependence="future")
    with pytest.raises(ParameterError):
        CoefficientSet("x", 1, f, f, f, f, mu_dependence="path")


def test_parameters_and_hash():
    assert family_parameters("mean_field_linear")["abar"] == 0.5
    assert family_parameters("linear_gaussian", {"a": 1.0})["a"] == 1.0
    with pytest.raises(ParameterError):
        make_coefficients("linear_gaussian", {"sigmma": 1.0})
    with pytest.raises(ParameterError):
        make_coefficients("nonexistent")
    a = make_coefficients("cmv_tanh", {"kappa": 2.0})
    assert a.content_hash() == make_coefficients("cmv_tanh", {"kappa": 2.0}).content_hash()
    assert a.content_hash() != make_coefficients("cmv_tanh", {"kappa": 2.5}).content_hash()
    assert make_coefficients("linear_gaussian", {"c_lip": 7.0}).c_lip == 7.0


@pytest.mark.parametrize("family", ["bounded_smooth", "cmv_tanh", "linear_gaussian", "mean_field_linear", "path_tanh"])
def test_declared_lipschitz_constants_hold(family):
    rep = check_lipschitz(make_coefficients(family), n_probes=400)
    assert rep.passed, rep.to_dict()
    assert rep.max_ratio <= rep.declared * (1 + 1e-6)


def test_slope_two_drift_fails_unit_lipschitz():
    rep = check_lipschitz(make_coefficients("linear_gaussian", {"a": 2.0, "c_lip": 1.0}), n_probes=400)
    assert not rep.passed
    assert rep.per_coefficient["b"] == pytest.approx(2.0, rel=1e-6)
    assert set(rep.witness["b"]) == {"t", "x", "x_prime", "w1"}


def test_nondegeneracy():
    bad = check_nondegeneracy(make_coefficients("degenerate"), n_probes=50)
    assert not bad.passed and abs(bad.min_eigenvalue) < 1e-12
    good = check_nondegeneracy(make_coefficients("bounded_smooth"), n_probes=50)
    assert good.passed and good.min_eigenvalue == pytest.approx(1 - 0.3**2)
    assert set(bad.to_dict()) == {"passed", "declared_sigma0", "min_eigenvalue", "witness", "n_probes"}


@given(st.floats(0.0, 0.999))
def test_frozen_path_is_left_continuous(t):
    times = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    ms = [law([k]) for k in range(5)]
    fp = FrozenMuPath(times, ms)
    k = int(np.floor(t / 0.25))
    assert fp.at(t) is ms[k]
    assert fp.at_index(2) is ms[2]


def test_frozen_path_validation():
    with pytest.raises(GridError):
        FrozenMuPath(np.array([0.0, 1.0]), [law([0.0])])
    with pytest.raises(GridError):
        FrozenMuPath(np.array([0.0, 0.0]), [law([0.0]), law([0.0])])


def test_constant_family_declares_sigma0():
    c = make_coefficients("constant", {"sigma": 1.0, "rho": 0.6})
    assert c.sigma0 == pytest.approx(0.64)
    v = c.eval(0.0, np.zeros((3, 1)), 0.0)
    assert np.all(v.h == 0) and np.all(v.b == 0)
