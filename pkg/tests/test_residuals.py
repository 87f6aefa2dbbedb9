from __future__ import annotations

import json

import numpy as np
import pytest

from cmvzakai.coefficients import make_coefficients
from cmvzakai.errors import GridError, ParameterError
from cmvzakai.operators import CylindricalFunction, OuterFunction
from cmvzakai.particles import SimulationConfig, nu_ensemble, simulate_canonical
from cmvzakai.residuals import (
    EmpiricalLaw,
    ResidualReport,
    cfpe_residual,
    decay_rate,
    ks_identity_check,
    lyapunov_decay,
    martingale_check,
    regularity_phi,
    reports_to_csv,
    rinf_sde_residual,
    roundtrip_check,
    zakai_residual,
    zakai_residuals,
    zakai_rms_sweep,
)
from cmvzakai.testfunctions import Bump, Constant, dyadic_bump_basis

GAUSS0 = {"kind": "gaussian", "mean": 0.0, "var": 1.0}


def cfg(**kw):
    base = dict(N=200, T=0.2, dt=0.01, seed=21, x0=GAUSS0)
    base.update(kw)
    return SimulationConfig(**base)


def test_nothing_moves_gives_zero_residual():
    coeffs = make_coefficients("constant")
    tr = simulate_canonical(cfg(), coeffs)
    for rep in zakai_residuals(tr, coeffs, dyadic_bump_basis(1, 8), n_boot=10):
        assert np.all(rep.residual == 0.0)
        assert rep.standardized == 0.0 and rep.passed


def test_unit_function_without_observation_drift_is_conserved():
    coeffs = make_coefficients("common_noise")
    tr = simulate_canonical(cfg(), coeffs)
    rep = zakai_residual(tr, coeffs, Constant(), n_boot=10)
    assert np.all(rep.residual == 0.0)


def test_zakai_residual_definition_by_hand():
    coeffs = make_coefficients("bounded_smooth")
    tr = simulate_canonical(cfg(N=30, T=0.05), coeffs)
    phi = Bump(center=(0.0,), radius=2.0)
    rep = zakai_residual(tr, coeffs, phi, n_boot=10)
    acc = 0.0
    for k in range(tr.n_steps):
        nu = tr.nu(k)
        v = coeffs.eval(tr.times[k], nu.positions, float(tr.Y[k]))
        a = v.sigma[:, 0, 0] ** 2 + v.rho[:, 0] ** 2
        Lphi = 0.5 * a * phi.hess(nu.positions)[:, 0, 0] + v.b[:, 0] * phi.grad(nu.positions)[:, 0]
        Hphi = v.rho[:, 0] * phi.grad(nu.positions)[:, 0] + v.h * phi.value(nu.positions)
        acc += nu.weights @ Lphi * tr.dt + nu.weights @ Hphi * tr.dY[k]
    direct = nu_pair(tr, phi, tr.n_steps) - nu_pair(tr, phi, 0) - acc
    assert rep.terminal == pytest.approx(direct, rel=1e-10, abs=1e-15)
    assert rep.se > 0 and rep.disc_scale > 0
    assert rep.extra["terminal_particle_mean"] == pytest.approx(rep.terminal, rel=1e-9, abs=1e-15)


def nu_pair(tr, phi, k):
    nu = tr.nu(k)
    return float(nu.weights @ phi.value(nu.positions))


def test_residuals_are_deterministic():
    coeffs = make_coefficients("cmv_tanh")
    tr = simulate_canonical(cfg(), coeffs)
    a = zakai_residuals(tr, coeffs, dyadic_bump_basis(1, 5), n_boot=20, bootstrap_seed=3)
    b = zakai_residuals(tr, coeffs, dyadic_bump_basis(1, 5), n_boot=20, bootstrap_seed=3)
    assert [r.to_json() for r in a] == [r.to_json() for r in b]


def test_summary_trajectories_rejected():
    coeffs = make_coefficients("bounded_smooth")
    tr = simulate_canonical(cfg(store="summary", record_every=5), coeffs)
    with pytest.raises(GridError):
        zakai_residual(tr, coeffs, Constant())


def test_report_serialisation():
    rep = ResidualReport("phi", np.array([0.0, 0.1]), np.array([0.0, 0.3]), se=0.1, N=10, dt=0.1, mc_scale=0.1,
                         disc_scale=0.05, extra={"note": "x", "path": np.zeros(2)})
    d = json.loads(rep.to_json())
    assert d["standardized"] == pytest.approx(3.0) and d["passed"] and d["note"] == "x" and "path" not in d
    assert d["predicted_scale"] == pytest.approx(0.15)
    text = reports_to_csv([rep], "abc")
    assert text.splitlines()[0] == "config_hash,name,t,residual"
    assert text.splitlines()[2] == "abc,phi,0.1,0.3"
    zero = ResidualReport("z", np.zeros(1), np.array([1e-3]), se=0.0, N=1, dt=0.1, mc_scale=0.0)
    assert not zero.passed


# --- Kallianpur-Striebel and the reference martingale -------------------------


def test_ks_identity_holds_and_detects_tampering():
    coeffs = make_coefficients("linear_gaussian")
    tr = simulate_canonical(cfg(), coeffs)
    basis = dyadic_bump_basis(1, 20)
    rep = ks_identity_check(tr, basis)
    assert rep["passed"] and rep["max_relative_error"] <= 1e-12
    rng = np.random.default_rng(0)
    tr.logw[3] = rng.normal(0, 3, size=tr.N)
    assert ks_identity_check(tr, basis)["max_relative_error"] <= 1e-12
    common = simulate_canonical(cfg(), make_coefficients("common_noise"))
    assert ks_identity_check(common, basis)["max_relative_error"] == 0.0


def test_martingale_check():
    rep = martingale_check([1.0] * 30)
    assert rep == {"mean": 1.0, "se": 0.0, "z": 0.0, "M": 30, "threshold": 3.0, "passed": True}
    with pytest.raises(ParameterError):
        martingale_check([1.0] * 10)
    assert not martingale_check([1.1] * 30)["passed"]


# --- conditional Fokker-Planck -------------------------------------------------


def test_cfpe_dirac_reduction_and_constant_outer():
    coeffs = make_coefficients("cmv_tanh")
    tr = simulate_canonical(cfg(), coeffs)
    psi = Bump(center=(0.0,), radius=1.0)
    lin = cfpe_residual(EmpiricalLaw([tr]), CylindricalFunction.of(OuterFunction.linear([1.0]), [psi]), coeffs, n_boot=20)
    zak = zakai_residual(tr, coeffs, psi, n_boot=20)
    assert np.max(np.abs(lin.residual - zak.residual)) <= 1e-10
    const = cfpe_residual(EmpiricalLaw([tr]), CylindricalFunction.of(OuterFunction.constant(1, 2.0), [psi]), coeffs, n_boot=5)
    assert np.all(const.residual == 0.0)


def test_cfpe_on_randomised_ensemble_reports_bias_and_floor():
    coeffs = make_coefficients("linear_gaussian")
    members = nu_ensemble(cfg(M_nu=4), coeffs)
    rep = cfpe_residual(EmpiricalLaw(members), CylindricalFunction.of(OuterFunction.square(), [Bump(center=(0.0,), radius=1.0)]),
                        coeffs, n_boot=30)
    assert rep.extra["M"] == 4 and rep.se > 0
    assert rep.extra["finite_n_bias"] >= 0 and rep.disc_scale >= 0
    assert len(rep.residual) == len(members[0].times) and rep.residual[0] == 0.0


def test_cfpe_preconditions():
    coeffs = make_coefficients("path_tanh")
    tr = simulate_canonical(cfg(), coeffs)
    with pytest.raises(ParameterError):
        cfpe_residual(EmpiricalLaw([tr]), CylindricalFunction.of(OuterFunction.square(), [Constant()]), coeffs)
    other = simulate_canonical(cfg(seed=22), coeffs)
    with pytest.raises(GridError):
        EmpiricalLaw([tr, other])
    with pytest.raises(ParameterError):
        EmpiricalLaw([])


# --- lifted system -------------------------------------------------------------


def test_lift_is_the_zakai_residual():
    coeffs = make_coefficients("cmv_tanh")
    tr = simulate_canonical(cfg(), coeffs)
    reps = rinf_sde_residual(tr, coeffs, dyadic_bump_basis(1, 10), 8)
    assert len(reps) == 8
    for rep in reps:
        assert rep.extra["max_abs_diff_vs_zakai"] <= 1e-12
        assert np.array_equal(rep.extra["alpha_ii"], rep.extra["gamma_i"] ** 2)
    with pytest.raises(ParameterError):
        rinf_sde_residual(tr, coeffs, dyadic_bump_basis(1, 4), 8)


def test_lift_trivial_case():
    coeffs = make_coefficients("constant")
    tr = simulate_canonical(cfg(), coeffs)
    for rep in rinf_sde_residual(tr, coeffs, dyadic_bump_basis(1, 4), 4):
        assert np.all(rep.residual == 0.0)


# --- regularity and decay ------------------------------------------------------


def test_regularity_plug_in_values():
    zero = make_coefficients("constant")
    law = EmpiricalLaw([simulate_canonical(cfg(), zero)])
    assert regularity_phi(law, zero, 2.0)["Phi_T"] == 0.0
    unit_drift = make_coefficients("constant", {"b": 1.0})
    law = EmpiricalLaw([simulate_canonical(cfg(T=1.0, dt=0.05), unit_drift)])
    assert regularity_phi(law, unit_drift, 2.0)["Phi_T"] == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ParameterError):
        regularity_phi(law, unit_drift, 1.0)


def test_regularity_matches_direct_summation():
    coeffs = make_coefficients("bounded_smooth", {"sigma": 1.3, "rho": 0.4})
    members = nu_ensemble(cfg(N=40, M_nu=3), coeffs)
    p = 1.5
    total = 0.0
    for k in range(members[0].n_steps):
        acc = []
        for tr in members:
            nu = tr.nu(k)
            x, w = nu.positions[:, 0], nu.weights
            nb = np.sum(w * np.abs(np.tanh(x)))
            ns = np.sum(w) * 1.3**2
            nr = np.sum(w) * 0.4
            nh = np.sum(w * np.abs(np.tanh(x)))
            acc.append(nb**p + ns**p + nr ** (2 * p) + nh ** (2 * p))
        total += np.mean(acc) * 0.01
    assert regularity_phi(EmpiricalLaw(members), coeffs, p)["Phi_T"] == pytest.approx(total, rel=1e-12)


def test_lyapunov_flat_when_nothing_moves():
    coeffs = make_coefficients("constant")
    trajs = [simulate_canonical(cfg(N=30), coeffs, replica=r) for r in range(3)]
    rep = lyapunov_decay(trajs, 0.1, coeffs, 1.0)
    assert rep["alpha"] == 0.0 and rep["max_uptick"] == 0.0 and rep["passed"]
    assert np.allclose(rep["path"], rep["path"][0], rtol=1e-14)
    with pytest.raises(ParameterError):
        lyapunov_decay(trajs, 0.0, coeffs, 1.0)


def test_decay_rate_from_declared_norms():
    c = make_coefficients("constant", {"b": 0.5, "sigma": 2.0, "rho": 0.5, "h": 1.0})
    assert decay_rate(c) == pytest.approx(0.5 + 1.0 + 0.25 + 4.0)


# --- round trip and sweep ------------------------------------------------------


def test_roundtrip_structure():
    coeffs = make_coefficients("cmv_tanh")
    rep = roundtrip_check(cfg(T=0.1), coeffs, [20, 40], M_Y=2, K=4)
    assert [r["N"] for r in rep["rows"]] == [20, 40]
    assert all(len(r["metric_d"]) == 2 for r in rep["rows"])
    assert rep["K"] == 4 and isinstance(rep["decreasing"], bool)
    with pytest.raises(ParameterError):
        roundtrip_check(cfg(), coeffs, [40, 20], M_Y=1)


def test_rms_sweep_structure():
    coeffs = make_coefficients("bounded_smooth")
    res = zakai_rms_sweep(cfg(T=0.1), coeffs, dyadic_bump_basis(1, 3), [20, 80], M_Y=3, n_boot=5)
    assert [r["N"] for r in res["rows"]] == [20, 80]
    assert np.isfinite(res["slope"]) and res["n_functions"] == 3
