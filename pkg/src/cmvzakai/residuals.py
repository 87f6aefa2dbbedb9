"""Weak-form residual checks on simulated trajectories.

Every checker works along the simulated observation path: stochastic integrals
use the recorded increments ``dY`` at the left point, and the coefficients see
exactly the law the simulator used at each step. Monte Carlo error bars come
from resampling particles (bootstrap).

For the Zakai residual of a test function ``phi`` the per-step error of the
Euler/exact-exponential scheme contains, beside the particle martingale
``(1/N) sum_i L^i sigma^T grad phi dB1^i`` that averages out in ``N``, a term
``c_k (dY_k^2 - dt)`` shared by all particles with
``c_k = <nu_k, 1/2 rho^T Hess phi rho + h rho . grad phi + 1/2 h^2 phi>``. Its
accumulated size ``sqrt(2 dt sum_k c_k^2 dt)`` is reported as ``disc_scale``;
it shrinks like ``sqrt(dt)`` and not with ``N``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .coefficients import CoefficientSet
from .errors import GridError, ParameterError
from .measures import (
    WeightedAtomMeasure,
    metric_d,
    mollified_inner,
    mollified_l2_distance,
    pair,
)
from .operators import (
    CylindricalFunction,
    generator_measure,
    lifted_coefficients,
    operator_terms_stacked,
)
from .particles import (
    SimulationConfig,
    Trajectory,
    observation_path,
    simulate_canonical,
    simulate_frozen_mu,
    y_argument,
)
from .testfunctions import BasisFunction, TestFunctionBasis, dyadic_bump_basis, stacked_derivs

N_BOOT = 200
Z_THRESHOLD = 5.0


def _function_name(phi) -> str:
    return getattr(phi, "name", type(phi).__name__)


@dataclass
class ResidualReport:
    """Residual path of one weak-form identity with its error bars.

    ``standardized`` is ``terminal / se``; ``passed`` is
    ``|standardized| <= threshold``. ``predicted_scale`` is
    ``mc_scale + disc_scale``.
    """

    name: str
    times: np.ndarray
    residual: np.ndarray
    se: float
    N: int
    dt: float
    mc_scale: float
    disc_scale: float = 0.0
    threshold: float = Z_THRESHOLD
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def terminal(self) -> float:
        return float(self.residual[-1])

    @property
    def terminal_rms(self) -> float:
        return float(self.extra.get("terminal_rms", abs(self.terminal)))

    @property
    def predicted_scale(self) -> float:
        return self.mc_scale + self.disc_scale

    @property
    def standardized(self) -> float:
        if self.se > 0:
            return self.terminal / self.se
        return 0.0 if self.terminal == 0 else math.copysign(math.inf, self.terminal)

    @property
    def passed(self) -> bool:
        return abs(self.standardized) <= self.threshold

    def to_dict(self, with_path: bool = True) -> dict:
        out = {
            "name": self.name,
            "terminal": self.terminal,
            "terminal_rms": self.terminal_rms,
            "se": self.se,
            "standardized": self.standardized,
            "mc_scale": self.mc_scale,
            "disc_scale": self.disc_scale,
            "predicted_scale": self.predicted_scale,
            "N": self.N,
            "dt": self.dt,
            "threshold": self.threshold,
            "passed": self.passed,
        }
        out.update({k: v for k, v in self.extra.items() if np.isscalar(v) or isinstance(v, (str, bool))})
        if with_path:
            out["times"] = [float(t) for t in self.times]
            out["residual"] = [float(r) for r in self.residual]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_rows(self) -> list[tuple[str, float, float]]:
        return [(self.name, float(t), float(r)) for t, r in zip(self.times, self.residual)]


def reports_to_csv(reports: list[ResidualReport], config_hash: str = "") -> str:
    """Per-time residual paths, columns ``config_hash,name,t,residual``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash", "name", "t", "residual"])
    for rep in reports:
        for name, t, r in rep.csv_rows():
            w.writerow([config_hash, name, repr(t), repr(r)])
    return buf.getvalue()


def _require_full(traj: Trajectory) -> None:
    if not traj.full:
        raise GridError("residual checks need a trajectory stored at every grid point")


def _bootstrap_se(contrib: np.ndarray, n_boot: int, seed: int) -> np.ndarray:
    """Bootstrap SE of the particle mean of ``contrib`` (shape ``(N, K)``)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    N = contrib.shape[0]
    means = np.empty((n_boot, contrib.shape[1]))
    for b in range(n_boot):
        means[b] = contrib[rng.integers(0, N, N)].mean(axis=0)
    return means.std(axis=0, ddof=1)


def _step_values(traj: Trajectory, coeffs: CoefficientSet, k: int):
    x = traj.X[k]
    y = y_argument(coeffs, traj.Y[: k + 1])
    return x, coeffs.eval(traj.times[k], x, y, traj.coefficient_law(k, coeffs))


def zakai_residuals(
    traj: Trajectory,
    coeffs: CoefficientSet,
    functions,
    n_boot: int = N_BOOT,
    bootstrap_seed: int = 0,
    threshold: float = Z_THRESHOLD,
) -> list[ResidualReport]:
    """Zakai weak-form residual for each function in ``functions``.

    ``R(t_m) = <nu_m, phi> - <nu_0, phi> - sum_{k<m} <nu_k, L phi> dt
    - sum_{k<m} <nu_k, H phi> dY_k``.
    """
    _require_full(traj)
    funcs = list(functions)
    K, N, n, dt = len(funcs), traj.N, traj.n_steps, traj.dt
    dY = traj.dY
    pairs = np.empty((n + 1, K))
    drift = np.zeros((n + 1, K))
    contrib = np.zeros((N, K))
    c_floor = np.zeros((n, K))
    for k in range(n + 1):
        L = np.exp(traj.logw[k])
        w = L / N
        x = traj.X[k]
        if k == n:
            vals = np.stack([f.value(x) for f in funcs], axis=1)
            pairs[k] = w @ vals
            contrib += L[:, None] * vals
            break
        _, v = _step_values(traj, coeffs, k)
        vals, Lphi, Hphi, Qphi = operator_terms_stacked(funcs, x, v)
        pairs[k] = w @ vals
        if k == 0:
            contrib -= L[:, None] * vals
        inc = Lphi * dt + Hphi * dY[k]
        drift[k + 1] = drift[k] + w @ inc
        contrib -= L[:, None] * inc
        c_floor[k] = w @ Qphi
    resid = pairs - pairs[0] - drift
    se = _bootstrap_se(contrib, n_boot, bootstrap_seed)
    floor = np.sqrt(2.0 * dt * np.sum(c_floor**2, axis=0) * dt)
    return [
        ResidualReport(
            name=_function_name(f),
            times=traj.times,
            residual=resid[:, j],
            se=float(se[j]),
            N=N,
            dt=dt,
            mc_scale=float(se[j]),
            disc_scale=float(floor[j]),
            threshold=threshold,
            extra={"terminal_particle_mean": float(contrib[:, j].mean())},
        )
        for j, f in enumerate(funcs)
    ]


def zakai_residual(traj: Trajectory, coeffs: CoefficientSet, phi: BasisFunction, **kw) -> ResidualReport:
    return zakai_residuals(traj, coeffs, [phi], **kw)[0]


def ks_identity_check(traj: Trajectory, basis, tol: float = 1e-12) -> dict:
    """Max over the recorded grid and the basis of
    ``|<mu, phi><nu, 1> - <nu, phi>| / <nu, |phi|>``."""
    worst = 0.0
    where = None
    for s, k in enumerate(traj.record_idx):
        nu = WeightedAtomMeasure(traj.X[s], np.exp(traj.logw[s]) / traj.N)
        mu = traj.mu(int(k))
        mass = nu.total_mass()
        for j, f in enumerate(basis):
            vals = f.value(nu.positions)
            scale = float(nu.weights @ np.abs(vals))
            if scale == 0:
                continue
            err = abs(pair(mu, f) * mass - pair(nu, f)) / scale
            if err > worst:
                worst, where = err, (int(k), j)
    return {"max_relative_error": worst, "witness": where, "tolerance": tol, "passed": worst <= tol}


def martingale_check(trajs_or_masses, threshold: float = 3.0, min_paths: int = 30) -> dict:
    """z-score of the mean terminal mass against 1 over independent paths."""
    masses = np.asarray(
        [t.mass[-1] if isinstance(t, Trajectory) else t for t in trajs_or_masses], dtype=float
    )
    M = len(masses)
    if M < min_paths:
        raise ParameterError(f"martingale check needs at least {min_paths} paths, got {M}")
    mean = float(masses.mean())
    se = float(masses.std(ddof=1) / math.sqrt(M))
    if se > 0:
        z = (mean - 1.0) / se
    else:
        z = 0.0 if mean == 1.0 else math.inf
    return {"mean": mean, "se": se, "z": z, "M": M, "threshold": threshold, "passed": abs(z) <= threshold}


@dataclass
class EmpiricalLaw:
    """Uniform mixture of Diracs at ``M`` measure paths sharing one observation path."""

    trajectories: list[Trajectory]

    def __post_init__(self):
        if not self.trajectories:
            raise ParameterError("an empirical law needs at least one measure path")
        t0 = self.trajectories[0]
        for tr in self.trajectories[1:]:
            if not (np.array_equal(tr.times, t0.times) and np.array_equal(tr.Y, t0.Y)):
                raise GridError("measure paths must share the time grid and the observation path")

    @property
    def M(self) -> int:
        return len(self.trajectories)

    @property
    def times(self) -> np.ndarray:
        return self.trajectories[0].times

    @property
    def Y(self) -> np.ndarray:
        return self.trajectories[0].Y

    def measures(self, k: int) -> list[WeightedAtomMeasure]:
        return [tr.nu(k) for tr in self.trajectories]

    def pair(self, k: int, F) -> float:
        return float(np.mean([F(n) for n in self.measures(k)]))


def cfpe_residual(
    law: EmpiricalLaw,
    F: CylindricalFunction,
    coeffs: CoefficientSet,
    n_boot: int = N_BOOT,
    bootstrap_seed: int = 0,
    threshold: float = Z_THRESHOLD,
) -> ResidualReport:
    """Conditional Fokker-Planck residual of a cylinder function.

    ``R(t_m) = <P_m, F> - <P_0, F> - sum_k <P_k, G F> dt
    - sum_k <P_k, sum_i f_i(<n, psi>) <n, H psi_i>> dY_k`` with ``G`` the
    measure-space generator. The error bar resamples particles inside every
    member and propagates through the linearisation
    ``sum_k grad f(u_k) . (particle Zakai increments)``.
    """
    if coeffs.y_dependence != "state":
        raise ParameterError("the conditional Fokker-Planck check needs state-dependent coefficients")
    for tr in law.trajectories:
        _require_full(tr)
    times, dY = law.times, np.diff(law.Y)
    n, dt = len(times) - 1, float(times[1] - times[0])
    psis = F.psis
    M = law.M
    member_paths = np.zeros((M, n + 1))
    influences = []
    floor_sq = np.zeros(M)
    bias = np.zeros(M)
    for j, tr in enumerate(law.trajectories):
        N = tr.N
        infl = np.zeros(N)
        u_prev = g_prev = None
        acc = 0.0
        F0 = None
        for k in range(n + 1):
            x = tr.X[k]
            L = np.exp(tr.logw[k])
            nu = WeightedAtomMeasure(x, L / N)
            vals = np.stack([p.value(x) for p in psis], axis=1)
            u = nu.weights @ vals
            Fk = float(F.outer.f(u))
            if k == 0:
                F0 = Fk
            else:
                # particle increment of the Zakai residual for each psi_i
                infl += (L[:, None] * vals - prev_part) @ g_prev
            member_paths[j, k] = Fk - F0 - acc
            if k == n:
                break
            y = float(tr.Y[k])
            _, v = _step_values(tr, coeffs, k)
            G = generator_measure(F, nu, float(times[k]), y, coeffs, values=v)
            _, Lpsi, Hpsi, Qpsi = operator_terms_stacked(psis, x, v)
            gamma = nu.weights @ Hpsi
            g = np.asarray(F.outer.grad(u), dtype=float)
            acc += G * dt + float(g @ gamma) * dY[k]
            prev_part = L[:, None] * (vals + Lpsi * dt + Hpsi * dY[k])
            g_prev = g
            Hf = np.asarray(F.outer.hess(u), dtype=float)
            ck = nu.weights @ Qpsi
            floor_sq[j] += (0.5 * gamma @ Hf @ gamma + g @ ck) ** 2 * 2 * dt * dt
            # quadratic variation of the particle noise seen by a nonlinear f
            sg = np.einsum("nij,nki->nkj", v.sigma, stacked_derivs(psis, x)[1])
            bias[j] += 0.5 * float(nu.weights**2 @ np.einsum("nki,kl,nli->n", sg, Hf, sg)) * dt
        influences.append(infl)
    resid = member_paths.mean(axis=0)
    # bootstrap of the linearised residual, particles resampled within members
    rng = np.random.default_rng(np.random.SeedSequence(bootstrap_seed, spawn_key=(11,)))
    boots = np.zeros(n_boot)
    for b in range(n_boot):
        boots[b] = np.mean([inf[rng.integers(0, len(inf), len(inf))].mean() for inf in influences])
    se = float(boots.std(ddof=1))
    return ResidualReport(
        name=f"cfpe[{F.outer.name};k={F.k}]",
        times=times,
        residual=resid,
        se=se,
        N=law.trajectories[0].N,
        dt=dt,
        mc_scale=se,
        disc_scale=float(np.sqrt(floor_sq.mean())),
        threshold=threshold,
        extra={
            "M": M,
            "member_terminal_rms": float(np.sqrt(np.mean(member_paths[:, -1] ** 2))),
            "finite_n_bias": float(bias.mean()),
        },
    )


def rinf_sde_residual(traj: Trajectory, coeffs: CoefficientSet, basis, K: int) -> list[ResidualReport]:
    """Residual of ``dZ^i = beta_i dt + gamma_i dY`` along ``Z^i = <nu, phi_i>``
    with the lifted coefficients at the live measure, ``i = 1..K``.

    ``extra`` carries the ``alpha_ii`` and ``gamma_i`` paths. Error bars are the
    particle bootstrap of the matching Zakai residual.
    """
    _require_full(traj)
    if K > len(basis):
        raise ParameterError(f"K={K} exceeds basis length {len(basis)}")
    funcs = list(basis)[:K]
    n, dt, dY = traj.n_steps, traj.dt, traj.dY
    Z = np.empty((n + 1, K))
    alpha_diag = np.empty((n, K))
    gammas = np.empty((n, K))
    acc = np.zeros((n + 1, K))
    for k in range(n + 1):
        nu = traj.nu(k)
        Z[k] = [pair(nu, f) for f in funcs]
        if k == n:
            break
        y = y_argument(coeffs, traj.Y[: k + 1])
        if traj.frozen is not None and coeffs.uses_mu:
            raise ParameterError("the lift check applies to live (not frozen-law) trajectories")
        alpha, beta, gamma = lifted_coefficients(float(traj.times[k]), y, nu, coeffs, funcs)
        alpha_diag[k] = np.diag(alpha)
        gammas[k] = gamma
        acc[k + 1] = acc[k] + beta * dt + gamma * dY[k]
    resid = Z - Z[0] - acc
    zak = zakai_residuals(traj, coeffs, funcs, n_boot=N_BOOT)
    return [
        ResidualReport(
            name=f"rinf[{i}]",
            times=traj.times,
            residual=resid[:, i],
            se=zak[i].se,
            N=traj.N,
            dt=dt,
            mc_scale=zak[i].mc_scale,
            disc_scale=zak[i].disc_scale,
            extra={
                "alpha_ii": alpha_diag[:, i],
                "gamma_i": gammas[:, i],
                "max_abs_diff_vs_zakai": float(np.max(np.abs(resid[:, i] - zak[i].residual))),
            },
        )
        for i in range(K)
    ]


def regularity_phi(law: EmpiricalLaw, coeffs: CoefficientSet, p: float) -> dict:
    """Left-point Riemann sum over time of the law-average of
    ``|b|^p + |sigma sigma^T|^p + |rho|^{2p} + |h|^{2p}`` in ``L1(|n|)`` norms."""
    if not p > 1:
        raise ParameterError("the integrability exponent must exceed 1")
    times = law.times
    n, dt = len(times) - 1, float(times[1] - times[0])
    total = 0.0
    for k in range(n):
        vals = []
        for tr in law.trajectories:
            x, v = _step_values(tr, coeffs, k)
            w = np.exp(tr.logw[k]) / tr.N
            nb = w @ np.linalg.norm(v.b, axis=1)
            ns = w @ np.linalg.norm(np.einsum("nij,nkj->nik", v.sigma, v.sigma), axis=(1, 2))
            nr = w @ np.linalg.norm(v.rho, axis=1)
            nh = w @ np.abs(v.h)
            vals.append(nb**p + ns**p + nr ** (2 * p) + nh ** (2 * p))
        total += float(np.mean(vals)) * dt
    return {"Phi_T": total, "p": p, "finite": math.isfinite(total)}


def decay_rate(coeffs: CoefficientSet) -> float:
    """``alpha = |b|_{C1} + |h|_{C1} + |rho|_{C2}^2 + |sigma|_{C2}^2`` from the
    declared sup norms."""
    s = coeffs.sup_norms
    missing = {"b", "h", "rho", "sigma"} - set(s)
    if missing:
        raise ParameterError(f"coefficient set lacks declared sup norms {sorted(missing)}")
    return float(s["b"] + s["h"] + s["rho"] ** 2 + s["sigma"] ** 2)


def lyapunov_decay(
    trajs: list[Trajectory],
    delta: float,
    coeffs: CoefficientSet,
    K_const: float,
    every: int = 1,
    tolerance: float = 0.02,
    workers: int = 1,
) -> dict:
    """Replica average of ``beta_t |G_delta * nu_t|_2^2`` with
    ``beta_t = exp(-K_const alpha t)``; reports the largest upward step
    relative to the initial value."""
    if not delta > 0:
        raise ParameterError("mollification width must be positive")
    alpha = decay_rate(coeffs)
    idx = np.arange(0, trajs[0].n_steps + 1, every)

    def one(tr):
        return np.array([mollified_inner(tr.nu(int(k)), tr.nu(int(k)), delta) for k in idx])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            norms = np.array(list(pool.map(one, trajs)))
    else:
        norms = np.array([one(tr) for tr in trajs])
    t = trajs[0].times[idx]
    beta = np.exp(-K_const * alpha * t)
    path = beta * norms.mean(axis=0)
    ups = np.diff(path) / path[0]
    uptick = float(max(0.0, ups.max())) if len(ups) else 0.0
    return {
        "times": t,
        "path": path,
        "alpha": alpha,
        "K": K_const,
        "max_uptick": uptick,
        "tolerance": tolerance,
        "passed": uptick <= tolerance,
        "M": len(trajs),
    }


def roundtrip_check(
    config: SimulationConfig,
    coeffs: CoefficientSet,
    N_list,
    M_Y: int,
    K: int = 16,
    delta: float = 0.1,
    basis: TestFunctionBasis | None = None,
    workers: int = 1,
    with_l2: bool = True,
) -> dict:
    """Freeze the simulated law, rerun with fresh idiosyncratic noise, and
    compare terminal unnormalised measures, per ``N``. Medians over ``M_Y``
    observation paths must strictly decrease in ``N``."""
    N_list = list(N_list)
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ParameterError("N_list must be increasing")
    basis = dyadic_bump_basis(config.d, K) if basis is None else basis

    def one(args):
        N, r = args
        cfg = SimulationConfig(**{**config.to_dict(), "N": N, "store": "full", "record_every": 1})
        Y = observation_path(cfg, r)
        live = simulate_canonical(cfg, coeffs, replica=r, Y=Y)
        frozen = simulate_frozen_mu(cfg, coeffs, live.mu_path(), Y, replica=r, fresh_noise=True)
        a, b = live.nu(live.n_steps), frozen.nu(frozen.n_steps)
        return metric_d(a, b, K, basis), (mollified_l2_distance(a, b, delta) if with_l2 else float("nan"))

    jobs = [(N, r) for N in N_list for r in range(M_Y)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            res = list(pool.map(one, jobs))
    else:
        res = [one(j) for j in jobs]
    rows = []
    for i, N in enumerate(N_list):
        chunk = res[i * M_Y : (i + 1) * M_Y]
        dvals = [c[0] for c in chunk]
        lvals = [c[1] for c in chunk]
        rows.append(
            {
                "N": N,
                "median_metric_d": float(np.median(dvals)),
                "median_mollified_l2": float(np.median(lvals)),
                "metric_d": dvals,
            }
        )
    med = [r["median_metric_d"] for r in rows]
    return {
        "rows": rows,
        "decreasing": all(b < a for a, b in zip(med, med[1:])),
        "M_Y": M_Y,
        "K": K,
    }


def zakai_rms_sweep(
    config: SimulationConfig,
    coeffs: CoefficientSet,
    functions,
    N_list,
    M_Y: int,
    workers: int = 1,
    n_boot: int = 20,
) -> dict:
    """Terminal Zakai residual RMS (over paths and functions) per particle
    count, with the least-squares log-log slope. Every ``N`` reuses the same
    ``M_Y`` observation paths."""
    funcs = list(functions)
    N_list = list(N_list)

    def one(args):
        N, r = args
        cfg = SimulationConfig(**{**config.to_dict(), "N": N, "store": "full", "record_every": 1})
        tr = simulate_canonical(cfg, coeffs, replica=r)
        reps = zakai_residuals(tr, coeffs, funcs, n_boot=n_boot, bootstrap_seed=r)
        return [rep.terminal for rep in reps], [rep.se for rep in reps], [rep.disc_scale for rep in reps]

    jobs = [(N, r) for N in N_list for r in range(M_Y)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            res = list(pool.map(one, jobs))
    else:
        res = [one(j) for j in jobs]
    rows = []
    for i, N in enumerate(N_list):
        chunk = res[i * M_Y : (i + 1) * M_Y]
        term = np.array([c[0] for c in chunk])
        rows.append(
            {
                "N": N,
                "rms": float(np.sqrt(np.mean(term**2))),
                "mean_se": float(np.sqrt(np.mean(np.square([c[1] for c in chunk])))),
                "mean_disc_scale": float(np.sqrt(np.mean(np.square([c[2] for c in chunk])))),
            }
        )
    slope = float(np.polyfit(np.log(N_list), np.log([r["rms"] for r in rows]), 1)[0]) if len(N_list) > 1 else float("nan")
    return {"rows": rows, "slope": slope, "M_Y": M_Y, "n_functions": len(funcs)}
