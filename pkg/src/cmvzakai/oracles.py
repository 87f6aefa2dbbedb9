"""Closed-form and brute-force references.

* Kalman-Bucy filter for the scalar linear signal with noise correlated to the
  observation, and its mean-field variant.
* Exact W1 by linear programming for tiny supports.
* Adaptive-quadrature evaluation of the mollified L2 inner product.
* JSON fixtures ``{oracle, params, seed, value, tolerance}`` so that recorded
  reference values are regenerable in-repo.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy import integrate, optimize

from .errors import OracleError
from .measures import WeightedAtomMeasure, gaussian_kernel

RICCATI_SUBSTEPS = 10


@dataclass(frozen=True)
class KalmanState:
    """Conditional mean and variance at one time."""

    m: float
    P: float


@dataclass
class KalmanPath:
    times: np.ndarray
    m: np.ndarray
    P: np.ndarray

    def state(self, k: int) -> KalmanState:
        return KalmanState(float(self.m[k]), float(self.P[k]))


def riccati_path(a: float, sigma: float, rho: float, c: float, P0: float, dt: float, n_steps: int) -> np.ndarray:
    """``dP/dt = 2 a P + sigma^2 + rho^2 - (c P + rho)^2`` by RK4 with
    ``RICCATI_SUBSTEPS`` substeps per grid interval; values on the grid."""
    if P0 < 0:
        raise OracleError("initial variance must be nonnegative")

    def f(P):
        return 2 * a * P + sigma**2 + rho**2 - (c * P + rho) ** 2

    h = dt / RICCATI_SUBSTEPS
    out = np.empty(n_steps + 1)
    P = float(P0)
    out[0] = P
    for k in range(n_steps):
        for _ in range(RICCATI_SUBSTEPS):
            k1 = f(P)
            k2 = f(P + 0.5 * h * k1)
            k3 = f(P + 0.5 * h * k2)
            k4 = f(P + h * k3)
            P = P + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not math.isfinite(P) or P < -1e-12:
            raise OracleError(f"Riccati solution left [0, inf) at step {k + 1}: P={P!r}")
        out[k + 1] = max(P, 0.0)
    return out


def _mean_path(drift_coef: float, c: float, rho: float, m0: float, P: np.ndarray, Y: np.ndarray, dt: float) -> np.ndarray:
    dY = np.diff(np.asarray(Y, dtype=float))
    m = np.empty(len(dY) + 1)
    m[0] = m0
    for k, dy in enumerate(dY):
        gain = c * P[k] + rho
        m[k + 1] = m[k] + drift_coef * m[k] * dt + gain * (dy - c * m[k] * dt)
        if not math.isfinite(m[k + 1]):
            raise OracleError(f"non-finite conditional mean at step {k + 1}")
    return m


def kalman_bucy_correlated(
    a: float, sigma: float, rho: float, c: float, m0: float, P0: float, Y, dt: float
) -> KalmanPath:
    """Kalman-Bucy filter for ``dX = aX dt + sigma dB1 + rho dB2``,
    ``dY = cX dt + dB2`` observed on a uniform grid with spacing ``dt``.

    The variance solves the Riccati equation (RK4, fine grid); the mean uses
    Euler on the observation grid with the left-point gain ``c P + rho``.
    """
    Y = np.asarray(Y, dtype=float)
    n = len(Y) - 1
    P = riccati_path(a, sigma, rho, c, P0, dt, n)
    m = _mean_path(a, c, rho, m0, P, Y, dt)
    return KalmanPath(np.arange(n + 1) * dt, m, P)


def meanfield_linear_mean(
    a: float, abar: float, sigma: float, rho: float, c: float, m0: float, P0: float, Y, dt: float
) -> KalmanPath:
    """Conditional mean for the drift ``a x + abar <mu, id>``: the mean sees
    ``a + abar`` while the variance obeys the same Riccati equation as for ``a``."""
    Y = np.asarray(Y, dtype=float)
    n = len(Y) - 1
    P = riccati_path(a, sigma, rho, c, P0, dt, n)
    m = _mean_path(a + abar, c, rho, m0, P, Y, dt)
    return KalmanPath(np.arange(n + 1) * dt, m, P)


MAX_LP_ATOMS = 8


def w1_bruteforce(mu1: WeightedAtomMeasure, mu2: WeightedAtomMeasure) -> float:
    """Optimal transport cost with Euclidean ground cost, by LP over couplings."""
    n1, n2 = mu1.n_atoms, mu2.n_atoms
    if max(n1, n2) > MAX_LP_ATOMS:
        raise OracleError(f"LP oracle limited to {MAX_LP_ATOMS} atoms per measure")
    if mu1.d != mu2.d:
        raise OracleError("dimension mismatch")
    p = mu1.weights / mu1.weights.sum()
    q = mu2.weights / mu2.weights.sum()
    cost = np.linalg.norm(mu1.positions[:, None, :] - mu2.positions[None, :, :], axis=2)
    A_eq = np.zeros((n1 + n2, n1 * n2))
    for i in range(n1):
        A_eq[i, i * n2 : (i + 1) * n2] = 1.0
    for j in range(n2):
        A_eq[n1 + j, j::n2] = 1.0
    res = optimize.linprog(
        cost.ravel(), A_eq=A_eq, b_eq=np.concatenate([p, q]), bounds=(0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if not res.success:
        raise OracleError(f"transport LP failed: {res.message}")
    return float(res.fun)


def _mollified_density(nu: WeightedAtomMeasure, delta: float):
    def g(*x):
        pt = np.asarray(x, dtype=float)[None, :]
        return float(nu.weights @ gaussian_kernel(nu.positions - pt, delta))

    return g


def quadrature_mollified(
    nu1: WeightedAtomMeasure, nu2: WeightedAtomMeasure, delta: float, pad: float = 12.0, epsrel: float = 1e-11
) -> float:
    """``int (G_delta * nu1)(G_delta * nu2) dx`` by adaptive quadrature on a
    box padded by ``pad * sqrt(delta)`` around all atoms; ``d <= 2`` only."""
    if nu1.d != nu2.d or nu1.d > 2:
        raise OracleError("quadrature oracle supports d in {1, 2} and matching dimensions")
    g1 = _mollified_density(nu1, delta)
    g2 = _mollified_density(nu2, delta)
    allx = np.vstack([nu1.positions, nu2.positions])
    lo = allx.min(axis=0) - pad * math.sqrt(delta)
    hi = allx.max(axis=0) + pad * math.sqrt(delta)
    if nu1.d == 1:
        pts = np.sort(allx[:, 0])
        val, err = integrate.quad(lambda x: g1(x) * g2(x), lo[0], hi[0], points=pts, limit=500, epsabs=0, epsrel=epsrel)
    else:
        val, err = integrate.dblquad(
            lambda x2, x1: g1(x1, x2) * g2(x1, x2), lo[0], hi[0], lo[1], hi[1], epsabs=0, epsrel=epsrel
        )
    if not math.isfinite(val) or err > 1e-7 * max(abs(val), 1e-300):
        raise OracleError(f"quadrature did not converge (value={val!r}, error estimate={err!r})")
    return float(val)


def write_fixture(path: str | Path, oracle: str, params: dict[str, Any], seed: int | None, value, tolerance: float) -> dict:
    rec = {"oracle": oracle, "params": params, "seed": seed, "value": value, "tolerance": tolerance}
    Path(path).write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
    return rec


def read_fixture(path: str | Path) -> dict:
    rec = json.loads(Path(path).read_text())
    missing = {"oracle", "params", "seed", "value", "tolerance"} - set(rec)
    if missing:
        raise OracleError(f"fixture {path} lacks fields {sorted(missing)}")
    return rec
