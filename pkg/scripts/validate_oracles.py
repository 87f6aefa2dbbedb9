"""Cross-validate the closed-form filters against brute-force particle filters.

The particle filters here are standalone numpy loops (they do not use the
package simulator), so an error in either side shows up as a disagreement.
Results are written as fixtures under ``tests/fixtures`` and re-checked by the
test suite without rerunning the large ensembles.

Usage::

    python3 scripts/validate_oracles.py [--quick]
"""
from __future__ import annotations

import argparse
import math
import time
from pathlib import Path

import numpy as np

from cmvzakai.oracles import kalman_bucy_correlated, meanfield_linear_mean, write_fixture

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def observation(seed: int, n: int, dt: float) -> np.ndarray:
    """Reference Brownian path, regenerable from ``(seed, n, dt)``."""
    dY = np.random.default_rng(seed).standard_normal(n) * math.sqrt(dt)
    return np.concatenate([[0.0], np.cumsum(dY)])


def brute_force_filter(p: dict, Y: np.ndarray, dt: float, N: int, seed: int, checkpoints, mean_field: bool, n_boot: int = 200):
    """Weighted particles under the reference measure; conditional mean and
    bootstrap SE at the checkpoint indices."""
    rng = np.random.default_rng(seed + 1)
    a, abar, s, r, c = p["a"], p.get("abar", 0.0), p["sigma"], p["rho"], p["c"]
    x = np.full(N, p["m0"]) + math.sqrt(p["P0"]) * rng.standard_normal(N)
    logw = np.zeros(N)
    out = {}
    boot_rng = np.random.default_rng(seed + 2)
    for k in range(len(Y)):
        if k in checkpoints:
            w = np.exp(logw - logw.max())
            m = float(w @ x / w.sum())
            bs = np.empty(n_boot)
            for b in range(n_boot):
                i = boot_rng.integers(0, N, N)
                bs[b] = w[i] @ x[i] / w[i].sum()
            out[k] = (m, float(bs.std(ddof=1)))
        if k == len(Y) - 1:
            break
        dy = Y[k + 1] - Y[k]
        hx = c * x
        if mean_field:
            w = np.exp(logw - logw.max())
            drift = a * x + abar * (w @ x / w.sum())
        else:
            drift = a * x
        x_new = x + (drift - r * hx) * dt + s * math.sqrt(dt) * rng.standard_normal(N) + r * dy
        logw += hx * dy - 0.5 * hx**2 * dt
        x = x_new
    return out


def run(name, p, N, T, dt, seed, mean_field):
    n = round(T / dt)
    Y = observation(seed, n, dt)
    checkpoints = sorted({round(n * f) for f in (0.25, 0.5, 0.75, 1.0)})
    t0 = time.time()
    pf = brute_force_filter(p, Y, dt, N, seed, set(checkpoints), mean_field)
    if mean_field:
        ref = meanfield_linear_mean(p["a"], p["abar"], p["sigma"], p["rho"], p["c"], p["m0"], p["P0"], Y, dt)
    else:
        ref = kalman_bucy_correlated(p["a"], p["sigma"], p["rho"], p["c"], p["m0"], p["P0"], Y, dt)
    rows = []
    for k in checkpoints:
        m, se = pf[k]
        z = (m - ref.m[k]) / se
        rows.append({"step": k, "t": k * dt, "particle_mean": m, "se": se, "oracle_mean": float(ref.m[k]), "z": z})
        print(f"{name}: t={k * dt:.4f} particle={m:+.6f} oracle={ref.m[k]:+.6f} se={se:.2e} z={z:+.2f}")
    print(f"{name}: {time.time() - t0:.1f}s")
    params = {**p, "N": N, "T": T, "dt": dt, "observation": "default_rng(seed).standard_normal(n)*sqrt(dt), cumulative"}
    write_fixture(FIXTURES / f"{name}.json", name, params, seed, rows, 3.0)
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller ensembles, fixtures not overwritten")
    args = ap.parse_args()
    FIXTURES.mkdir(parents=True, exist_ok=True)
    scale = 100 if args.quick else 1
    global write_fixture
    if args.quick:
        write_fixture = lambda *a, **k: None  # noqa: E731
    run(
        "kalman_bruteforce",
        {"a": -0.5, "sigma": 1.0, "rho": 0.3, "c": 1.0, "m0": 1.0, "P0": 0.25},
        N=10**6 // scale, T=0.25, dt=2.5e-4, seed=20240601, mean_field=False,
    )
    run(
        "meanfield_bruteforce",
        {"a": 0.0, "abar": 0.5, "sigma": 1.0, "rho": 0.3, "c": 1.0, "m0": 0.5, "P0": 0.25},
        N=10**5 // scale, T=1.0, dt=1e-3, seed=20240602, mean_field=True,
    )


if __name__ == "__main__":
    main()
