"""Regenerate the small oracle fixtures used by the test suite.

Each fixture stores the oracle name, the inputs (or the seed that generates
them), the oracle value and the tolerance the package routine is held to.
The large particle-filter fixtures come from ``validate_oracles.py``.

Usage::

    python3 scripts/make_fixtures.py
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from cmvzakai.measures import WeightedAtomMeasure
from cmvzakai.oracles import quadrature_mollified, riccati_path, w1_bruteforce, write_fixture

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def random_pair(rng, n_atoms: int, d: int):
    """Two random positive measures with ``n_atoms`` atoms each."""
    out = []
    for _ in range(2):
        x = rng.uniform(-1.0, 1.0, size=(n_atoms, d))
        w = rng.uniform(0.2, 1.0, size=n_atoms)
        out.append(WeightedAtomMeasure(x, w))
    return out


def measure_record(nu: WeightedAtomMeasure) -> dict:
    return {"positions": nu.positions.tolist(), "weights": nu.weights.tolist()}


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)

    # W1 by linear programming on 20 random 1-D pairs with up to 6 atoms
    rng = np.random.default_rng(901)
    cases = []
    for _ in range(20):
        n1, n2 = rng.integers(1, 7, size=2)
        a = WeightedAtomMeasure(rng.normal(size=(n1, 1)), rng.uniform(0.1, 1, n1))
        b = WeightedAtomMeasure(rng.normal(size=(n2, 1)), rng.uniform(0.1, 1, n2))
        cases.append({"mu1": measure_record(a), "mu2": measure_record(b), "w1": w1_bruteforce(a, b)})
    write_fixture(FIXTURES / "w1_lp.json", "w1_bruteforce", {"n_pairs": 20, "max_atoms": 6, "d": 1}, 901, cases, 1e-9)

    # mollified inner product by adaptive quadrature, 5-atom pairs in d=1 and d=2
    for d, seed in ((1, 902), (2, 903)):
        rng = np.random.default_rng(seed)
        cases = []
        for _ in range(3 if d == 2 else 5):
            nu1, nu2 = random_pair(rng, 5, d)
            val = quadrature_mollified(nu1, nu2, 0.1)
            cases.append({"nu1": measure_record(nu1), "nu2": measure_record(nu2), "inner": val})
        write_fixture(
            FIXTURES / f"mollified_quadrature_d{d}.json", "quadrature_mollified", {"delta": 0.1, "atoms": 5, "d": d},
            seed, cases, 1e-6,
        )

    # Riccati from both sides of the stationary point P* = 1
    dt, n = 1e-3, 3000
    vals = {str(P0): riccati_path(0.0, 1.0, 0.0, 1.0, P0, dt, n)[-1] for P0 in (0.0, 0.5, 2.0, 4.0)}
    write_fixture(
        FIXTURES / "riccati_stationary.json", "riccati_path", {"a": 0.0, "sigma": 1.0, "rho": 0.0, "c": 1.0, "dt": dt, "T": 3.0},
        None, vals, 1e-9,
    )
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
