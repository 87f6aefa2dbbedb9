"""Finite measures on R^d as weighted atoms, plus the metrics and projections used
to compare them: W1, the weak-topology metric ``d``, the projection onto R^K and
its product metric, and the Gaussian-mollified L2 inner product."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, WeightDegeneracy
from .testfunctions import BasisFunction, TestFunctionBasis, as_points

EPS_MASS_REL = 1e-12
DEFAULT_SLICES = 64
DEFAULT_K = 16


@dataclass(frozen=True, eq=False)
class WeightedAtomMeasure:
    """Finite positive measure ``sum_i w_i delta_{x_i}``.

    Attributes:
        positions: Atom locations, shape ``(n, d)``.
        weights: Nonnegative masses, shape ``(n,)``.
    """

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = as_points(self.positions)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if x.shape[0] == 0:
            raise DimensionError("a measure needs at least one atom")
        if w.shape[0] != x.shape[0]:
            raise DimensionError(f"{x.shape[0]} atoms but {w.shape[0]} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ParameterError("weights must be finite and nonnegative")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, x, mass: float = 1.0) -> "WeightedAtomMeasure":
        return cls(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1), np.array([mass]))

    @classmethod
    def empirical(cls, x) -> "WeightedAtomMeasure":
        x = as_points(x)
        return cls(x, np.full(x.shape[0], 1.0 / x.shape[0]))

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    def total_mass(self) -> float:
        # correctly rounded, so that N atoms of mass 1/N have mass exactly 1
        return math.fsum(self.weights)

    def mean(self) -> np.ndarray:
        """First moment ``<nu, id> / <nu, 1>``."""
        return self.weights @ self.positions / self.weights.sum()

    def scaled(self, a: float) -> "WeightedAtomMeasure":
        return WeightedAtomMeasure(self.positions, a * self.weights)

    def __add__(self, other: "WeightedAtomMeasure") -> "WeightedAtomMeasure":
        if other.d != self.d:
            raise DimensionError("cannot add measures of different dimension")
        return WeightedAtomMeasure(
            np.vstack([self.positions, other.positions]),
            np.concatenate([self.weights, other.weights]),
        )

    def __rmul__(self, a: float) -> "WeightedAtomMeasure":
        return self.scaled(a)


class ProbabilityAtomMeasure(WeightedAtomMeasure):
    """Weighted atoms with unit total mass (within 1e-12)."""

    def __post_init__(self):
        super().__post_init__()
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ParameterError(f"probability weights sum to {self.weights.sum()!r}")


def _check_fn_dim(nu: WeightedAtomMeasure, phi: BasisFunction) -> None:
    dim = getattr(phi, "dim", None)
    if dim is not None and dim != nu.d:
        raise DimensionError(f"test function on R^{dim} paired with measure on R^{nu.d}")


def pair(nu: WeightedAtomMeasure, phi) -> float:
    """Dual product ``<nu, phi> = sum_i w_i phi(x_i)``."""
    if isinstance(phi, BasisFunction):
        _check_fn_dim(nu, phi)
        vals = phi.value(nu.positions)
    else:
        vals = np.asarray(phi(nu.positions), dtype=float).reshape(-1)
    return float(nu.weights @ vals)


def normalize(nu: WeightedAtomMeasure, reference_mass: float = 1.0) -> ProbabilityAtomMeasure:
    """Bayes normalisation ``nu / <nu, 1>``.

    Raises:
        WeightDegeneracy: if the mass is at or below ``1e-12 * reference_mass``.
    """
    mass = nu.total_mass()
    if not mass > EPS_MASS_REL * reference_mass:
        raise WeightDegeneracy(f"total mass {mass:.3e} below collapse threshold")
    w = nu.weights / mass
    return ProbabilityAtomMeasure(nu.positions, w)


def _w1_1d(x1, w1, x2, w2) -> float:
    """Exact 1-D W1 as the L1 distance between the two CDFs."""
    x = np.concatenate([x1, x2])
    w = np.concatenate([w1, -w2])
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    cdf_diff = np.cumsum(w[order])
    return float(np.sum(np.abs(cdf_diff[:-1]) * np.diff(xs)))


def wasserstein1(
    mu1: WeightedAtomMeasure,
    mu2: WeightedAtomMeasure,
    n_slices: int = DEFAULT_SLICES,
    seed: int = 0,
) -> float:
    """W1 between probability measures: exact in d=1, sliced (mean over random
    directions of the 1-D distance) in d>1. Use :func:`wasserstein1_report` to
    know whether the value is approximate."""
    return wasserstein1_report(mu1, mu2, n_slices, seed)["value"]


def wasserstein1_report(mu1, mu2, n_slices: int = DEFAULT_SLICES, seed: int = 0) -> dict:
    if mu1.d != mu2.d:
        raise DimensionError("W1 between measures of different dimension")
    p1 = mu1.weights / mu1.weights.sum()
    p2 = mu2.weights / mu2.weights.sum()
    if mu1.d == 1:
        val = _w1_1d(mu1.positions[:, 0], p1, mu2.positions[:, 0], p2)
        return {"value": val, "approximate": False, "n_slices": 0}
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_slices, mu1.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = [_w1_1d(mu1.positions @ u, p1, mu2.positions @ u, p2) for u in dirs]
    return {"value": float(np.mean(vals)), "approximate": True, "n_slices": n_slices}


def project_T(nu: WeightedAtomMeasure, K: int, basis: TestFunctionBasis) -> np.ndarray:
    """``(<nu, phi_1>, ..., <nu, phi_K>)``."""
    if K > len(basis):
        raise ParameterError(f"K={K} exceeds basis length {len(basis)}")
    return np.array([pair(nu, basis[k]) for k in range(K)])


def d_infinity(z1, z2, K: int | None = None) -> float:
    """Truncated product metric ``sum_{k<=K} min(|z1_k - z2_k|, 1) / 2^k``."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != z2.shape:
        raise DimensionError(f"length mismatch {z1.shape} vs {z2.shape}")
    K = len(z1) if K is None else K
    if K > len(z1):
        raise DimensionError(f"K={K} exceeds vector length {len(z1)}")
    k = np.arange(1, K + 1)
    return float(np.sum(np.minimum(np.abs(z1[:K] - z2[:K]), 1.0) / 2.0**k))


def metric_d(nu1, nu2, K: int = DEFAULT_K, basis: TestFunctionBasis | None = None) -> float:
    """Weak-topology metric on finite measures, truncated after ``K`` basis
    functions; the omitted tail is at most ``2**-K`` (see :func:`metric_d_report`)."""
    return metric_d_report(nu1, nu2, K, basis)["value"]


def metric_d_report(nu1, nu2, K: int = DEFAULT_K, basis: TestFunctionBasis | None = None) -> dict:
    if basis is None:
        from .testfunctions import dyadic_bump_basis

        basis = dyadic_bump_basis(nu1.d, K)
    z1 = project_T(nu1, K, basis)
    z2 = project_T(nu2, K, basis)
    return {"value": d_infinity(z1, z2, K), "tail_bound": 2.0**-K, "K": K}


def gaussian_kernel(x, delta: float) -> np.ndarray:
    """``G_delta(x) = (2 pi delta)^(-d/2) exp(-|x|^2 / (2 delta))`` row-wise."""
    x = as_points(x)
    d = x.shape[1]
    return (2 * np.pi * delta) ** (-d / 2) * np.exp(-np.einsum("ij,ij->i", x, x) / (2 * delta))


def mollified_inner(nu1, nu2, delta: float, block: int = 256) -> float:
    """``<G_delta * nu1, G_delta * nu2>_{L2}`` in closed form:
    ``sum_ij w_i v_j G_{2 delta}(x_i - y_j)``. Blocked to bound memory."""
    if not delta > 0:
        raise ParameterError("mollification width must be positive")
    if nu1.d != nu2.d:
        raise DimensionError("mollified inner product of measures of different dimension")
    d = nu1.d
    x, w = nu1.positions, nu1.weights
    y, v = nu2.positions, nu2.weights
    norm = (4 * np.pi * delta) ** (-d / 2)
    total = 0.0
    for start in range(0, x.shape[0], block):
        diff = x[start : start + block, None, :] - y[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        total += float(w[start : start + block] @ np.exp(-sq / (4 * delta)) @ v)
    return norm * total


def mollified_l2_distance(nu1, nu2, delta: float) -> float:
    a = mollified_inner(nu1, nu1, delta)
    c = mollified_inner(nu2, nu2, delta)
    sq = a - 2 * mollified_inner(nu1, nu2, delta) + c
    if sq < 0:
        if sq < -1e-12 * max(1.0, a + c):
            raise ArithmeticError(f"mollified squared distance {sq!r} is negative beyond round-off")
        sq = 0.0
    return float(np.sqrt(sq))
