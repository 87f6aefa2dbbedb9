"""Coefficient sets ``(b, sigma, rho, h)`` for conditional McKean-Vlasov SDEs.

Evaluators are vectorised over particles: for points ``x`` of shape ``(n, d)``,
``b`` returns ``(n, d)``, ``sigma`` ``(n, d, d)``, ``rho`` ``(n, d)`` (the loading
on the scalar observation noise) and ``h`` ``(n,)``.

The observation argument ``y`` is the current value ``Y_t`` for state-dependent
sets and the discrete prefix ``(Y_{t_0}, ..., Y_{t_k})`` for path-dependent ones.
The measure argument is the normalised conditional law (or None).
"""
from __future__ import annotations

import hashlib
import inspect
import json
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .errors import CoefficientError, GridError, ParameterError
from .measures import ProbabilityAtomMeasure, WeightedAtomMeasure, wasserstein1
from .testfunctions import as_points

Y_DEPENDENCE = ("state", "path")
MU_DEPENDENCE = ("none", "state")


class CoefficientValues(NamedTuple):
    b: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    h: np.ndarray


@dataclass
class CoefficientSet:
    """Evaluable ``(b, sigma, rho, h)`` with declared structure and bound constants.

    ``sup_norms`` holds the declared ``C^1`` norms of ``b`` and ``h`` and the
    ``C^2`` norms of ``rho`` and ``sigma`` (keys ``"b"``, ``"h"``, ``"rho"``,
    ``"sigma"``); they feed the decay functional in :mod:`cmvzakai.residuals`.
    """

    name: str
    d: int
    b: Callable
    sigma: Callable
    rho: Callable
    h: Callable
    y_dependence: str = "state"
    mu_dependence: str = "none"
    c_lip: float = float("inf")
    sigma0: float = 0.0
    sup_norms: dict[str, float] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    oracle_only: bool = False

    def __post_init__(self):
        if self.y_dependence not in Y_DEPENDENCE:
            raise ParameterError(f"y_dependence must be one of {Y_DEPENDENCE}")
        if self.mu_dependence not in MU_DEPENDENCE:
            raise ParameterError(f"mu_dependence must be one of {MU_DEPENDENCE}")

    @property
    def uses_mu(self) -> bool:
        return self.mu_dependence == "state"

    def eval(self, t: float, x, y, mu: WeightedAtomMeasure | None = None) -> CoefficientValues:
        """Evaluate all four coefficients at ``(t, x, y, mu)``.

        Raises:
            ParameterError: if the set depends on the measure and ``mu`` is None.
            CoefficientError: on any non-finite output, naming the first bad particle.
        """
        x = as_points(x, self.d)
        if self.uses_mu and mu is None:
            raise ParameterError(f"coefficient set '{self.name}' needs the conditional law")
        n = x.shape[0]
        vals = CoefficientValues(
            np.broadcast_to(np.asarray(self.b(t, x, y, mu), dtype=float), (n, self.d)),
            np.broadcast_to(np.asarray(self.sigma(t, x, y, mu), dtype=float), (n, self.d, self.d)),
            np.broadcast_to(np.asarray(self.rho(t, x, y, mu), dtype=float), (n, self.d)),
            np.broadcast_to(np.asarray(self.h(t, x, y, mu), dtype=float), (n,)),
        )
        for label, arr in zip(vals._fields, vals):
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr.reshape(n, -1)))[0][0]
                raise CoefficientError(
                    f"non-finite {label} at t={t}, particle {bad}, x={x[bad].tolist()}"
                )
        return vals

    def content_hash(self) -> str:
        """Stable digest of the family name, dimension and parameters."""
        blob = json.dumps({"family": self.name, "d": self.d, "params": self.params}, sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# built-in families


def _mean(mu: WeightedAtomMeasure) -> np.ndarray:
    return mu.weights @ mu.positions / mu.weights.sum()


def _rho_vec(r: float, d: int) -> np.ndarray:
    v = np.zeros(d)
    v[0] = r
    return v


def _const(value):
    value = np.asarray(value, dtype=float)

    def f(t, x, y, mu):
        return np.broadcast_to(value, (x.shape[0],) + value.shape)

    return f


def _linear_gaussian(d, a=-0.5, sigma=1.0, rho=0.3, c=1.0, box=4.0, **_):
    return dict(
        b=lambda t, x, y, mu: a * x,
        sigma=_const(sigma * np.eye(d)),
        rho=_const(_rho_vec(rho, d)),
        h=lambda t, x, y, mu: c * x[:, 0],
        mu_dependence="none",
        c_lip=max(abs(a), abs(c)),
        sigma0=sigma**2 - rho**2,
        sup_norms={"b": abs(a) * (box + 1), "h": abs(c) * (box + 1), "rho": abs(rho), "sigma": abs(sigma)},
        oracle_only=True,
    )


def _mean_field_linear(d, a=0.0, abar=0.5, sigma=1.0, rho=0.3, c=1.0, box=4.0, **_):
    return dict(
        b=lambda t, x, y, mu: a * x + abar * _mean(mu)[None, :],
        sigma=_const(sigma * np.eye(d)),
        rho=_const(_rho_vec(rho, d)),
        h=lambda t, x, y, mu: c * x[:, 0],
        mu_dependence="state",
        c_lip=max(abs(a), abs(abar), abs(c)),
        sigma0=sigma**2 - rho**2,
        sup_norms={
            "b": (abs(a) + abs(abar)) * box + abs(a),
            "h": abs(c) * (box + 1),
            "rho": abs(rho),
            "sigma": abs(sigma),
        },
        oracle_only=True,
    )


def _common_noise(d, a=-0.5, abar=0.5, sigma=1.0, rho=0.5, box=4.0, **_):
    return dict(
        b=lambda t, x, y, mu: a * x + abar * _mean(mu)[None, :],
        sigma=_const(sigma * np.eye(d)),
        rho=_const(_rho_vec(rho, d)),
        h=lambda t, x, y, mu: np.zeros(x.shape[0]),
        mu_dependence="state",
        c_lip=max(abs(a), abs(abar)),
        sigma0=sigma**2 - rho**2,
        sup_norms={"b": (abs(a) + abs(abar)) * box + abs(a), "h": 0.0, "rho": abs(rho), "sigma": abs(sigma)},
    )


def _bounded_smooth(d, kappa=1.0, sigma=1.0, rho=0.3, c=1.0, **_):
    return dict(
        b=lambda t, x, y, mu: -kappa * np.tanh(x),
        sigma=_const(sigma * np.eye(d)),
        rho=_const(_rho_vec(rho, d)),
        h=lambda t, x, y, mu: c * np.tanh(x[:, 0]),
        mu_dependence="none",
        c_lip=max(abs(kappa), abs(c)),
        sigma0=sigma**2 - rho**2,
        sup_norms={"b": 2 * abs(kappa), "h": 2 * abs(c), "rho": abs(rho), "sigma": abs(sigma)},
    )


def _cmv_tanh(d, kappa=1.0, abar=0.5, sigma=1.0, rho=0.3, c=1.0, **_):
    return dict(
        b=lambda t, x, y, mu: -kappa * np.tanh(x) + abar * np.tanh(_mean(mu))[None, :],
        sigma=_const(sigma * np.eye(d)),
        rho=_const(_rho_vec(rho, d)),
        h=lambda t, x, y, mu: c * np.tanh(x[:, 0]),
        mu_dependence="state",
        c_lip=max(abs(kappa), abs(abar), abs(c)),
        sigma0=sigma**2 - rho**2,
        sup_norms={"b": 2 * abs(kappa) + abs(abar), "h": 2 * abs(c), "rho": abs(rho), "sigma": abs(sigma)},
    )


def _path_tanh(d, kappa=1.0, eta=0.5, sigma=1.0, rho=0.3, c=1.0, **_):
    # drift reacts to the running average of the observation prefix
    def b(t, x, y, mu):
        ybar = float(np.mean(y)) if np.ndim(y) else float(y)
        return -kappa * np.tanh(x) + eta * np.tanh(ybar)

    return dict(
        b=b,
        sigma=_const(sigma * np.eye(d)),
        rho=_const(_rho_vec(rho, d)),
        h=lambda t, x, y, mu: c * np.tanh(x[:, 0]),
        y_dependence="path",
        mu_dependence="none",
        c_lip=max(abs(kappa), abs(c)),
        sigma0=sigma**2 - rho**2,
        sup_norms={"b": 2 * abs(kappa) + abs(eta), "h": 2 * abs(c), "rho": abs(rho), "sigma": abs(sigma)},
    )


def _degenerate(d, kappa=1.0, s=1.0, c=1.0, sigma0=0.1, **_):
    return dict(
        b=lambda t, x, y, mu: -kappa * np.tanh(x),
        sigma=_const(s * np.eye(d)),
        rho=_const(s * np.ones(d) / np.sqrt(d)),
        h=lambda t, x, y, mu: c * np.tanh(x[:, 0]),
        mu_dependence="none",
        c_lip=max(abs(kappa), abs(c)),
        sigma0=sigma0,
        sup_norms={"b": 2 * abs(kappa), "h": 2 * abs(c), "rho": abs(s), "sigma": abs(s)},
    )


def _constant(d, b=0.0, sigma=0.0, rho=0.0, h=0.0, **_):
    bv = np.broadcast_to(np.asarray(b, dtype=float), (d,)).copy()
    sv = np.asarray(sigma, dtype=float)
    sv = sv * np.eye(d) if sv.ndim == 0 else sv.reshape(d, d)
    rv = np.broadcast_to(np.asarray(rho, dtype=float), (d,)).copy() if np.ndim(rho) else _rho_vec(float(rho), d)
    hv = float(h)
    smin = float(np.linalg.eigvalsh(sv @ sv.T - np.outer(rv, rv)).min())
    return dict(
        b=_const(bv),
        sigma=_const(sv),
        rho=_const(rv),
        h=lambda t, x, y, mu: np.full(x.shape[0], hv),
        mu_dependence="none",
        c_lip=0.0,
        sigma0=max(smin, 0.0),
        sup_norms={
            "b": float(np.linalg.norm(bv)),
            "h": abs(hv),
            "rho": float(np.linalg.norm(rv)),
            "sigma": float(np.linalg.norm(sv)),
        },
    )


FAMILIES: dict[str, Callable[..., dict]] = {
    "linear_gaussian": _linear_gaussian,
    "mean_field_linear": _mean_field_linear,
    "common_noise": _common_noise,
    "bounded_smooth": _bounded_smooth,
    "cmv_tanh": _cmv_tanh,
    "path_tanh": _path_tanh,
    "degenerate": _degenerate,
    "constant": _constant,
}

_DECLARED = ("c_lip", "sigma0")


def family_parameters(family: str, params: dict[str, Any] | None = None) -> dict[str, Any]:
    """Family parameters with defaults filled in from the family signature."""
    if family not in FAMILIES:
        raise ParameterError(f"unknown coefficient family '{family}'")
    sig = inspect.signature(FAMILIES[family])
    out = {
        name: p.default
        for name, p in sig.parameters.items()
        if p.default is not inspect.Parameter.empty and p.kind is not inspect.Parameter.VAR_KEYWORD
    }
    out.update(params or {})
    return out


def make_coefficients(family: str, params: dict[str, Any] | None = None, d: int = 1) -> CoefficientSet:
    """Build a named coefficient family. ``params`` may override the declared
    constants ``c_lip`` and ``sigma0`` as well as the family parameters."""
    if family not in FAMILIES:
        raise ParameterError(f"unknown coefficient family '{family}'; choose from {sorted(FAMILIES)}")
    params = dict(params or {})
    allowed = set(family_parameters(family)) | set(_DECLARED)
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ParameterError(f"unknown parameters {unknown} for family '{family}'; allowed {sorted(allowed)}")
    spec = FAMILIES[family](d, **{k: v for k, v in params.items() if k not in _DECLARED})
    for key in _DECLARED:
        if key in params:
            spec[key] = float(params[key])
    return CoefficientSet(name=family, d=d, params=params, **spec)


# ---------------------------------------------------------------------------
# frozen conditional-law paths


@dataclass
class FrozenMuPath:
    """Conditional-law path on a grid, held piecewise constant (left-continuous
    in the Ito sense: the value on ``[t_k, t_{k+1})`` is ``measures[k]``)."""

    times: np.ndarray
    measures: list[ProbabilityAtomMeasure | None]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.measures):
            raise GridError("times and measures must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise GridError("frozen path grid must be strictly increasing")

    def at_index(self, k: int):
        return self.measures[k]

    def at(self, t: float):
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.measures[max(k, 0)]


# ---------------------------------------------------------------------------
# assumption validators


@dataclass
class LipschitzReport:
    passed: bool
    declared: float
    max_ratio: float
    per_coefficient: dict[str, float]
    witness: dict[str, Any]
    n_probes: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NondegeneracyReport:
    passed: bool
    declared_sigma0: float
    min_eigenvalue: float
    witness: dict[str, Any]
    n_probes: int

    def to_dict(self) -> dict:
        return asdict(self)


def _random_law(rng, d, box, n_atoms=5) -> ProbabilityAtomMeasure:
    x = rng.uniform(-box, box, size=(n_atoms, d))
    w = rng.dirichlet(np.ones(n_atoms))
    return ProbabilityAtomMeasure(x, w / w.sum())


def _y_arg(coeffs, rng, t):
    if coeffs.y_dependence == "path":
        return np.concatenate([[0.0], np.cumsum(rng.normal(0, np.sqrt(max(t, 1e-3) / 20), 20))])
    return float(rng.normal(0, 1))


def check_lipschitz(
    coeffs: CoefficientSet,
    n_probes: int = 2000,
    rng_seed: int = 0,
    box: float = 3.0,
    tolerance: float = 1e-6,
    T: float = 1.0,
) -> LipschitzReport:
    """Probe ``|phi(x, mu) - phi(x', mu')| / (|x - x'| + W1(mu, mu'))`` for each
    coefficient on random nearby pairs; pass iff the max is within the declared
    constant (times ``1 + tolerance``)."""
    if n_probes < 1:
        raise ParameterError("n_probes must be >= 1")
    rng = np.random.default_rng(rng_seed)
    d = coeffs.d
    best = {k: 0.0 for k in CoefficientValues._fields}
    witness: dict[str, Any] = {}
    for _ in range(n_probes):
        t = float(rng.uniform(0, T))
        y = _y_arg(coeffs, rng, t)
        x = rng.uniform(-box, box, size=(1, d))
        eps = 10 ** rng.uniform(-4, 0)
        x2 = x + eps * rng.standard_normal((1, d))
        if coeffs.uses_mu:
            mu = _random_law(rng, d, box)
            shift = eps * rng.standard_normal((1, d)) * rng.integers(0, 2)
            mu2 = ProbabilityAtomMeasure(mu.positions + shift, mu.weights)
            w1 = wasserstein1(mu, mu2)
        else:
            mu = mu2 = None
            w1 = 0.0
        denom = float(np.linalg.norm(x - x2)) + w1
        if denom == 0.0:
            continue
        v1 = coeffs.eval(t, x, y, mu)
        v2 = coeffs.eval(t, x2, y, mu2)
        for key, a1, a2 in zip(CoefficientValues._fields, v1, v2):
            r = float(np.linalg.norm(a1 - a2)) / denom
            if r > best[key]:
                best[key] = r
                witness[key] = {"t": t, "x": x.ravel().tolist(), "x_prime": x2.ravel().tolist(), "w1": w1}
    max_ratio = max(best.values())
    return LipschitzReport(
        passed=bool(max_ratio <= coeffs.c_lip * (1 + tolerance)),
        declared=coeffs.c_lip,
        max_ratio=max_ratio,
        per_coefficient=best,
        witness=witness,
        n_probes=n_probes,
    )


def check_nondegeneracy(
    coeffs: CoefficientSet,
    n_probes: int = 500,
    rng_seed: int = 0,
    box: float = 3.0,
    T: float = 1.0,
) -> NondegeneracyReport:
    """Smallest eigenvalue of ``sigma sigma^T - rho rho^T`` over random probes;
    pass iff it is at least the declared ``sigma0``."""
    if n_probes < 1:
        raise ParameterError("n_probes must be >= 1")
    rng = np.random.default_rng(rng_seed)
    d = coeffs.d
    lo = np.inf
    witness: dict[str, Any] = {}
    for _ in range(n_probes):
        t = float(rng.uniform(0, T))
        y = _y_arg(coeffs, rng, t)
        x = rng.uniform(-box, box, size=(1, d))
        mu = _random_law(rng, d, box) if coeffs.uses_mu else None
        v = coeffs.eval(t, x, y, mu)
        s, r = v.sigma[0], v.rho[0]
        ev = float(np.linalg.eigvalsh(s @ s.T - np.outer(r, r)).min())
        if ev < lo:
            lo = ev
            witness = {"t": t, "x": x.ravel().tolist()}
    return NondegeneracyReport(
        passed=bool(lo >= coeffs.sigma0 and coeffs.sigma0 > 0),
        declared_sigma0=coeffs.sigma0,
        min_eigenvalue=lo,
        witness=witness,
        n_probes=n_probes,
    )
