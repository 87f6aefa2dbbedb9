"""Weighted interacting particles on the canonical space.

Under the reference measure the observation ``Y`` is a Brownian motion. Each
particle follows

    dX = (b - rho h) dt + sigma dB1 + rho dY,      dL = h L dY,  L_0 = 1,

discretised by explicit Euler for ``X`` and the exact stochastic exponential
for ``L`` (kept in log space). Coefficients see the empirical conditional law
``mu_hat = nu_hat / <nu_hat, 1>`` with ``nu_hat = (1/N) sum_i L^i delta_{X^i}``,
frozen at the start of each step. No resampling is ever done.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy.special import logsumexp

from .coefficients import CoefficientSet, FrozenMuPath
from .errors import GridError, NumericalBlowup, ParameterError, WeightDegeneracy
from .measures import EPS_MASS_REL, ProbabilityAtomMeasure, WeightedAtomMeasure, normalize

log = logging.getLogger(__name__)

# spawn-key tags for the per-replica RNG substreams
_Y, _PARTICLES, _FRESH, _MASS = 0, 1, 2, 3


@dataclass
class SimulationConfig:
    """Run parameters.

    ``x0`` is ``{"kind": "point", "x": ...}`` (default, the origin) or
    ``{"kind": "gaussian", "mean": ..., "var": ...}``. ``store`` is ``"full"``
    (every grid point kept, required by the residual checkers) or ``"summary"``
    (mass/mean/ESS paths plus snapshots every ``record_every`` steps).
    """

    N: int = 1000
    T: float = 1.0
    dt: float = 1e-2
    d: int = 1
    seed: int = 0
    M_Y: int = 1
    M_nu: int = 1
    x0: dict[str, Any] = field(default_factory=lambda: {"kind": "point", "x": 0.0})
    store: str = "full"
    record_every: int = 1
    mass_range: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ParameterError("N must be an integer >= 2")
        if not self.dt > 0 or not self.T > 0:
            raise ParameterError("dt and T must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * max(self.T, 1.0):
            raise ParameterError(f"T/dt = {self.T / self.dt!r} is not an integer")
        if self.d < 1:
            raise ParameterError("dimension must be >= 1")
        if self.store not in ("full", "summary"):
            raise ParameterError("store must be 'full' or 'summary'")
        if self.record_every < 1 or self.M_Y < 1 or self.M_nu < 1:
            raise ParameterError("record_every, M_Y and M_nu must be >= 1")
        lo, hi = self.mass_range
        if not 0 < lo <= hi:
            raise ParameterError("mass_range must satisfy 0 < lo <= hi")

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mass_range"] = list(self.mass_range)
        return out


@dataclass
class EnsembleState:
    """Particles, log-weights, clock and observation prefix."""

    t: float
    k: int
    X: np.ndarray
    logw: np.ndarray
    y_prefix: list[float]
    int_h: np.ndarray

    @classmethod
    def initial(cls, X0: np.ndarray, logw0: np.ndarray | None = None) -> "EnsembleState":
        X0 = np.asarray(X0, dtype=float)
        n = X0.shape[0]
        return cls(
            t=0.0,
            k=0,
            X=X0.copy(),
            logw=np.zeros(n) if logw0 is None else np.asarray(logw0, dtype=float).copy(),
            y_prefix=[0.0],
            int_h=np.zeros(n),
        )

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def y(self) -> float:
        return self.y_prefix[-1]

    def nu(self) -> WeightedAtomMeasure:
        return WeightedAtomMeasure(self.X, np.exp(self.logw) / self.N)

    def copy(self) -> "EnsembleState":
        return EnsembleState(self.t, self.k, self.X.copy(), self.logw.copy(), list(self.y_prefix), self.int_h.copy())


def y_argument(coeffs: CoefficientSet, y_prefix) -> Any:
    """What the coefficients receive as ``y``: the current value or the prefix."""
    if coeffs.y_dependence == "path":
        return np.asarray(y_prefix, dtype=float)
    return float(y_prefix[-1])


def empirical_law(X: np.ndarray, logw: np.ndarray, reference_mass: float = 1.0) -> ProbabilityAtomMeasure:
    return normalize(WeightedAtomMeasure(X, np.exp(logw) / X.shape[0]), reference_mass)


def step_canonical(
    state: EnsembleState,
    dB1: np.ndarray,
    dY: float,
    coeffs: CoefficientSet,
    dt: float,
    mu: ProbabilityAtomMeasure | None = None,
    reference_mass: float = 1.0,
) -> EnsembleState:
    """One Euler step of the canonical system; returns a new state.

    ``dB1`` are the ``(N, d)`` Brownian increments (already scaled by sqrt(dt)).
    If ``mu`` is None and the coefficients depend on the law, the live
    empirical law of ``state`` is used.
    """
    if mu is None and coeffs.uses_mu:
        mu = empirical_law(state.X, state.logw, reference_mass)
    v = coeffs.eval(state.t, state.X, y_argument(coeffs, state.y_prefix), mu)
    b_tilde = v.b - v.rho * v.h[:, None]
    X = state.X + b_tilde * dt + np.einsum("nij,nj->ni", v.sigma, dB1) + v.rho * dY
    logw = state.logw + v.h * dY - 0.5 * v.h**2 * dt
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(logw))):
        raise NumericalBlowup("non-finite particle or weight", step=state.k)
    return EnsembleState(
        t=state.t + dt,
        k=state.k + 1,
        X=X,
        logw=logw,
        y_prefix=state.y_prefix + [state.y + dY],
        int_h=state.int_h + v.h * dt,
    )


def effective_sample_size(state_or_logw) -> float:
    """``(sum L)^2 / sum L^2``, computed in log space."""
    logw = state_or_logw.logw if isinstance(state_or_logw, EnsembleState) else np.asarray(state_or_logw)
    return float(np.exp(2 * logsumexp(logw) - logsumexp(2 * logw)))


@dataclass
class Trajectory:
    """Output of one simulated observation path.

    ``X`` and ``logw`` hold snapshots at ``record_idx`` (every grid point when
    ``store == "full"``). ``mass``, ``mean`` and ``ess`` are kept at every grid
    point regardless.
    """

    times: np.ndarray
    Y: np.ndarray
    record_idx: np.ndarray
    X: np.ndarray
    logw: np.ndarray
    mass: np.ndarray
    mean: np.ndarray
    ess: np.ndarray
    final_state: EnsembleState
    config: SimulationConfig
    streams: dict[str, Any]
    mu_used: list | None = None
    frozen: FrozenMuPath | None = None

    @property
    def dY(self) -> np.ndarray:
        return np.diff(self.Y)

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def full(self) -> bool:
        return len(self.record_idx) == len(self.times)

    def _slot(self, k: int) -> int:
        if self.full:
            return k
        pos = int(np.searchsorted(self.record_idx, k))
        if pos >= len(self.record_idx) or self.record_idx[pos] != k:
            raise GridError(f"grid index {k} was not recorded (store='summary')")
        return pos

    def nu(self, k: int) -> WeightedAtomMeasure:
        s = self._slot(k)
        return WeightedAtomMeasure(self.X[s], np.exp(self.logw[s]) / self.N)

    def mu(self, k: int) -> ProbabilityAtomMeasure:
        s = self._slot(k)
        return empirical_law(self.X[s], self.logw[s], self.reference_mass)

    @property
    def reference_mass(self) -> float:
        return float(self.mass[0])

    def coefficient_law(self, k: int, coeffs: CoefficientSet) -> ProbabilityAtomMeasure | None:
        """The law the coefficients read at grid index ``k`` (None if unused)."""
        if not coeffs.uses_mu:
            return None
        return self.frozen.at_index(k) if self.frozen is not None else self.mu(k)

    def mu_path(self) -> FrozenMuPath:
        """The conditional-law path the coefficients actually saw (full storage)."""
        if not self.full:
            raise GridError("mu_path needs store='full'")
        return FrozenMuPath(self.times, [self.mu(k) for k in range(len(self.times))])


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def observation_path(config: SimulationConfig, replica: int = 0) -> np.ndarray:
    """Reference-measure Brownian path ``Y`` on the grid for a replica."""
    rng = _stream(config.seed, replica, _Y)
    dY = rng.standard_normal(config.n_steps) * math.sqrt(config.dt)
    return np.concatenate([[0.0], np.cumsum(dY)])


def initial_particles(config: SimulationConfig, rng: np.random.Generator) -> np.ndarray:
    kind = config.x0.get("kind", "point")
    d, N = config.d, config.N
    if kind == "point":
        x = np.broadcast_to(np.asarray(config.x0.get("x", 0.0), dtype=float), (d,))
        return np.tile(x, (N, 1))
    if kind == "gaussian":
        m = np.broadcast_to(np.asarray(config.x0.get("mean", 0.0), dtype=float), (d,))
        var = float(config.x0.get("var", 1.0))
        return m + math.sqrt(var) * rng.standard_normal((N, d))
    raise ParameterError(f"unknown initial law kind '{kind}'")


def replica_initial_mass(config: SimulationConfig, replica: int, nu_replica: int) -> float:
    """Random initial mass for a nu-replica (log-uniform on ``mass_range``), drawn
    independently of the observation path."""
    lo, hi = config.mass_range
    if lo == hi:
        return float(lo)
    u = _stream(config.seed, replica, _MASS, nu_replica).uniform()
    return float(math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo))))


def _run(
    config: SimulationConfig,
    coeffs: CoefficientSet,
    Y: np.ndarray,
    particle_key: tuple[int, ...],
    initial_mass: float,
    mu_path: FrozenMuPath | None,
    keep_mu: bool,
) -> Trajectory:
    if coeffs.d != config.d:
        raise ParameterError(f"coefficients are {coeffs.d}-dimensional, config is {config.d}")
    if len(Y) != config.n_steps + 1:
        raise GridError(f"Y path has {len(Y)} points, grid has {config.n_steps + 1}")
    rng = _stream(config.seed, *particle_key)
    init_rng, b1_rng = rng.spawn(2)
    N, d, dt, n = config.N, config.d, config.dt, config.n_steps
    state = EnsembleState.initial(initial_particles(config, init_rng), np.full(N, math.log(initial_mass)))
    ref_mass = initial_mass

    full = config.store == "full"
    rec = np.arange(n + 1) if full else np.unique(np.r_[np.arange(0, n + 1, config.record_every), n])
    Xs = np.empty((len(rec), N, d))
    Ls = np.empty((len(rec), N))
    mass = np.empty(n + 1)
    mean = np.empty((n + 1, d))
    ess = np.empty(n + 1)
    mu_used: list | None = [] if keep_mu else None
    slot = 0
    sqdt = math.sqrt(dt)

    for k in range(n + 1):
        L = np.exp(state.logw)
        mass[k] = L.sum() / N
        w = L / N
        if not mass[k] > EPS_MASS_REL * ref_mass:
            raise WeightDegeneracy(f"ensemble mass {mass[k]:.3e} collapsed at step {k}")
        mean[k] = w @ state.X / mass[k]
        ess[k] = effective_sample_size(state.logw)
        if slot < len(rec) and rec[slot] == k:
            Xs[slot] = state.X
            Ls[slot] = state.logw
            slot += 1
        if k == n:
            break
        mu = None
        if coeffs.uses_mu:
            mu = mu_path.at_index(k) if mu_path is not None else empirical_law(state.X, state.logw, ref_mass)
        if keep_mu:
            mu_used.append(mu)
        dB1 = b1_rng.standard_normal((N, d)) * sqdt
        state = step_canonical(state, dB1, float(Y[k + 1] - Y[k]), coeffs, dt, mu, ref_mass)
        # keep the observation prefix exact to the supplied path
        state.y_prefix[-1] = float(Y[k + 1])

    if ess[-1] < N / 10:
        log.warning("effective sample size %.1f fell below N/10 (N=%d)", ess[-1], N)
    return Trajectory(
        times=config.grid,
        Y=np.asarray(Y, dtype=float),
        record_idx=rec,
        X=Xs,
        logw=Ls,
        mass=mass,
        mean=mean,
        ess=ess,
        final_state=state,
        config=config,
        streams={"seed": config.seed, "particle_key": list(particle_key), "initial_mass": initial_mass},
        mu_used=mu_used,
        frozen=mu_path,
    )


def simulate_canonical(
    config: SimulationConfig,
    coeffs: CoefficientSet,
    replica: int = 0,
    nu_replica: int = 0,
    Y: np.ndarray | None = None,
    randomize_mass: bool = False,
    keep_mu: bool = False,
) -> Trajectory:
    """Simulate one observation path with live mean-field coupling.

    The observation path is drawn from the replica's own stream unless ``Y``
    is supplied. With ``randomize_mass`` the initial weights carry a random
    total mass (for non-Dirac conditional-law ensembles).
    """
    if Y is None:
        Y = observation_path(config, replica)
    mass = replica_initial_mass(config, replica, nu_replica) if randomize_mass else 1.0
    return _run(config, coeffs, Y, (replica, _PARTICLES, nu_replica), mass, None, keep_mu)


def simulate_frozen_mu(
    config: SimulationConfig,
    coeffs: CoefficientSet,
    mu_path: FrozenMuPath,
    Y: np.ndarray,
    replica: int = 0,
    nu_replica: int = 0,
    fresh_noise: bool = True,
) -> Trajectory:
    """Same scheme, but the coefficients read the law from ``mu_path``.

    With ``fresh_noise`` the initial draw and ``B1`` come from a substream
    independent of :func:`simulate_canonical`'s; otherwise the canonical
    streams are reused (so freezing a run's own law reproduces it exactly).
    """
    grid = config.grid
    if len(mu_path.times) != len(grid) or not np.allclose(mu_path.times, grid, rtol=0, atol=1e-12 * max(1, config.T)):
        raise GridError("frozen law path is not on the simulation grid")
    key = (replica, _FRESH if fresh_noise else _PARTICLES, nu_replica)
    return _run(config, coeffs, np.asarray(Y, dtype=float), key, 1.0, mu_path, False)


def simulate_replicas(
    config: SimulationConfig,
    coeffs: CoefficientSet,
    replicas: range | list[int] | None = None,
    workers: int = 1,
    **kwargs,
) -> list[Trajectory]:
    """Independent observation paths, optionally in a thread pool; the result
    order (and content) does not depend on ``workers``."""
    replicas = list(range(config.M_Y)) if replicas is None else list(replicas)

    def one(r):
        return simulate_canonical(config, coeffs, replica=r, **kwargs)

    if workers <= 1:
        return [one(r) for r in replicas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, replicas))


def nu_ensemble(
    config: SimulationConfig,
    coeffs: CoefficientSet,
    replica: int = 0,
    M: int | None = None,
    randomize_mass: bool = True,
) -> list[Trajectory]:
    """``M`` nu-replicas sharing one observation path, each with its own particles
    and (optionally) a random initial mass."""
    M = config.M_nu if M is None else M
    Y = observation_path(config, replica)
    return [
        simulate_canonical(config, coeffs, replica=replica, nu_replica=j, Y=Y, randomize_mass=randomize_mass)
        for j in range(M)
    ]


@dataclass
class TiltEstimate:
    estimate: float
    standard_error: float
    ess: float
    b2_terminal: np.ndarray


def girsanov_tilt(traj: Trajectory, phi) -> TiltEstimate:
    """Physical-measure expectation of ``phi(X_T)`` via the Bayes formula
    ``sum L^i phi(X^i_T) / sum L^i``, with the self-normalised standard error.

    Also returns ``B2_T = Y_T - int_0^T h ds`` for every particle.
    """
    st = traj.final_state
    L = np.exp(st.logw - st.logw.max())
    total = L.sum()
    if not np.exp(st.logw).sum() / st.N > EPS_MASS_REL * traj.reference_mass:
        raise WeightDegeneracy("terminal mass below collapse threshold")
    vals = np.asarray(phi.value(st.X) if hasattr(phi, "value") else phi(st.X), dtype=float).reshape(-1)
    wn = L / total
    est = float(wn @ vals)
    se = float(np.sqrt(np.sum(wn**2 * (vals - est) ** 2)))
    return TiltEstimate(est, se, effective_sample_size(st.logw), traj.Y[-1] - st.int_h)
