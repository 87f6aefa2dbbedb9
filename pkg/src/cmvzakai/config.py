"""Run configuration: a JSON document mapped onto :class:`RunConfig`.

The seed is mandatory. Every output carries :meth:`RunConfig.config_hash`, a
digest of the canonical serialisation (the output directory is excluded so
that moving a run does not change its identity).
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .coefficients import FAMILIES, make_coefficients
from .errors import ConfigError
from .particles import SimulationConfig

CHECKS = (
    "ks",
    "martingale",
    "zakai",
    "cfpe",
    "rinf",
    "lyapunov",
    "roundtrip",
    "regularity",
    "lipschitz",
    "nondegeneracy",
)

DEFAULT_TOLERANCES: dict[str, float] = {
    "ks": 1e-12,
    "z_threshold": 5.0,
    "zakai_pass_fraction": 0.9,
    "martingale_z": 3.0,
    "dirac_reduction": 1e-10,
    "lift_identity": 1e-12,
    "lyapunov_uptick": 0.02,
    "oracle_z": 3.0,
    "slope_low": -0.65,
    "slope_high": -0.35,
    "lipschitz_rel": 1e-6,
}

DEFAULT_OPTIONS: dict[str, Any] = {
    "n_boot": 200,
    "basis_box": [-3.0, 3.0],
    "basis_radius": 2.0,
    "cfpe_function": 0,
    "lift_K": 8,
    "delta": 0.1,
    "lyapunov_every": 5,
    "lyapunov_N": 100,
    "roundtrip_N": [500, 2000, 8000],
    "regularity_p": 2.0,
    "oracle_record_every": 20,
    "n_probes": 2000,
}


@dataclass
class SweepSpec:
    axis: str = "N"
    values: list[float] = field(default_factory=lambda: [500, 2000, 8000])
    functions: list[int] | None = None

    def __post_init__(self):
        if self.axis not in ("N", "dt", "K"):
            raise ConfigError(f"sweep axis must be N, dt or K, got {self.axis!r}", field="sweep.axis")
        if len(self.values) < 2:
            raise ConfigError("a sweep needs at least two values", field="sweep.values")


@dataclass
class RunConfig:
    family: str
    seed: int
    params: dict[str, Any] = field(default_factory=dict)
    d: int = 1
    N: int = 1000
    dt: float = 1e-2
    T: float = 1.0
    M_Y: int = 1
    M_nu: int = 16
    K: int = 16
    checks: list[str] = field(default_factory=lambda: ["ks", "martingale"])
    x0: dict[str, Any] = field(default_factory=lambda: {"kind": "point", "x": 0.0})
    out: str = "out"
    tolerances: dict[str, float] = field(default_factory=dict)
    options: dict[str, Any] = field(default_factory=dict)
    sweep: SweepSpec | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown coefficient family {self.family!r}", field="family")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer", field="seed")
        for name in ("d", "N", "M_Y", "M_nu", "K"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer", field=name)
        if self.N < 2:
            raise ConfigError("N must be at least 2", field="N")
        bad = [c for c in self.checks if c not in CHECKS]
        if bad:
            raise ConfigError(f"unknown checks {bad}; choose from {list(CHECKS)}", field="checks")
        unknown_tol = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown_tol:
            raise ConfigError(f"unknown tolerance keys {sorted(unknown_tol)}", field="tolerances")
        unknown_opt = set(self.options) - set(DEFAULT_OPTIONS)
        if unknown_opt:
            raise ConfigError(f"unknown option keys {sorted(unknown_opt)}", field="options")
        if isinstance(self.sweep, dict):
            try:
                self.sweep = SweepSpec(**self.sweep)
            except TypeError as exc:
                raise ConfigError(str(exc), field="sweep") from None
        try:
            self.simulation()
        except ValueError as exc:
            raise ConfigError(str(exc), field="N/dt/T") from None
        try:
            self.coefficients()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field="params") from None

    # ------------------------------------------------------------------
    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def opt(self, key: str):
        return self.options.get(key, DEFAULT_OPTIONS[key])

    def simulation(self, **overrides) -> SimulationConfig:
        base = dict(
            N=self.N, T=self.T, dt=self.dt, d=self.d, seed=self.seed, M_Y=self.M_Y, M_nu=self.M_nu, x0=dict(self.x0)
        )
        base.update(overrides)
        return SimulationConfig(**base)

    def coefficients(self):
        return make_coefficients(self.family, self.params, self.d)

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.sweep is None:
            out.pop("sweep")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        ident = self.to_dict()
        ident.pop("out", None)
        blob = json.dumps(ident, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict, text: str | None = None) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if "seed" not in data:
            raise ConfigError("seed is mandatory", field="seed")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown field {key!r}", field=key, line=_line_of(text, key))
        try:
            return cls(**data)
        except ConfigError as exc:
            if exc.line is None and exc.field:
                line = _line_of(text, exc.field.split(".")[0])
                if line is not None:
                    raise ConfigError(str(exc).split(" [")[0], field=exc.field, line=line) from None
            raise
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        return cls.from_dict(data, text)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_json(text)


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None
