"""Command-line runner: ``simulate``, ``verify``, ``oracle`` and ``sweep``.

Exit codes: 0 every selected check passed, 1 some check failed, 2 configuration
or IO problem (including mismatched report hashes), 3 numerical failure.

Outputs are CSV tables and JSON reports. Every file carries the config hash,
floats are written with ``repr`` and no timing or worker information is
recorded, so the same config and seed give byte-identical files for any
``--workers``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .coefficients import check_lipschitz, check_nondegeneracy, family_parameters
from .config import CHECKS, RunConfig
from .errors import (
    CoefficientError,
    ConfigError,
    GridError,
    NumericalBlowup,
    OracleError,
    ParameterError,
    WeightDegeneracy,
)
from .measures import metric_d
from .oracles import kalman_bucy_correlated, meanfield_linear_mean
from .operators import CylindricalFunction, OuterFunction
from .particles import (
    SimulationConfig,
    nu_ensemble,
    observation_path,
    simulate_canonical,
    simulate_frozen_mu,
)
from .residuals import (
    EmpiricalLaw,
    cfpe_residual,
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
from .testfunctions import dyadic_bump_basis

log = logging.getLogger("cmvzakai")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERICAL_ERRORS = (NumericalBlowup, WeightDegeneracy, CoefficientError, OracleError, GridError, FloatingPointError)


class HashMismatch(Exception):
    """Reports from different configurations found in one output directory."""


# ---------------------------------------------------------------------------
# helpers


def _map(fn: Callable, items: list, workers: int) -> list:
    """Ordered map, threaded when ``workers > 1``."""
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _dump_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())


def _basis(cfg: RunConfig, size: int | None = None):
    box = tuple(float(v) for v in cfg.opt("basis_box"))
    return dyadic_bump_basis(cfg.d, size or cfg.K, box=box, base_radius=float(cfg.opt("basis_radius")))


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: RunConfig, out: Path, workers: int) -> int:
    coeffs = cfg.coefficients()
    sim = cfg.simulation(store="summary", record_every=cfg.simulation().n_steps)
    h = cfg.config_hash()
    trajs = _map(lambda r: simulate_canonical(sim, coeffs, replica=r), list(range(cfg.M_Y)), workers)
    d = cfg.d
    rows = []
    for r, tr in enumerate(trajs):
        for k, t in enumerate(tr.times):
            rows.append([h, r, k, float(t), float(tr.Y[k]), float(tr.mass[k]), *map(float, tr.mean[k]), float(tr.ess[k])])
    _write_csv(
        out / "trajectory.csv",
        ["config_hash", "replica", "step", "t", "Y", "mass", *[f"mean_{j}" for j in range(d)], "ess"],
        rows,
    )
    prow = []
    for r, tr in enumerate(trajs):
        st = tr.final_state
        for i in range(st.N):
            prow.append([h, r, i, *map(float, st.X[i]), float(st.logw[i])])
    _write_csv(out / "particles.csv", ["config_hash", "replica", "particle", *[f"x_{j}" for j in range(d)], "logw"], prow)
    _dump_json(
        out / "manifest.json",
        {
            "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
            "config_hash": h,
            "coefficients_hash": coeffs.content_hash(),
            "seed": cfg.seed,
            "files": ["trajectory.csv", "particles.csv"],
        },
    )
    print(json.dumps({"config_hash": h, "replicas": cfg.M_Y, "out": str(out)}))
    return EXIT_PASS


# ---------------------------------------------------------------------------
# verify: one function per check, each returning (report dict, csv text or None)


def _check_ks(cfg, coeffs, workers):
    sim = cfg.simulation(store="full")
    basis = _basis(cfg)
    res = _map(
        lambda r: ks_identity_check(simulate_canonical(sim, coeffs, replica=r), basis, cfg.tol("ks")),
        list(range(cfg.M_Y)),
        workers,
    )
    worst = max(x["max_relative_error"] for x in res)
    return {"max_relative_error": worst, "per_replica": res, "tolerance": cfg.tol("ks"), "passed": worst <= cfg.tol("ks")}, None


def _check_martingale(cfg, coeffs, workers):
    sim = cfg.simulation(store="summary", record_every=cfg.simulation().n_steps)
    masses = _map(lambda r: float(simulate_canonical(sim, coeffs, replica=r).mass[-1]), list(range(cfg.M_Y)), workers)
    rep = martingale_check(masses, threshold=cfg.tol("martingale_z"))
    return rep, None


def _check_zakai(cfg, coeffs, workers):
    sim = cfg.simulation(store="full")
    basis = _basis(cfg)
    n_boot = int(cfg.opt("n_boot"))
    thr = cfg.tol("z_threshold")

    def one(r):
        tr = simulate_canonical(sim, coeffs, replica=r)
        reps = zakai_residuals(tr, coeffs, list(basis), n_boot=n_boot, bootstrap_seed=r, threshold=thr)
        for rep in reps:
            rep.name = f"r{r}:{rep.name}"
        return reps

    reports = [rep for chunk in _map(one, list(range(cfg.M_Y)), workers) for rep in chunk]
    frac = float(np.mean([rep.passed for rep in reports]))
    need = cfg.tol("zakai_pass_fraction")
    return (
        {
            "pass_fraction": frac,
            "required_fraction": need,
            "max_abs_standardized": float(max(abs(rep.standardized) for rep in reports)),
            "reports": [rep.to_dict(with_path=False) for rep in reports],
            "passed": frac >= need,
        },
        reports_to_csv(reports, cfg.config_hash()),
    )


def _check_cfpe(cfg, coeffs, workers):
    sim = cfg.simulation(store="full")
    basis = _basis(cfg)
    idx = int(cfg.opt("cfpe_function"))
    psi = basis[idx]
    n_boot = int(cfg.opt("n_boot"))
    # Dirac law with linear outer function: must coincide with the Zakai residual
    tr0 = simulate_canonical(sim, coeffs, replica=0)
    lin = cfpe_residual(EmpiricalLaw([tr0]), CylindricalFunction.of(OuterFunction.linear([1.0]), [psi]), coeffs, n_boot=n_boot)
    zak = zakai_residual(tr0, coeffs, psi, n_boot=n_boot)
    dirac_diff = float(np.max(np.abs(lin.residual - zak.residual)))
    members = nu_ensemble(sim, coeffs, replica=0, M=cfg.M_nu, randomize_mass=True)
    F = CylindricalFunction.of(OuterFunction.square(), [psi])
    rep = cfpe_residual(EmpiricalLaw(members), F, coeffs, n_boot=n_boot, threshold=cfg.tol("z_threshold"))
    ok = dirac_diff <= cfg.tol("dirac_reduction") and rep.passed
    return (
        {
            "dirac_reduction_max_abs_diff": dirac_diff,
            "dirac_tolerance": cfg.tol("dirac_reduction"),
            "ensemble": rep.to_dict(with_path=False),
            "passed": ok,
        },
        reports_to_csv([lin, rep], cfg.config_hash()),
    )


def _check_rinf(cfg, coeffs, workers):
    sim = cfg.simulation(store="full")
    K = int(cfg.opt("lift_K"))
    basis = _basis(cfg, max(K, cfg.K))
    tr = simulate_canonical(sim, coeffs, replica=0)
    reps = rinf_sde_residual(tr, coeffs, basis, K)
    diff = max(rep.extra["max_abs_diff_vs_zakai"] for rep in reps)
    ag = max(float(np.max(np.abs(rep.extra["alpha_ii"] - rep.extra["gamma_i"] ** 2))) for rep in reps)
    tol = cfg.tol("lift_identity")
    return (
        {
            "max_abs_diff_vs_zakai": diff,
            "max_abs_alpha_minus_gamma_sq": ag,
            "tolerance": tol,
            "reports": [rep.to_dict(with_path=False) for rep in reps],
            "passed": diff <= tol and ag <= tol,
        },
        reports_to_csv(reps, cfg.config_hash()),
    )


def _check_lyapunov(cfg, coeffs, workers):
    sim = cfg.simulation(N=int(cfg.opt("lyapunov_N")), store="full")
    trajs = _map(lambda r: simulate_canonical(sim, coeffs, replica=r), list(range(cfg.M_Y)), workers)
    lip = check_lipschitz(coeffs, n_probes=int(cfg.opt("n_probes")), T=cfg.T)
    K_const = max(1.0, lip.max_ratio)
    rep = lyapunov_decay(
        trajs,
        float(cfg.opt("delta")),
        coeffs,
        K_const,
        every=int(cfg.opt("lyapunov_every")),
        tolerance=cfg.tol("lyapunov_uptick"),
        workers=workers,
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_hash", "t", "beta_norm_sq"])
    for t, v in zip(rep["times"], rep["path"]):
        w.writerow([cfg.config_hash(), repr(float(t)), repr(float(v))])
    return rep, buf.getvalue()


def _check_roundtrip(cfg, coeffs, workers):
    sim = cfg.simulation(store="full")
    rep = roundtrip_check(
        sim, coeffs, list(cfg.opt("roundtrip_N")), cfg.M_Y, K=cfg.K, delta=float(cfg.opt("delta")),
        basis=_basis(cfg), workers=workers,
    )
    rep["passed"] = rep["decreasing"]
    return rep, None


def _check_regularity(cfg, coeffs, workers):
    sim = cfg.simulation(store="full")
    law = EmpiricalLaw(nu_ensemble(sim, coeffs, replica=0, M=cfg.M_nu, randomize_mass=True))
    rep = regularity_phi(law, coeffs, float(cfg.opt("regularity_p")))
    rep["passed"] = rep["finite"]
    return rep, None


def _check_lipschitz(cfg, coeffs, workers):
    rep = check_lipschitz(coeffs, n_probes=int(cfg.opt("n_probes")), tolerance=cfg.tol("lipschitz_rel"), T=cfg.T)
    return rep.to_dict(), None


def _check_nondegeneracy(cfg, coeffs, workers):
    rep = check_nondegeneracy(coeffs, n_probes=int(cfg.opt("n_probes")), T=cfg.T)
    return rep.to_dict(), None


CHECK_RUNNERS = {
    "ks": _check_ks,
    "martingale": _check_martingale,
    "zakai": _check_zakai,
    "cfpe": _check_cfpe,
    "rinf": _check_rinf,
    "lyapunov": _check_lyapunov,
    "roundtrip": _check_roundtrip,
    "regularity": _check_regularity,
    "lipschitz": _check_lipschitz,
    "nondegeneracy": _check_nondegeneracy,
}
assert set(CHECK_RUNNERS) == set(CHECKS)


def aggregate_reports(report_dir: Path, expected_hash: str) -> dict[str, dict]:
    """Load every report in ``report_dir``; refuse if any carries another hash."""
    out = {}
    for path in sorted(report_dir.glob("*.json")):
        rec = json.loads(path.read_text())
        if rec.get("config_hash") != expected_hash:
            raise HashMismatch(
                f"{path.name} has config hash {rec.get('config_hash')!r}, expected {expected_hash!r}"
            )
        out[path.stem] = rec
    return out


def cmd_verify(cfg: RunConfig, out: Path, workers: int, checks: list[str] | None = None) -> int:
    checks = list(cfg.checks) if checks is None else checks
    coeffs = cfg.coefficients()
    h = cfg.config_hash()
    report_dir = out / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    for name in checks:
        rep, table = CHECK_RUNNERS[name](cfg, coeffs, workers)
        rep = dict(rep)
        rep["check"] = name
        rep["config_hash"] = h
        if table is not None:
            (report_dir / f"{name}.csv").write_text(table)
            rep["csv"] = f"{name}.csv"
        _dump_json(report_dir / f"{name}.json", rep)
    reports = aggregate_reports(report_dir, h)
    status = {name: bool(rep["passed"]) for name, rep in reports.items()}
    failures = sorted(name for name, ok in status.items() if not ok)
    summary = {"config_hash": h, "checks": status, "failures": failures, "passed": not failures}
    _dump_json(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_PASS if not failures else EXIT_FAIL


# ---------------------------------------------------------------------------
# oracle


def _bootstrap_mean_se(X: np.ndarray, logw: np.ndarray, n_boot: int, rng: np.random.Generator) -> float:
    w = np.exp(logw - logw.max())
    x = X[:, 0]
    N = len(x)
    est = np.empty(n_boot)
    for b in range(n_boot):
        i = rng.integers(0, N, N)
        est[b] = w[i] @ x[i] / w[i].sum()
    return float(est.std(ddof=1))


def oracle_table(cfg: RunConfig) -> dict:
    """Particle conditional mean and variance against the Kalman-Bucy
    references on the replica-0 observation path."""
    if cfg.family not in ("linear_gaussian", "mean_field_linear") or cfg.d != 1:
        raise ConfigError("the oracle comparison needs a one-dimensional linear family", field="family")
    p = family_parameters(cfg.family, cfg.params)
    kind = cfg.x0.get("kind", "point")
    m0 = float(cfg.x0.get("x", 0.0)) if kind == "point" else float(cfg.x0.get("mean", 0.0))
    P0 = 0.0 if kind == "point" else float(cfg.x0.get("var", 1.0))
    every = int(cfg.opt("oracle_record_every"))
    sim = cfg.simulation(store="summary", record_every=every)
    coeffs = cfg.coefficients()
    Y = observation_path(sim, 0)
    tr = simulate_canonical(sim, coeffs, replica=0, Y=Y)
    if cfg.family == "linear_gaussian":
        kal = kalman_bucy_correlated(p["a"], p["sigma"], p["rho"], p["c"], m0, P0, Y, cfg.dt)
    else:
        kal = meanfield_linear_mean(p["a"], p["abar"], p["sigma"], p["rho"], p["c"], m0, P0, Y, cfg.dt)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(13,)))
    rows = []
    for s, k in enumerate(tr.record_idx):
        k = int(k)
        w = np.exp(tr.logw[s] - tr.logw[s].max())
        w /= w.sum()
        x = tr.X[s, :, 0]
        pm = float(w @ x)
        pv = float(w @ (x - pm) ** 2)
        se = _bootstrap_mean_se(tr.X[s], tr.logw[s], int(cfg.opt("n_boot")), rng)
        diff = pm - float(kal.m[k])
        if se > 0:
            z = diff / se
        else:
            # degenerate ensemble (e.g. a point mass at t=0): compare up to rounding
            z = 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(pm)) else math.inf
        rows.append(
            {"t": float(tr.times[k]), "particle_mean": pm, "kalman_mean": float(kal.m[k]), "se": se, "z": z,
             "particle_var": pv, "kalman_P": float(kal.P[k])}
        )
    diffs = np.array([abs(r["particle_mean"] - r["kalman_mean"]) for r in rows])
    ses = np.array([r["se"] for r in rows])
    km = np.array([r["kalman_mean"] for r in rows])
    rel_l2 = float(np.sqrt(np.sum(diffs**2) / np.sum(km**2))) if np.any(km != 0) else float(np.sqrt(np.mean(diffs**2)))
    max_z = float(max(abs(r["z"]) for r in rows))
    return {
        "rows": rows,
        "time_avg_abs_diff": float(diffs.mean()),
        "time_avg_se": float(ses.mean()),
        "relative_l2_error": rel_l2,
        "max_abs_z": max_z,
        "threshold": cfg.tol("oracle_z"),
        "passed": max_z <= cfg.tol("oracle_z"),
    }


def cmd_oracle(cfg: RunConfig, out: Path, workers: int) -> int:
    h = cfg.config_hash()
    res = oracle_table(cfg)
    cols = ["t", "particle_mean", "kalman_mean", "se", "z", "particle_var", "kalman_P"]
    _write_csv(out / "oracle.csv", ["config_hash", *cols], [[h, *[r[c] for c in cols]] for r in res["rows"]])
    summary = {k: v for k, v in res.items() if k != "rows"}
    summary["config_hash"] = h
    summary["failures"] = [] if res["passed"] else ["oracle"]
    _dump_json(out / "oracle.json", summary)
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_PASS if res["passed"] else EXIT_FAIL


# ---------------------------------------------------------------------------
# sweep


def _fit_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def sweep_table(cfg: RunConfig, axis: str, values: list[float], workers: int) -> dict:
    coeffs = cfg.coefficients()
    functions = cfg.sweep.functions if cfg.sweep is not None else None
    if axis in ("N", "dt"):
        size = cfg.K if not functions else max(cfg.K, max(functions) + 1)
        basis = _basis(cfg, size)
        funcs = [basis[i] for i in functions] if functions else list(basis)[: cfg.K]
        sim = cfg.simulation(store="full")
        n_boot = int(cfg.opt("n_boot"))
        if axis == "N":
            res = zakai_rms_sweep(sim, coeffs, funcs, [int(v) for v in values], cfg.M_Y, workers=workers, n_boot=n_boot)
            rows = [{"value": r["N"], "error": r["rms"], "se": r["mean_se"], "disc_scale": r["mean_disc_scale"]} for r in res["rows"]]
            slope = res["slope"]
            passed = cfg.tol("slope_low") <= slope <= cfg.tol("slope_high")
        else:
            rows = []
            for dt in values:
                s = SimulationConfig(**{**sim.to_dict(), "dt": float(dt)})
                res = zakai_rms_sweep(s, coeffs, funcs, [cfg.N], cfg.M_Y, workers=workers, n_boot=n_boot)
                r = res["rows"][0]
                rows.append({"value": float(dt), "error": r["rms"], "se": r["mean_se"], "disc_scale": r["mean_disc_scale"]})
            slope = _fit_slope([r["value"] for r in rows], [r["error"] for r in rows])
            passed = bool(slope >= 0)
    else:
        Ks = [int(v) for v in values]
        basis = _basis(cfg, max(Ks))
        sim = cfg.simulation(store="full")

        def one(r):
            Y = observation_path(sim, r)
            live = simulate_canonical(sim, coeffs, replica=r, Y=Y)
            frozen = simulate_frozen_mu(sim, coeffs, live.mu_path(), Y, replica=r, fresh_noise=True)
            a, b = live.nu(live.n_steps), frozen.nu(frozen.n_steps)
            return [metric_d(a, b, K, basis) for K in Ks]

        dvals = np.array(_map(one, list(range(cfg.M_Y)), workers))
        rows = [{"value": K, "error": float(np.median(dvals[:, j])), "se": float("nan"), "disc_scale": 2.0**-K} for j, K in enumerate(Ks)]
        slope = _fit_slope(Ks, [r["error"] for r in rows])
        # truncations are monotone in K and the neglected tail is at most 2^-K
        inc = np.diff(dvals, axis=1)
        bound = np.array([2.0**-a for a in Ks[:-1]])
        passed = bool(np.all(inc >= -1e-15) and np.all(inc <= bound + 1e-15))
    return {"axis": axis, "rows": rows, "slope": slope, "passed": bool(passed)}


def cmd_sweep(cfg: RunConfig, out: Path, workers: int, axis: str | None = None, values: list[float] | None = None) -> int:
    spec = cfg.sweep
    axis = axis or (spec.axis if spec else "N")
    values = values or (list(spec.values) if spec else [500, 2000, 8000])
    if axis not in ("N", "dt", "K"):
        raise ConfigError(f"sweep axis must be N, dt or K, got {axis!r}", field="sweep.axis")
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two values", field="sweep.values")
    h = cfg.config_hash()
    res = sweep_table(cfg, axis, values, workers)
    _write_csv(
        out / "sweep.csv",
        ["config_hash", "axis", "value", "error", "se", "disc_scale"],
        [[h, axis, r["value"], r["error"], r["se"], r["disc_scale"]] for r in res["rows"]],
    )
    summary = {"config_hash": h, "axis": axis, "values": list(values), "slope": res["slope"], "passed": res["passed"],
               "failures": [] if res["passed"] else [f"sweep:{axis}"]}
    _dump_json(out / "sweep.json", summary)
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_PASS if res["passed"] else EXIT_FAIL


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmvzakai", description="Weighted particle engine and residual checks.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "verify", "oracle", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help="override the output directory")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="thread count (results do not depend on it)")
        if name == "verify":
            sp.add_argument("--check", help=f"comma-separated subset of {','.join(CHECKS)}")
        if name == "sweep":
            sp.add_argument("--axis", choices=("N", "dt", "K"))
            sp.add_argument("--values", help="comma-separated axis values")
    return ap


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.out is not None:
            over["out"] = args.out
        if over:
            data = cfg.to_dict()
            data.update(over)
            cfg = RunConfig.from_dict(data)
        checks = None
        if getattr(args, "check", None):
            checks = [c.strip() for c in args.check.split(",") if c.strip()]
            bad = [c for c in checks if c not in CHECKS]
            if bad:
                raise ConfigError(f"unknown checks {bad}", field="--check")
        values = None
        if getattr(args, "values", None):
            try:
                values = [float(v) for v in args.values.split(",")]
            except ValueError:
                raise ConfigError(f"cannot parse --values {args.values!r}", field="--values") from None
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1", field="--workers")
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.workers)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.workers, checks)
        if args.command == "oracle":
            return cmd_oracle(cfg, out, args.workers)
        return cmd_sweep(cfg, out, args.workers, getattr(args, "axis", None), values)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), field=exc.field, line=exc.line)
    except HashMismatch as exc:
        return _fail(EXIT_CONFIG, "hash_mismatch", str(exc))
    except (ParameterError, OSError) as exc:
        return _fail(EXIT_CONFIG, type(exc).__name__, str(exc))
    except NUMERICAL_ERRORS as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, str(exc), step=getattr(exc, "step", None))


if __name__ == "__main__":
    sys.exit(main())
