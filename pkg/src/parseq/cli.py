"""Batch experiment runner.

Usage: ``parseq <subcommand> --config <path> [--out <path>] [--workers N]``.
Subcommands: rollout, solve, lle, bounds, threshold, twowell, observer,
oracle-check.  Configs are JSON with fully explicit seeds (no wall-clock
seeding), so every run is reproducible bit-for-bit apart from the
wall_seconds column and floating-point reassociation inside the scans.
``PARSEQ_WORKERS`` overrides the worker count.

Exit codes: 0 success, 2 property violation (oracle-check), 3 config error.
Every CSV starts with a schema_version column; rows are emitted in sorted
order through a single sink regardless of how the sweep was parallelized.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis, systems
from .core import Trajectory, residual, save_trajectory_csv, sequential_rollout
from .linalg import svd_extremes
from .scan import MultiplyCounter, affine_scan
from .solvers import SolverConfig, SolverReport, deer_solve, gd_solve, quasi_deer_solve, report_to_dict

SCHEMA_VERSION = 1

_SOLVERS = {"deer": deer_solve, "quasi_deer": quasi_deer_solve, "gd": gd_solve}


class ConfigError(ValueError):
    pass


def _solver_config(spec: dict | None, **overrides) -> SolverConfig:
    spec = dict(spec or {})
    spec.update(overrides)
    try:
        return SolverConfig(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver config: {exc}") from exc


def build_system(spec: dict):
    """Instantiate a model from a config spec; returns (model, s0)."""
    try:
        name = spec["name"]
        params = dict(spec.get("params", {}))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"system spec needs a name: {exc}") from exc
    s0 = params.pop("s0", None)
    if name == "mean_field_rnn":
        model = systems.mean_field_rnn(**params)
        s0 = np.zeros(model.dim()) if s0 is None else np.asarray(s0, dtype=float)
    elif name == "two_well":
        model = systems.two_well(**params)
        s0 = model.mus[0].copy() if s0 is None else np.asarray(s0, dtype=float)
    elif name == "contractive_scalar_rnn":
        seed = params.pop("seed", 0)
        T = params.pop("T")
        rng = np.random.default_rng(seed)
        model = systems.contractive_scalar_rnn(
            params.pop("b_param"), rng.uniform(-1.0, 1.0, T)
        )
        s0 = np.zeros(1) if s0 is None else np.asarray(s0, dtype=float)
    elif name == "flow":
        flow = params.pop("flow")
        seed = params.pop("seed", 0)
        point = systems.attractor_state(flow, params.get("dt", 0.01), seed)
        model = systems.FlowSystem(flow, params.pop("dt", 0.01), params.pop("T"), s0=point)
        s0 = point if s0 is None else np.asarray(s0, dtype=float)
    else:
        raise ConfigError(f"unknown system {name!r}")
    return model, s0


def _rollout_lle(model, s0, seed: int) -> float:
    traj = sequential_rollout(model, s0, model.horizon())
    if not traj.finite:
        return float("nan")
    return analysis.estimate_lle(model.jacobian_all(traj.prev_states()), seed=seed)


# ---------------------------------------------------------------------------
# Sweep experiments

def _grid(cfg_val, default: list) -> list:
    if cfg_val is None:
        return default
    if isinstance(cfg_val, dict):
        return np.linspace(cfg_val["min"], cfg_val["max"], cfg_val["num"]).tolist()
    return list(cfg_val)


def _map_points(points, fn, workers: int):
    if workers <= 1:
        return [fn(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, points))


def run_threshold(cfg: dict, workers: int = 1) -> list[dict]:
    """steps-to-converge across the gain/LLE grid; one row per point."""
    D = int(cfg.get("D", 50))
    g_grid = _grid(cfg.get("g_grid"), np.linspace(0.5, 2.0, 16).tolist())
    t_grid = [int(t) for t in _grid(cfg.get("T_grid"), [100, 317, 954])]
    seeds = [int(s) for s in cfg.get("seeds", [0, 1, 2, 3, 4])]
    solver_names = list(cfg.get("solvers", ["deer"]))
    for name in solver_names:
        if name not in _SOLVERS:
            raise ConfigError(f"unknown solver {name!r}")
    base = dict(cfg.get("solver", {}))

    points = [
        (solver, g, T, seed)
        for solver in solver_names
        for g in g_grid
        for T in t_grid
        for seed in seeds
    ]

    def one(point):
        solver, g, T, seed = point
        row = {
            "schema_version": SCHEMA_VERSION,
            "g": g,
            "lambda": float("nan"),
            "T": T,
            "seed": seed,
            "solver": solver,
            "steps": -1,
            "converged": False,
            "final_merit": float("nan"),
            "nan_resets": -1,
            "wall_seconds": float("nan"),
        }
        try:
            model = systems.mean_field_rnn(D=D, g=g, T=T, seed=seed)
            s0 = np.zeros(D)
            row["lambda"] = _rollout_lle(model, s0, seed)
            scfg = _solver_config(base, seed=seed, max_iters=base.get("max_iters", T))
            report = _SOLVERS[solver](model, s0, scfg)
            row.update(
                steps=report.iterations,
                converged=report.converged,
                final_merit=report.merit_history[-1],
                nan_resets=report.nan_resets,
                wall_seconds=report.wall_seconds,
            )
        except Exception:
            pass  # partial failure: row stays converged=False
        return row

    rows = _map_points(points, one, workers)
    rows.sort(key=lambda r: (r["solver"], r["g"], r["T"], r["seed"]))
    return rows


def run_twowell(cfg: dict, workers: int = 1) -> tuple[list[dict], list[dict]]:
    """DEER step counts for the two-well Langevin system, plus the
    per-iteration LLE series used by the trace figures."""
    t_grid = [int(t) for t in _grid(cfg.get("T_grid"), [100, 1000, 10000])]
    seeds = [int(s) for s in cfg.get("seeds", list(range(20)))]
    eps = float(cfg.get("eps", 0.05))
    variances = tuple(cfg.get("variances", (1.4, 1.1)))
    D = int(cfg.get("D", 2))
    base = dict(cfg.get("solver", {}))
    base.setdefault("init", "std_normal")
    base.setdefault("track_lle", True)

    def one(point):
        T, seed = point
        row = {
            "schema_version": SCHEMA_VERSION,
            "T": T,
            "seed": seed,
            "steps": -1,
            "lambda": float("nan"),
            "converged": False,
        }
        iter_rows = []
        try:
            model = systems.two_well(eps=eps, T=T, seed=seed, D=D, variances=variances)
            s0 = model.mus[0].copy()
            row["lambda"] = _rollout_lle(model, s0, seed)
            scfg = _solver_config(base, seed=seed, max_iters=base.get("max_iters", T))
            report = deer_solve(model, s0, scfg)
            row.update(steps=report.iterations, converged=report.converged)
            for i, lle in enumerate(report.per_iter_lle or []):
                iter_rows.append(
                    {
                        "schema_version": SCHEMA_VERSION,
                        "T": T,
                        "seed": seed,
                        "iteration": i,
                        "lle": lle,
                    }
                )
        except Exception:
            pass
        return row, iter_rows

    results = _map_points([(T, s) for T in t_grid for s in seeds], one, workers)
    rows = sorted((r for r, _ in results), key=lambda r: (r["T"], r["seed"]))
    iters = sorted(
        (ir for _, irs in results for ir in irs),
        key=lambda r: (r["T"], r["seed"], r["iteration"]),
    )
    return rows, iters


def run_observer(cfg: dict, workers: int = 1) -> list[dict]:
    """System-vs-observer contrast on chaotic flows.

    The lambda column is reported per unit time (per-step LLE divided by dt)
    so the values are comparable across integration steps; signs are what
    the acceptance checks rely on.  System solves run under a lowered
    iteration cap: they are there to demonstrate non-convergence, and the
    full T-step cap would only burn hours to show the same thing.
    """
    T = int(cfg.get("T", 30000))
    seed = int(cfg.get("seed", 0))
    flows = cfg.get(
        "flows",
        [
            {"flow": "lorenz", "style": "substitution", "dt": 0.01},
            {"flow": "rossler", "style": "substitution_gain", "dt": 0.01,
             "gain": (2.0, -1.0, 0.0)},
        ],
    )
    base = dict(cfg.get("solver", {}))
    base.setdefault("init", "std_normal")
    system_cap = int(cfg.get("system_max_iters", 1200))

    def one(fspec):
        flow = fspec["flow"]
        dt = float(fspec.get("dt", 0.01))
        system, observer = systems.flow_observer(
            flow,
            dt,
            T,
            seed,
            style=fspec.get("style", "substitution"),
            gain=float(fspec.get("gain", 5.0)),
        )
        out = []
        for mode, model, s0, cap in (
            ("system", system, system.default_s0, system_cap),
            ("observer", observer, observer.default_s0, base.get("max_iters", T)),
        ):
            row = {
                "schema_version": SCHEMA_VERSION,
                "flow": flow,
                "mode": mode,
                "lambda": float("nan"),
                "steps": -1,
                "converged": False,
            }
            try:
                row["lambda"] = _rollout_lle(model, s0, seed) / dt
                scfg = _solver_config(base, seed=seed, max_iters=cap)
                report = deer_solve(model, s0, scfg)
                row.update(steps=report.iterations, converged=report.converged)
            except Exception:
                pass
            out.append(row)
        return out

    results = _map_points(flows, one, workers)
    rows = [r for chunk in results for r in chunk]
    rows.sort(key=lambda r: (r["flow"], r["mode"]))
    return rows


# ---------------------------------------------------------------------------
# Oracle-scale property harness

def _random_tanh_system(rng, D, T, scale=1.0):
    return systems.mean_field_rnn(D=D, g=scale, T=T, seed=int(rng.integers(2**31)))


def run_oracle_check(cfg: dict, workers: int = 1) -> dict:
    """Dense-SVD verification of the conditioning bounds at oracle scale."""
    seed = int(cfg.get("seed", 0))
    n_sandwich = int(cfg.get("sandwich_systems", 100))
    rng = np.random.default_rng(seed)
    checks = []

    worst = math.inf
    for _ in range(n_sandwich):
        D = int(rng.integers(2, 5))  # the tanh fixture has no self-coupling
        T = int(rng.integers(2, 13))
        model = _random_tanh_system(rng, D, T, scale=float(rng.uniform(0.5, 2.0)))
        s0 = rng.standard_normal(D)
        traj = sequential_rollout(model, s0, T)
        J = analysis.build_full_jacobian(model, traj)
        _, smin = svd_extremes(J)
        jacs = model.jacobian_all(traj.prev_states())[1:]
        lam, a, b = analysis.measure_burn_in(jacs)
        lo, hi = analysis.pl_bounds(lam, T, a=a, b=b)
        worst = min(worst, smin - lo + 1e-9, hi - smin + 1e-9)
    checks.append({"name": "theorem1_sandwich", "passed": worst >= 0.0, "margin": worst})

    worst = math.inf
    for _ in range(20):
        D = int(rng.integers(2, 5))
        T = int(rng.integers(2, 13))
        model = _random_tanh_system(rng, D, T)
        traj = sequential_rollout(model, rng.standard_normal(D), T)
        norm, bound = analysis.neumann_inverse_norm_check(model, traj)
        worst = min(worst, bound - norm + 1e-9 * bound)
    checks.append({"name": "neumann_bound", "passed": worst >= 0.0, "margin": worst})

    worst = math.inf
    for _ in range(20):
        D = int(rng.integers(2, 5))
        T = int(rng.integers(2, 13))
        model = _random_tanh_system(rng, D, T)
        s0 = rng.standard_normal(D)
        traj = sequential_rollout(model, s0, T)
        other = Trajectory(s0=s0, states=traj.states + 0.1 * rng.standard_normal(traj.states.shape))
        J0 = analysis.build_full_jacobian(model, traj)
        J1 = analysis.build_full_jacobian(model, other)
        _, smin0 = svd_extremes(J0)
        _, smin1 = svd_extremes(J1)
        gap = np.linalg.norm(J1 - J0, 2) + 1e-9 - abs(smin1 - smin0)
        worst = min(worst, float(gap))
    checks.append({"name": "sigma_min_perturbation", "passed": worst >= 0.0, "margin": worst})

    worst = math.inf
    for _ in range(20):
        D = int(rng.integers(1, 9))
        T = int(rng.integers(2, 2001))
        model, s0 = _random_linear_system(rng, D, T)
        report = deer_solve(model, s0, SolverConfig(tol=1e-12, max_iters=3, seed=seed))
        if report.iterations > 1 or report.merit_history[-1] > 1e-12:
            worst = -1.0
        worst = min(worst, 1e-12 - report.merit_history[-1])
    checks.append({"name": "linear_one_step", "passed": worst >= 0.0, "margin": worst})

    worst = math.inf
    for _ in range(20):
        D = int(rng.integers(1, 8))
        T = int(rng.choice([1, 2, 7, 100, 1023]))
        As = rng.standard_normal((T, D, D)) * 0.6
        bs = rng.standard_normal((T, D))
        seq = affine_scan((As, bs), mode="sequential")
        par = affine_scan((As, bs), mode="parallel", chunks=int(rng.integers(1, 12)))
        scale = 1.0 + np.abs(seq).max()
        worst = min(worst, float(1e-12 - np.abs(par - seq).max() / scale))
    checks.append({"name": "scan_mode_equivalence", "passed": worst >= 0.0, "margin": worst})

    return {"passed": all(c["passed"] for c in checks), "checks": checks}


def _random_linear_system(rng, D, T, spread=0.2):
    """Random stable/unstable LTV instance whose rollout stays in fp range.

    Per-step norms mix growth and decay; the cumulative log-product is capped
    near e^8 so unstable chains cannot push intermediates out of float range.
    """
    drift = (spread * rng.standard_normal(T) - 0.005).cumsum()
    drift -= np.maximum(np.maximum.accumulate(drift) - 8.0, 0.0)
    A = rng.standard_normal((T, D, D))
    norms = np.linalg.norm(A, axis=(1, 2)) / np.sqrt(D)
    A *= (np.exp(np.diff(np.concatenate([[0.0], drift]))) / norms)[:, None, None]
    c = rng.standard_normal((T, D))
    return systems.LinearTimeVarying(A, c), rng.standard_normal(D)


# ---------------------------------------------------------------------------
# Single-shot subcommands

def run_rollout(cfg: dict) -> Trajectory:
    model, s0 = build_system(cfg["system"])
    return sequential_rollout(model, s0, model.horizon())


def run_solve(cfg: dict) -> SolverReport:
    model, s0 = build_system(cfg["system"])
    name = cfg.get("solver_name", "deer")
    if name not in _SOLVERS:
        raise ConfigError(f"unknown solver {name!r}")
    base = dict(cfg.get("solver", {}))
    scfg = _solver_config(base, max_iters=base.get("max_iters", model.horizon()))
    return _SOLVERS[name](model, s0, scfg)


def run_lle(cfg: dict) -> dict:
    model, s0 = build_system(cfg["system"])
    lam = _rollout_lle(model, s0, int(cfg.get("seed", 0)))
    return {"lambda": lam, "predictable": bool(lam < 0)}


def run_bounds(cfg: dict) -> analysis.ConditioningReport:
    model, s0 = build_system(cfg["system"])
    fit = cfg.get("fit_from_solve", True)
    beta, chi = 0.5, 1.0
    if fit:
        base = dict(cfg.get("solver", {}))
        scfg = _solver_config(base, max_iters=base.get("max_iters", model.horizon()))
        report = deer_solve(model, s0, scfg)
        beta, chi = analysis.fit_convergence_rate(report.merit_history)
    return analysis.conditioning_report(
        model, s0, seed=int(cfg.get("seed", 0)), beta=beta, chi=chi
    )


# ---------------------------------------------------------------------------
# Entry point

def write_csv(rows: list[dict], path) -> None:
    if not rows:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("schema_version\n")
        return
    fields = list(rows[0].keys())
    assert fields[0] == "schema_version"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("PARSEQ_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="parseq", description=__doc__)
    parser.add_argument("subcommand", choices=[
        "rollout", "solve", "lle", "bounds", "threshold", "twowell",
        "observer", "oracle-check",
    ])
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3

    workers = _resolve_workers(args)
    out = args.out
    try:
        if args.subcommand == "rollout":
            traj = run_rollout(cfg)
            save_trajectory_csv(traj, out or "rollout.csv")
        elif args.subcommand == "solve":
            report = run_solve(cfg)
            payload = report_to_dict(report)
            with open(out or "solve.json", "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
            print(f"converged: {report.converged} after {report.iterations} iterations")
        elif args.subcommand == "lle":
            result = run_lle(cfg)
            if out:
                with open(out, "w", encoding="utf-8") as fh:
                    json.dump(result, fh, indent=2)
            print(f"lambda = {result['lambda']:.6g}")
        elif args.subcommand == "bounds":
            rep = run_bounds(cfg)
            if out:
                with open(out, "w", encoding="utf-8") as fh:
                    fh.write(rep.to_json())
            verdict = "yes" if rep.parallelizable() else "no"
            print(
                f"parallelizable: {verdict} "
                f"(lambda={rep.lle:.6g}, predicted_steps={rep.predicted_steps:.6g})"
            )
        elif args.subcommand == "threshold":
            rows = run_threshold(cfg, workers)
            write_csv(rows, out or "threshold.csv")
        elif args.subcommand == "twowell":
            rows, iter_rows = run_twowell(cfg, workers)
            path = out or "twowell.csv"
            write_csv(rows, path)
            root, ext = os.path.splitext(path)
            write_csv(iter_rows, f"{root}_iters{ext or '.csv'}")
        elif args.subcommand == "observer":
            rows = run_observer(cfg, workers)
            write_csv(rows, out or "observer.csv")
        elif args.subcommand == "oracle-check":
            result = run_oracle_check(cfg, workers)
            payload = json.dumps(result, indent=2)
            if out:
                with open(out, "w", encoding="utf-8") as fh:
                    fh.write(payload)
            print(payload)
            if not result["passed"]:
                return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (KeyError, TypeError) as exc:
        print(f"config error: missing or malformed field {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
