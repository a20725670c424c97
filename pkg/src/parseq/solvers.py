"""Trajectory evaluators: Gauss-Newton, its diagonal quasi variant, and
gradient descent on the merit function.

Each iteration of the Gauss-Newton solver linearizes the dynamics at the
current iterate and evaluates the resulting linear time-varying recursion

    delta_t = J_t delta_{t-1} - r_t

with an affine scan; the update is the exact Newton step on the residual
because the residual Jacobian is block bidiagonal.  The quasi variant keeps
only diag(J_t), trading curvature information for O(D) scan elements.
Gradient descent uses the block-assembled merit gradient with a fixed step
size.

Convergence is declared on the merit value, not on trajectory error: for
unpredictable systems a converged merit does not imply the iterate matches
the sequential rollout.  Non-finite iterates trigger the configured NaN
policy; the default re-draws the initialization from the seeded stream,
which avoids deterministic re-overflow loops (set ``nan_reset_same`` to
reuse the original draw bitwise).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .core import DynamicsModel, Trajectory, merit_gradient
from .scan import affine_scan, affine_scan_diag

__all__ = [
    "SolverConfig",
    "SolverReport",
    "SolveAborted",
    "deer_solve",
    "quasi_deer_solve",
    "gd_solve",
    "report_to_dict",
    "save_report_json",
]


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-7
    max_iters: int | None = None  # None means T, the theoretical cap
    init: str = "uniform01"  # zeros | uniform01 | std_normal | given
    step_size: float = 0.25  # gradient descent only
    nan_policy: str = "reset_to_init"  # reset_to_init | abort
    seed: int = 0
    nan_reset_same: bool = False  # ablation: reuse the first draw bitwise
    init_trajectory: np.ndarray | None = None  # for init="given"
    scan_mode: str = "parallel"  # sequential | parallel
    chunks: int | None = None
    track_lle: bool = False  # record the LLE along every iterate

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.init not in ("zeros", "uniform01", "std_normal", "given"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.nan_policy not in ("reset_to_init", "abort"):
            raise ValueError(f"unknown nan_policy {self.nan_policy!r}")
        if self.init == "given" and self.init_trajectory is None:
            raise ValueError("init='given' requires init_trajectory")


@dataclass(frozen=True)
class SolverReport:
    final: Trajectory
    iterations: int
    merit_history: list[float]
    converged: bool
    nan_resets: int
    per_iter_lle: list[float] | None
    wall_seconds: float


class SolveAborted(RuntimeError):
    """Raised under nan_policy='abort'; carries the partial report."""

    def __init__(self, message: str, report: SolverReport):
        super().__init__(message)
        self.report = report


def _make_drawer(cfg: SolverConfig, T: int, D: int):
    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "given":
        given = np.asarray(cfg.init_trajectory, dtype=np.float64)
        if given.shape != (T, D):
            raise ValueError(f"init_trajectory must have shape {(T, D)}")
        return lambda: given.copy()
    draws = {
        "zeros": lambda: np.zeros((T, D)),
        "uniform01": lambda: rng.uniform(0.0, 1.0, (T, D)),
        "std_normal": lambda: rng.standard_normal((T, D)),
    }
    draw = draws[cfg.init]
    if cfg.nan_reset_same:
        first = draw()
        return lambda: first.copy()
    return draw


def _evaluate(model: DynamicsModel, s0: np.ndarray, states: np.ndarray):
    """Residual, merit, and Jacobians at one iterate, evaluated once."""
    prev = np.vstack([s0[None, :], states[:-1]])
    with np.errstate(all="ignore"):
        f = model.step_all(prev)
        r = states - f
        v = r.ravel()
        m = float(0.5 * np.dot(v, v))
        jacs = model.jacobian_all(prev)
    return r, m, jacs


def _iterate(model: DynamicsModel, s0, cfg: SolverConfig, update) -> SolverReport:
    t_start = time.perf_counter()
    s0 = np.asarray(s0, dtype=np.float64).reshape(-1)
    T, D = model.horizon(), model.dim()
    max_iters = cfg.max_iters if cfg.max_iters is not None else T
    draw = _make_drawer(cfg, T, D)

    states = draw()
    r, m, jacs = _evaluate(model, s0, states)
    history = [m]
    lle_track = [_iterate_lle(jacs, cfg)] if cfg.track_lle else None
    iters = 0
    resets = 0

    while iters < max_iters and not (history[-1] <= cfg.tol):
        with np.errstate(all="ignore"):
            states = states + update(states, r, jacs)
        iters += 1
        bad = not np.all(np.isfinite(states))
        if not bad:
            r, m, jacs = _evaluate(model, s0, states)
            bad = not np.isfinite(m)
        if bad:
            if cfg.nan_policy == "abort":
                report = _finish(s0, states, iters, history, resets, lle_track, t_start, cfg)
                raise SolveAborted("non-finite iterate", report)
            resets += 1
            states = draw()
            r, m, jacs = _evaluate(model, s0, states)
        history.append(m)
        if lle_track is not None:
            lle_track.append(_iterate_lle(jacs, cfg))

    return _finish(s0, states, iters, history, resets, lle_track, t_start, cfg)


def _iterate_lle(jacs: np.ndarray, cfg: SolverConfig) -> float:
    from .analysis import estimate_lle

    if not np.all(np.isfinite(jacs)):
        return float("nan")
    return estimate_lle(jacs, seed=cfg.seed)


def _finish(s0, states, iters, history, resets, lle_track, t_start, cfg):
    return SolverReport(
        final=Trajectory(s0=s0, states=states),
        iterations=iters,
        merit_history=[float(x) for x in history],
        converged=bool(history[-1] <= cfg.tol),
        nan_resets=resets,
        per_iter_lle=lle_track,
        wall_seconds=time.perf_counter() - t_start,
    )


def deer_solve(model: DynamicsModel, s0, cfg: SolverConfig = SolverConfig()) -> SolverReport:
    """Gauss-Newton evaluation: scan elements (J_t, -r_t) give the update."""

    def update(states, r, jacs):
        return affine_scan((jacs, -r), mode=cfg.scan_mode, chunks=cfg.chunks)

    return _iterate(model, s0, cfg, update)


def quasi_deer_solve(model: DynamicsModel, s0, cfg: SolverConfig = SolverConfig()) -> SolverReport:
    """As deer_solve but each scan element keeps only diag(J_t)."""

    def update(states, r, jacs):
        diag = np.einsum("tii->ti", jacs)
        return affine_scan_diag(diag, -r, mode=cfg.scan_mode, chunks=cfg.chunks)

    return _iterate(model, s0, cfg, update)


def gd_solve(model: DynamicsModel, s0, cfg: SolverConfig = SolverConfig()) -> SolverReport:
    """Fixed-step gradient descent on the merit function.

    The gradient assembles J^T r block-wise (grad_t = r_t - J_{t+1}^T r_{t+1}),
    so each step is embarrassingly parallel over time.
    """

    def update(states, r, jacs):
        grad = r.copy()
        grad[:-1] -= np.einsum("tij,ti->tj", jacs[1:], r[1:])
        return -cfg.step_size * grad

    return _iterate(model, s0, cfg, update)


def report_to_dict(report: SolverReport) -> dict:
    return {
        "final": {
            "s0": report.final.s0.tolist(),
            "states": report.final.states.tolist(),
        },
        "iterations": report.iterations,
        "merit_history": report.merit_history,
        "converged": report.converged,
        "nan_resets": report.nan_resets,
        "per_iter_lle": report.per_iter_lle,
        "wall_seconds": report.wall_seconds,
    }


def save_report_json(report: SolverReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
