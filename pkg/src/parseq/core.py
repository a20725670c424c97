"""State-space trajectories, residuals, and the merit function.

A model is a sequence of maps ``s_t = f_t(s_{t-1})`` for ``t = 1..T`` with
``s_0`` given.  Evaluating the model is equivalent to driving the stacked
residual ``r_t = s_t - f_t(s_{t-1})`` to zero, i.e. minimizing the merit
function ``0.5 * ||r||^2``.  This module holds the shared primitives; the
optimizers live in :mod:`parseq.solvers`.

Storage convention: the math indexes states 1..T, arrays store them 0-based,
so ``states[t-1]`` is the math's ``s_t``.  ``s_0`` is kept separately and is
never an optimization variable.  All arithmetic is float64.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Trajectory",
    "DynamicsModel",
    "Residual",
    "sequential_rollout",
    "residual",
    "merit",
    "merit_gradient",
    "save_trajectory_csv",
    "load_trajectory_csv",
]


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class Trajectory:
    """A fixed initial state plus T stacked D-vectors.

    ``finite`` is False when the states contain overflow (inf or NaN); the
    solvers' NaN-reset policy consumes this flag.
    """

    s0: np.ndarray
    states: np.ndarray
    finite: bool = field(init=False)

    def __post_init__(self):
        s0 = _as_f64(self.s0).reshape(-1)
        states = _as_f64(self.states)
        if states.ndim != 2:
            raise ValueError("states must be a T x D array")
        if states.shape[1] != s0.shape[0]:
            raise ValueError(
                f"state dimension mismatch: s0 has D={s0.shape[0]}, "
                f"states have D={states.shape[1]}"
            )
        if states.shape[0] < 1:
            raise ValueError("need at least one state row")
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "finite", bool(np.all(np.isfinite(states))))
        self.s0.setflags(write=False)
        self.states.setflags(write=False)

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def D(self) -> int:
        return self.states.shape[1]

    def prev_states(self) -> np.ndarray:
        """Rows s_0 .. s_{T-1}: the state each step maps *from*."""
        return np.vstack([self.s0[None, :], self.states[:-1]])


class DynamicsModel(abc.ABC):
    """Capability interface for one nonlinear state space model.

    Implementations must be pure (same ``(t, s)`` gives the same output) and
    immutable after construction so they can be shared across threads.  Any
    exogenous input sequence ``u_t`` is baked in at construction, which is
    what makes ``f_t`` time varying.  Time indices are 1-based.
    """

    @abc.abstractmethod
    def step(self, t: int, s: np.ndarray) -> np.ndarray:
        """Evaluate f_t(s)."""

    @abc.abstractmethod
    def jacobian(self, t: int, s: np.ndarray) -> np.ndarray:
        """Evaluate the D x D Jacobian of f_t at s."""

    @abc.abstractmethod
    def dim(self) -> int:
        """State dimension D."""

    @abc.abstractmethod
    def horizon(self) -> int:
        """Sequence length T."""

    # Batched hooks.  The defaults loop over t; concrete systems override
    # them with vectorized versions, which is what keeps the solvers fast.

    def step_all(self, prev: np.ndarray) -> np.ndarray:
        """Row t-1 of the result is f_t(prev[t-1]), for t = 1..T."""
        return np.stack([self.step(t, prev[t - 1]) for t in range(1, len(prev) + 1)])

    def jacobian_all(self, prev: np.ndarray) -> np.ndarray:
        """Stacked (T, D, D) Jacobians J_t evaluated at prev[t-1]."""
        return np.stack(
            [self.jacobian(t, prev[t - 1]) for t in range(1, len(prev) + 1)]
        )


@dataclass(frozen=True)
class Residual:
    """Temporal differences r_t = s_t - f_t(s_{t-1}), stored as a T x D array."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_f64(self.values))
        self.values.setflags(write=False)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values.ravel()))


def sequential_rollout(model: DynamicsModel, s0, T: int) -> Trajectory:
    """Evaluate the model step by step; the ground-truth oracle for all solvers.

    If a step overflows, the trajectory is filled with NaN from the first
    offending index onward and comes back flagged non-finite.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    s0 = _as_f64(s0).reshape(-1)
    if not np.all(np.isfinite(s0)):
        raise ValueError("s0 must be finite")
    D = s0.shape[0]
    states = np.empty((T, D), dtype=np.float64)
    s = s0
    with np.errstate(all="ignore"):
        for t in range(1, T + 1):
            s = _as_f64(model.step(t, s))
            states[t - 1] = s
            if not np.all(np.isfinite(s)):
                states[t - 1 :] = np.nan
                break
    return Trajectory(s0=s0, states=states)


def residual(model: DynamicsModel, traj: Trajectory) -> Residual:
    """r_t = s_t - f_t(s_{t-1}) with s_0 read from the trajectory.

    Applies ``step`` per time index, the same path ``sequential_rollout``
    takes, so a rolled-out trajectory has a bitwise-zero residual.  (The
    solvers use the batched hooks instead; they only need tolerance-level
    agreement.)
    """
    if traj.D != model.dim():
        raise ValueError("trajectory dimension does not match model")
    prev = traj.prev_states()
    with np.errstate(all="ignore"):
        f = np.stack([model.step(t, prev[t - 1]) for t in range(1, traj.T + 1)])
        return Residual(values=traj.states - f)


def merit(res: Residual) -> float:
    """0.5 * sum of squared residual entries; zero iff the residual is zero."""
    v = res.values.ravel()
    with np.errstate(all="ignore"):
        return float(0.5 * np.dot(v, v))


def merit_gradient(model: DynamicsModel, traj: Trajectory) -> np.ndarray:
    """Gradient of the merit function, assembled block-wise as J^T r.

    The residual Jacobian is block bidiagonal (identity diagonal, -J_{t+1}
    subdiagonal), so grad_t = r_t - J_{t+1}^T r_{t+1} with grad_T = r_T.  The
    TD x TD matrix is never materialized.
    """
    res = residual(model, traj)
    r = res.values
    with np.errstate(all="ignore"):
        jacs = model.jacobian_all(traj.prev_states())
        grad = r.copy()
        # J_{t+1} is jacs[t] (0-based); it acts on r_{t+1} = r[t].
        grad[:-1] -= np.einsum("tij,ti->tj", jacs[1:], r[1:])
    return grad


# CSV round-trip uses 17 significant digits so float64 survives exactly.

def save_trajectory_csv(traj: Trajectory, path) -> None:
    """Write `t,x0,...,x{D-1}` rows with row 0 carrying s0 at t=0."""
    D = traj.D
    header = "t," + ",".join(f"x{i}" for i in range(D))
    rows = np.hstack(
        [
            np.arange(traj.T + 1, dtype=np.float64)[:, None],
            np.vstack([traj.s0[None, :], traj.states]),
        ]
    )
    fmt = ["%d"] + ["%.17g"] * D
    np.savetxt(path, rows, fmt=fmt, delimiter=",", header=header, comments="")


def load_trajectory_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 2:
        raise ValueError("trajectory CSV needs at least rows for t=0 and t=1")
    return Trajectory(s0=data[0, 1:], states=data[1:, 1:])
