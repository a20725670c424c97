"""Benchmark dynamical systems, each with analytic Jacobians.

Stochastic systems freeze their noise at construction (a seeded pre-drawn
sequence), turning them into deterministic time-varying maps: the residual
the solvers minimize must be a deterministic function of the trajectory.
Every model overrides the batched ``step_all``/``jacobian_all`` hooks with
vectorized versions, which is what keeps long-horizon solves fast.
"""

from __future__ import annotations

import numpy as np

from .core import DynamicsModel, sequential_rollout

__all__ = [
    "MeanFieldRnn",
    "mean_field_rnn",
    "TwoWellLangevin",
    "two_well",
    "FlowSystem",
    "SubstitutionObserver",
    "SubstitutionGainObserver",
    "GainFeedbackObserver",
    "attractor_state",
    "flow_observer",
    "lorenz_observer",
    "ContractiveScalarRnn",
    "contractive_scalar_rnn",
    "LinearTimeVarying",
    "logistic_orbit",
    "henon_orbit",
    "benchmark_maps",
]


# ---------------------------------------------------------------------------
# Mean-field RNN: s_{t+1} = W tanh(s_t) + u_t

class MeanFieldRnn(DynamicsModel):
    """tanh RNN with Gaussian weights of variance g^2/D and no self-coupling.

    The gain g sweeps the system from predictable to chaotic; the LLE
    crosses zero near g ~ 1.2.  Inputs are a mild sinusoid (amplitude 0.1,
    one period over the horizon, identical across coordinates) so the
    dynamics stay g-dominated.
    """

    def __init__(self, D: int, g: float, T: int, seed: int, input_amplitude: float = 0.1):
        if D < 1 or g <= 0 or T < 1:
            raise ValueError("need D >= 1, g > 0, T >= 1")
        rng = np.random.default_rng(seed)
        W = rng.normal(0.0, g / np.sqrt(D), (D, D))
        np.fill_diagonal(W, 0.0)
        self.W = W
        self.g = float(g)
        self._T = int(T)
        ts = np.arange(1, T + 1, dtype=np.float64)
        self.inputs = input_amplitude * np.sin(2.0 * np.pi * ts / T)[:, None] * np.ones(D)
        self.W.setflags(write=False)
        self.inputs.setflags(write=False)

    def dim(self) -> int:
        return self.W.shape[0]

    def horizon(self) -> int:
        return self._T

    def step(self, t, s):
        return self.W @ np.tanh(s) + self.inputs[t - 1]

    def jacobian(self, t, s):
        return self.W * (1.0 - np.tanh(s) ** 2)[None, :]

    def step_all(self, prev):
        return np.tanh(prev) @ self.W.T + self.inputs[: len(prev)]

    def jacobian_all(self, prev):
        return self.W[None, :, :] * (1.0 - np.tanh(prev) ** 2)[:, None, :]


def mean_field_rnn(D: int, g: float, T: int, seed: int) -> MeanFieldRnn:
    return MeanFieldRnn(D=D, g=g, T=T, seed=seed)


# ---------------------------------------------------------------------------
# Langevin dynamics in a two-well potential

class TwoWellLangevin(DynamicsModel):
    """s_{t+1} = s_t - eps grad(phi)(s_t) + sqrt(2 eps) w_t.

    phi is the negative log density of an equal mixture of two isotropic
    Gaussians; the dynamics contract inside the wells and expand on the
    saddle between them, so predictability is an on-average property of the
    trajectory rather than of the state space.  The noise w_t is drawn once
    at construction.

    The default step size and per-well variances are the golden-config
    values, calibrated so the trajectory LLE lands near -0.015 while the
    saddle region stays genuinely expansive.
    """

    def __init__(
        self,
        eps: float = 0.05,
        T: int = 1000,
        seed: int = 0,
        D: int = 2,
        centers=((0.0, -1.4), (0.0, 1.6)),
        variances=(1.4, 1.1),
    ):
        if eps <= 0 or T < 1 or D < 1:
            raise ValueError("need eps > 0, T >= 1, D >= 1")
        self.eps = float(eps)
        self._T = int(T)
        self._D = int(D)
        mus = []
        for c in centers:
            c = np.asarray(c, dtype=np.float64)
            mu = np.zeros(D)
            mu[-len(c):] = c[-min(len(c), D):]
            mus.append(mu)
        self.mus = np.stack(mus)  # (2, D)
        self.vars = np.asarray(variances, dtype=np.float64)  # (2,)
        rng = np.random.default_rng(seed)
        self.noise = np.sqrt(2.0 * eps) * rng.standard_normal((T, D))
        for arr in (self.mus, self.vars, self.noise):
            arr.setflags(write=False)

    def dim(self) -> int:
        return self._D

    def horizon(self) -> int:
        return self._T

    def _responsibilities(self, S: np.ndarray):
        """Mixture responsibilities and per-component scaled offsets, batched."""
        diffs = S[:, None, :] - self.mus[None, :, :]  # (N, 2, D)
        sq = np.sum(diffs**2, axis=2)  # (N, 2)
        logw = -0.5 * sq / self.vars - 0.5 * self._D * np.log(2.0 * np.pi * self.vars)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=1, keepdims=True)
        gk = diffs / self.vars[None, :, None]  # (N, 2, D): Sigma_k^-1 (s - mu_k)
        return w, gk

    def grad_phi(self, S: np.ndarray) -> np.ndarray:
        S = np.atleast_2d(S)
        w, gk = self._responsibilities(S)
        return np.einsum("nk,nkd->nd", w, gk)

    def hess_phi(self, S: np.ndarray) -> np.ndarray:
        S = np.atleast_2d(S)
        w, gk = self._responsibilities(S)
        gbar = np.einsum("nk,nkd->nd", w, gk)
        eye = np.eye(self._D)
        inv_term = np.einsum("nk,k->n", w, 1.0 / self.vars)[:, None, None] * eye
        outer = np.einsum("nk,nkd,nke->nde", w, gk, gk)
        return inv_term - outer + np.einsum("nd,ne->nde", gbar, gbar)

    def step(self, t, s):
        return self.step_all(np.atleast_2d(s), t0=t)[0]

    def jacobian(self, t, s):
        return self.jacobian_all(np.atleast_2d(s))[0]

    def step_all(self, prev, t0: int = 1):
        prev = np.atleast_2d(prev)
        drift = prev - self.eps * self.grad_phi(prev)
        return drift + self.noise[t0 - 1 : t0 - 1 + len(prev)]

    def jacobian_all(self, prev):
        return np.eye(self._D)[None] - self.eps * self.hess_phi(np.atleast_2d(prev))


def two_well(eps: float = 0.05, T: int = 1000, seed: int = 0, D: int = 2, **kwargs) -> TwoWellLangevin:
    return TwoWellLangevin(eps=eps, T=T, seed=seed, D=D, **kwargs)


# ---------------------------------------------------------------------------
# Chaotic flows (RK4) and their observers

LORENZ = dict(sigma=10.0, rho=28.0, beta=8.0 / 3.0)
ROSSLER = dict(a=0.2, b=0.2, c=5.7)


def _lorenz_field(S):
    x, y, z = S[..., 0], S[..., 1], S[..., 2]
    return np.stack(
        [LORENZ["sigma"] * (y - x), x * (LORENZ["rho"] - z) - y, x * y - LORENZ["beta"] * z],
        axis=-1,
    )


def _lorenz_dfield(S):
    x, y, z = S[..., 0], S[..., 1], S[..., 2]
    J = np.zeros(S.shape[:-1] + (3, 3))
    J[..., 0, 0] = -LORENZ["sigma"]
    J[..., 0, 1] = LORENZ["sigma"]
    J[..., 1, 0] = LORENZ["rho"] - z
    J[..., 1, 1] = -1.0
    J[..., 1, 2] = -x
    J[..., 2, 0] = y
    J[..., 2, 1] = x
    J[..., 2, 2] = -LORENZ["beta"]
    return J


def _rossler_field(S):
    x, y, z = S[..., 0], S[..., 1], S[..., 2]
    return np.stack(
        [-y - z, x + ROSSLER["a"] * y, ROSSLER["b"] + z * (x - ROSSLER["c"])], axis=-1
    )


def _rossler_dfield(S):
    x, y, z = S[..., 0], S[..., 1], S[..., 2]
    J = np.zeros(S.shape[:-1] + (3, 3))
    J[..., 0, 1] = -1.0
    J[..., 0, 2] = -1.0
    J[..., 1, 0] = 1.0
    J[..., 1, 1] = ROSSLER["a"]
    J[..., 2, 0] = z
    J[..., 2, 2] = x - ROSSLER["c"]
    return J


_FLOWS = {
    "lorenz": (_lorenz_field, _lorenz_dfield),
    "rossler": (_rossler_field, _rossler_dfield),
}


def _rk4_step(field, S, dt):
    k1 = field(S)
    k2 = field(S + 0.5 * dt * k1)
    k3 = field(S + 0.5 * dt * k2)
    k4 = field(S + dt * k3)
    return S + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_jacobian(field, dfield, S, dt):
    """Jacobian of the RK4 map, chained through the four stages."""
    eye = np.eye(S.shape[-1])
    k1 = field(S)
    s2 = S + 0.5 * dt * k1
    k2 = field(s2)
    s3 = S + 0.5 * dt * k2
    k3 = field(s3)
    s4 = S + dt * k3
    D1 = dfield(S)
    D2 = np.matmul(dfield(s2), eye + 0.5 * dt * D1)
    D3 = np.matmul(dfield(s3), eye + 0.5 * dt * D2)
    D4 = np.matmul(dfield(s4), eye + dt * D3)
    return eye + dt / 6.0 * (D1 + 2.0 * D2 + 2.0 * D3 + D4)


class FlowSystem(DynamicsModel):
    """A chaotic flow discretized with fixed-step RK4."""

    def __init__(self, flow: str, dt: float, T: int, s0=None):
        if dt <= 0 or T < 1:
            raise ValueError("need dt > 0 and T >= 1")
        self.field, self.dfield = _FLOWS[flow]
        self.flow = flow
        self.dt = float(dt)
        self._T = int(T)
        self.default_s0 = None if s0 is None else np.asarray(s0, dtype=np.float64)

    def dim(self) -> int:
        return 3

    def horizon(self) -> int:
        return self._T

    def step(self, t, s):
        return _rk4_step(self.field, np.asarray(s, dtype=np.float64), self.dt)

    def jacobian(self, t, s):
        return _rk4_jacobian(self.field, self.dfield, np.asarray(s, dtype=np.float64), self.dt)

    def step_all(self, prev):
        return _rk4_step(self.field, np.asarray(prev, dtype=np.float64), self.dt)

    def jacobian_all(self, prev):
        return _rk4_jacobian(self.field, self.dfield, np.asarray(prev, dtype=np.float64), self.dt)


class SubstitutionObserver(DynamicsModel):
    """Observer that overwrites its measured coordinate with the measurement.

    Before each RK4 step the estimate's measured coordinate is replaced by
    the measured value, so the step integrates the flow from a state whose
    driven coordinate is exact (discrete Pecora-Carroll synchronization).
    A perfectly initialized observer reproduces the true rollout exactly;
    the Jacobian is the RK4 Jacobian at the substituted state with the
    measured column zeroed (that coordinate of the own state is never
    read).
    """

    def __init__(self, flow: str, dt: float, measurements: np.ndarray, s0=None,
                 measured_index: int = 0):
        self.field, self.dfield = _FLOWS[flow]
        self.flow = flow
        self.dt = float(dt)
        self.meas = np.asarray(measurements, dtype=np.float64)  # meas[t-1] drives step t
        self._T = len(self.meas)
        self.measured_index = int(measured_index)
        self.default_s0 = None if s0 is None else np.asarray(s0, dtype=np.float64)

    def dim(self) -> int:
        return 3

    def horizon(self) -> int:
        return self._T

    def _substitute(self, prev, t0):
        S = np.array(np.atleast_2d(prev), dtype=np.float64)
        S[:, self.measured_index] = self.meas[t0 - 1 : t0 - 1 + len(S)]
        return S

    def step(self, t, s):
        return _rk4_step(self.field, self._substitute(s, t)[0], self.dt)

    def jacobian(self, t, s):
        J = _rk4_jacobian(self.field, self.dfield, self._substitute(s, t)[0], self.dt)
        J[:, self.measured_index] = 0.0
        return J

    def step_all(self, prev):
        return _rk4_step(self.field, self._substitute(prev, 1), self.dt)

    def jacobian_all(self, prev):
        J = _rk4_jacobian(self.field, self.dfield, self._substitute(prev, 1), self.dt)
        J[:, :, self.measured_index] = 0.0
        return J


class SubstitutionGainObserver(DynamicsModel):
    """Substitution inside the vector field plus linear output injection.

    Every field evaluation reads the measured value in place of the
    estimate's measured coordinate, and the innovation K (y - s_hat_m) is
    added to all equations (measurement held over the RK4 step).  The field
    never reads the estimate's measured coordinate except through the
    innovation, so the observer is linear time-varying in its own state
    with Jacobian entries bounded by the attractor: Gauss-Newton scans stay
    in floating-point range from any iterate and converge in one step.

    This is the construction for flows whose response under plain
    substitution is unstable (Rossler: the y-equation has positive
    self-coupling) while plain injection leaves state-dependent Jacobian
    entries that overflow long scans at cold-start iterates.
    """

    def __init__(self, flow: str, dt: float, measurements: np.ndarray, gain,
                 s0=None, measured_index: int = 0):
        self.base_field, self.base_dfield = _FLOWS[flow]
        self.flow = flow
        self.dt = float(dt)
        self.meas = np.asarray(measurements, dtype=np.float64)
        self._T = len(self.meas)
        self.measured_index = int(measured_index)
        gvec = np.asarray(gain, dtype=np.float64).reshape(-1)
        if gvec.shape[0] == 1:
            scalar = gvec[0]
            gvec = np.zeros(3)
            gvec[self.measured_index] = scalar
        if gvec.shape[0] != 3:
            raise ValueError("gain must be a scalar or a length-3 vector")
        self.gain = gvec
        self.default_s0 = None if s0 is None else np.asarray(s0, dtype=np.float64)

    def dim(self) -> int:
        return 3

    def horizon(self) -> int:
        return self._T

    def _field(self, y):
        m, K = self.measured_index, self.gain

        def field(S):
            sub = np.array(S, dtype=np.float64)
            sub[..., m] = y
            F = self.base_field(sub)
            return F + K * np.expand_dims(y - S[..., m], -1)

        return field

    def _dfield(self, y):
        m, K = self.measured_index, self.gain

        def dfield(S):
            sub = np.array(S, dtype=np.float64)
            sub[..., m] = y
            J = self.base_dfield(sub)
            J[..., :, m] = 0.0
            J[..., :, m] -= K
            return J

        return dfield

    def step(self, t, s):
        y = self.meas[t - 1]
        return _rk4_step(self._field(y), np.asarray(s, dtype=np.float64), self.dt)

    def jacobian(self, t, s):
        y = self.meas[t - 1]
        return _rk4_jacobian(self._field(y), self._dfield(y),
                             np.asarray(s, dtype=np.float64), self.dt)

    def step_all(self, prev):
        prev = np.atleast_2d(prev)
        y = self.meas[: len(prev)]
        return _rk4_step(self._field(y), prev, self.dt)

    def jacobian_all(self, prev):
        prev = np.atleast_2d(prev)
        y = self.meas[: len(prev)]
        return _rk4_jacobian(self._field(y), self._dfield(y), prev, self.dt)


class GainFeedbackObserver(DynamicsModel):
    """Observer with continuous output injection K (y - s_hat_m).

    The corrected vector field f(s) + K (y - s_m) is integrated with RK4,
    the measurement held over the step, so the effective stage Jacobian is
    Df - K e_m^T.  A scalar K injects into the measured equation only
    (K e_m); a length-3 vector K may spread the innovation across all
    equations.
    """

    def __init__(self, flow: str, dt: float, measurements: np.ndarray, gain=5.0,
                 s0=None, measured_index: int = 0):
        self.base_field, self.base_dfield = _FLOWS[flow]
        self.flow = flow
        self.dt = float(dt)
        self.measured_index = int(measured_index)
        gvec = np.asarray(gain, dtype=np.float64).reshape(-1)
        if gvec.shape[0] == 1:
            scalar = gvec[0]
            gvec = np.zeros(3)
            gvec[self.measured_index] = scalar
        if gvec.shape[0] != 3:
            raise ValueError("gain must be a scalar or a length-3 vector")
        self.gain = gvec
        self.meas = np.asarray(measurements, dtype=np.float64)
        self._T = len(self.meas)
        self.default_s0 = None if s0 is None else np.asarray(s0, dtype=np.float64)

    def dim(self) -> int:
        return 3

    def horizon(self) -> int:
        return self._T

    def _field(self, y):
        def field(S):
            F = self.base_field(S)
            F += self.gain * np.expand_dims(y - S[..., self.measured_index], -1)
            return F

        return field

    def _dfield(self):
        def dfield(S):
            J = self.base_dfield(S)
            J[..., :, self.measured_index] -= self.gain
            return J

        return dfield

    def step(self, t, s):
        return _rk4_step(self._field(self.meas[t - 1]), np.asarray(s, dtype=np.float64), self.dt)

    def jacobian(self, t, s):
        return _rk4_jacobian(
            self._field(self.meas[t - 1]), self._dfield(), np.asarray(s, dtype=np.float64), self.dt
        )

    def step_all(self, prev):
        prev = np.atleast_2d(prev)
        return _rk4_step(self._field(self.meas[: len(prev)]), prev, self.dt)

    def jacobian_all(self, prev):
        prev = np.atleast_2d(prev)
        return _rk4_jacobian(self._field(self.meas[: len(prev)]), self._dfield(), prev, self.dt)


def attractor_state(flow: str, dt: float, seed: int, transient: int = 2000) -> np.ndarray:
    """A seeded point on the flow's attractor (transient discarded)."""
    rng = np.random.default_rng(seed)
    s = np.array([1.0, 1.0, 1.05]) + 0.1 * rng.standard_normal(3)
    burn = FlowSystem(flow, dt, transient)
    return sequential_rollout(burn, s, transient).states[-1]


def flow_observer(
    flow: str,
    dt: float,
    T: int,
    seed: int,
    style: str = "substitution",
    gain: float = 5.0,
    measured_index: int = 0,
    transient: int = 2000,
):
    """Build a chaotic flow and an observer of it driven by one measured
    coordinate.

    The system starts from a seeded point on the attractor (a burn-in
    rollout discards the transient).  Its rollout supplies the measurement
    sequence; the observer's suggested initial state is the true one
    perturbed in its hidden coordinates.  Returns (system, observer), each
    carrying a ``default_s0``.

    Styles: plain ``substitution`` (the Lorenz default: its x-driven
    response is stable and the substituted observer is linear in its own
    state), pure output injection ``gain_feedback``, and
    ``substitution_gain`` (substitution inside the field plus injection,
    the Rossler choice: its x-driven response is unstable under plain
    substitution, while pure injection leaves state-dependent Jacobian
    entries that blow up long Gauss-Newton scans at cold-start iterates).
    """
    if style not in ("substitution", "gain_feedback", "substitution_gain"):
        raise ValueError(f"unknown observer style {style!r}")
    rng = np.random.default_rng(seed + 1)
    s0_sys = attractor_state(flow, dt, seed, transient)
    system = FlowSystem(flow, dt, T, s0=s0_sys)
    traj = sequential_rollout(system, s0_sys, T)
    m = int(measured_index)
    meas = np.concatenate([[s0_sys[m]], traj.states[:-1, m]])
    mask = np.ones(3)
    mask[m] = 0.0
    s0_obs = s0_sys + mask * rng.standard_normal(3)
    if style == "substitution":
        observer = SubstitutionObserver(flow, dt, meas, s0=s0_obs, measured_index=m)
    elif style == "substitution_gain":
        observer = SubstitutionGainObserver(
            flow, dt, meas, gain=gain, s0=s0_obs, measured_index=m
        )
    else:
        observer = GainFeedbackObserver(
            flow, dt, meas, gain=gain, s0=s0_obs, measured_index=m
        )
    return system, observer


def lorenz_observer(dt: float, T: int, seed: int, style: str = "substitution"):
    return flow_observer("lorenz", dt, T, seed, style=style)


# ---------------------------------------------------------------------------
# Contractive scalar RNN: w = tanh(b) keeps |J| < 1 for any finite b

class ContractiveScalarRnn(DynamicsModel):
    def __init__(self, b_param: float, inputs):
        self.w = float(np.tanh(b_param))
        self.inputs = np.asarray(inputs, dtype=np.float64).reshape(-1)
        self._T = len(self.inputs)

    def dim(self) -> int:
        return 1

    def horizon(self) -> int:
        return self._T

    def step(self, t, s):
        return np.tanh(self.w * np.asarray(s) + self.inputs[t - 1])

    def jacobian(self, t, s):
        pre = self.w * np.asarray(s).reshape(()) + self.inputs[t - 1]
        return np.array([[self.w * (1.0 - np.tanh(pre) ** 2)]])

    def step_all(self, prev):
        return np.tanh(self.w * prev + self.inputs[: len(prev), None])

    def jacobian_all(self, prev):
        pre = self.w * prev[:, 0] + self.inputs[: len(prev)]
        return (self.w * (1.0 - np.tanh(pre) ** 2))[:, None, None]


def contractive_scalar_rnn(b_param: float, inputs) -> ContractiveScalarRnn:
    return ContractiveScalarRnn(b_param, inputs)


# ---------------------------------------------------------------------------
# Linear time-varying dynamics (one-step DEER convergence fixture)

class LinearTimeVarying(DynamicsModel):
    """f_t(s) = A_t s + c_t with stacked coefficient arrays."""

    def __init__(self, A_seq, c_seq):
        self.A = np.asarray(A_seq, dtype=np.float64)
        self.c = np.asarray(c_seq, dtype=np.float64)
        if self.A.ndim != 3 or self.A.shape[:1] != self.c.shape[:1]:
            raise ValueError("A_seq must be (T, D, D) matching c_seq (T, D)")

    def dim(self) -> int:
        return self.A.shape[1]

    def horizon(self) -> int:
        return self.A.shape[0]

    def step(self, t, s):
        return self.A[t - 1] @ s + self.c[t - 1]

    def jacobian(self, t, s):
        return self.A[t - 1]

    def step_all(self, prev):
        return np.einsum("tij,tj->ti", self.A[: len(prev)], prev) + self.c[: len(prev)]

    def jacobian_all(self, prev):
        return self.A[: len(prev)].copy()


# ---------------------------------------------------------------------------
# Maps with known LLE, for validating the estimator

def logistic_orbit(r: float, x0: float, T: int):
    """Orbit and scalar Jacobians J_t = r (1 - 2 x_{t-1}) of the logistic map."""
    xs = np.empty(T + 1)
    xs[0] = x0
    for t in range(T):
        xs[t + 1] = r * xs[t] * (1.0 - xs[t])
    jacs = (r * (1.0 - 2.0 * xs[:-1]))[:, None, None]
    return xs, jacs


def henon_orbit(a: float, b: float, s0, T: int):
    """Orbit and 2x2 Jacobians of the Henon map (x, y) -> (1 - a x^2 + y, b x)."""
    states = np.empty((T + 1, 2))
    states[0] = np.asarray(s0, dtype=np.float64)
    for t in range(T):
        x, y = states[t]
        states[t + 1] = (1.0 - a * x * x + y, b * x)
    jacs = np.zeros((T, 2, 2))
    jacs[:, 0, 0] = -2.0 * a * states[:-1, 0]
    jacs[:, 0, 1] = 1.0
    jacs[:, 1, 0] = b
    return states, jacs


def benchmark_maps() -> dict:
    """Jacobian-sequence providers for LLE-estimator validation."""
    return {"logistic": logistic_orbit, "henon": henon_orbit}
