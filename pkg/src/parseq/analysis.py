"""Predictability and conditioning diagnostics.

Links the dynamics of a state space model to the geometry of its merit
function: the largest Lyapunov exponent (LLE) of the Jacobian sequence
controls the smallest singular value of the block-bidiagonal residual
Jacobian, which in turn sets the PL constant of the merit function, the
radius of the Gauss-Newton quadratic basin, and the expected number of
optimization steps.

Dense TD x TD checks (``build_full_jacobian``, ``neumann_inverse_norm_check``
and the sandwich measurements) are oracle-scale only: they exist to verify
the bounds on small systems, not to run at experiment scale, where the
closed-form bounds take over.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DynamicsModel, Trajectory, residual, sequential_rollout
from .linalg import SpectralNormError, spectral_norm, svd_extremes

__all__ = [
    "ConditioningReport",
    "estimate_lle",
    "pl_bounds",
    "tilde_mu",
    "build_full_jacobian",
    "neumann_inverse_norm_check",
    "estimate_lipschitz",
    "basin_radius",
    "predict_steps",
    "measure_burn_in",
    "fit_convergence_rate",
    "conditioning_report",
]

ORACLE_SIZE_CAP = 512


@dataclass(frozen=True)
class ConditioningReport:
    """Everything the parallelizability verdict is based on."""

    lle: float
    a: float
    b: float
    sqrt_mu_lower: float
    sqrt_mu_upper: float
    tilde_mu: float
    lipschitz: float
    basin_radius: float
    predicted_steps: float

    def parallelizable(self) -> bool:
        return self.lle < 0.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _stack_jacobians(jacobians) -> np.ndarray:
    J = np.asarray(jacobians, dtype=np.float64)
    if J.ndim == 1:
        J = J[:, None, None]
    if J.ndim != 3 or J.shape[1] != J.shape[2]:
        raise ValueError("expected a (T, D, D) stack of Jacobians")
    return J


def estimate_lle(
    jacobians,
    n_vectors: int = 3,
    seed: int = 0,
    burn_in: bool = True,
    return_per_vector: bool = False,
):
    """Largest Lyapunov exponent of a Jacobian sequence.

    Propagates a unit vector through the sequence, recording the log of the
    per-step stretch and renormalizing each step so long products never
    overflow; the estimate is the average log-stretch.  This is repeated for
    ``n_vectors`` seeded random unit starts (uniform on the sphere) and the
    estimates are averaged.

    By default the first min(100, T // 10) steps are excluded from the
    average to reduce transient bias; pass ``burn_in=False`` for the plain
    average over all T steps.  A vector annihilated by a singular Jacobian
    yields the -inf sentinel (with a warning).
    """
    J = _stack_jacobians(jacobians)
    T, D = J.shape[0], J.shape[1]
    if T < 10:
        raise ValueError("need at least 10 Jacobians for a meaningful estimate")
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((D, n_vectors))
    U /= np.linalg.norm(U, axis=0)
    logs = np.empty((T, n_vectors))
    annihilated = False
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for t in range(T):
            U = J[t] @ U
            nrm = np.linalg.norm(U, axis=0)
            dead = nrm == 0.0
            if dead.any():
                annihilated = True
                # keep propagation alive; the -inf log already decides the estimate
                U[:, dead] = 0.0
                U[0, dead] = 1.0
                logs[t] = np.log(nrm)
                nrm = np.where(dead, 1.0, nrm)
            else:
                logs[t] = np.log(nrm)
            U /= nrm
    if annihilated:
        warnings.warn("Jacobian annihilated a test vector; LLE is -inf", RuntimeWarning)
    skip = min(100, T // 10) if burn_in else 0
    per_vector = logs[skip:].mean(axis=0)
    est = float(per_vector.mean())
    if return_per_vector:
        return est, per_vector.tolist()
    return est


def _log_expm1(x: float) -> float:
    """log(e^x - 1) for x > 0 without overflow."""
    if x > 30.0:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))


def pl_bounds(lam: float, T: int, a: float = 1.0, b: float = 1.0) -> tuple[float, float]:
    """Bounds on sqrt(mu), the root PL constant of the merit function.

        (1/a) (e^lam - 1)/(e^(lam T) - 1)  <=  sqrt(mu)  <=  (1/b) e^(-lam (T-1))

    with the L'Hopital limit branch (1/(a T), 1/b) at lam = 0.  Evaluation is
    log-domain so lam*T beyond float range degrades to 0 or inf gracefully.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if a < 1.0 or not (0.0 < b <= 1.0):
        raise ValueError("need a >= 1 and 0 < b <= 1")
    if abs(lam) < 1e-12:
        return 1.0 / (a * T), 1.0 / b
    if lam == -math.inf:
        return 1.0 / a, 1.0 / b if T == 1 else math.inf
    with np.errstate(over="ignore"):
        if lam > 0:
            lower = math.exp(_log_expm1(lam) - _log_expm1(lam * T)) / a
        else:
            lower = (math.expm1(lam) / math.expm1(lam * T)) / a
        try:
            upper = math.exp(-lam * (T - 1)) / b
        except OverflowError:
            upper = math.inf
    return lower, upper


def tilde_mu(lam: float, T: int) -> float:
    """Square of the sqrt(mu) lower bound with a = 1; (1/T)^2 at lam = 0."""
    lower, _ = pl_bounds(lam, T, a=1.0, b=1.0)
    return lower * lower


def build_full_jacobian(model: DynamicsModel, traj: Trajectory) -> np.ndarray:
    """Dense TD x TD residual Jacobian: identity diagonal, -J_t subdiagonal.

    Oracle scale only (T*D capped); experiment-scale code must use the scan
    and the closed-form bounds instead.
    """
    T, D = traj.T, traj.D
    if T * D > ORACLE_SIZE_CAP:
        raise ValueError(f"T*D = {T * D} exceeds the oracle cap {ORACLE_SIZE_CAP}")
    jacs = model.jacobian_all(traj.prev_states())
    M = np.eye(T * D)
    for t in range(2, T + 1):
        r0, c0 = (t - 1) * D, (t - 2) * D
        M[r0 : r0 + D, c0 : c0 + D] = -jacs[t - 1]
    return M


def measure_burn_in(jacobians) -> tuple[float, float, float]:
    """Exact finite-sequence (lambda, a, b) for a Jacobian window family.

    lambda is the log of the full product norm divided by its length; a and b
    are the tightest constants with  b e^(lam k) <= ||J_{t+k-1}...J_t|| <=
    a e^(lam k)  over every window of the given sequence (k = 0 included, so
    a >= 1 >= b always).  Oracle scale: all O(T^2) window products are formed.
    """
    J = _stack_jacobians(jacobians)
    n = J.shape[0]
    if n < 1:
        raise ValueError("need at least one Jacobian")
    norms = {}  # (start, length) -> spectral norm; Jacobi is certified at D x D
    for start in range(n):
        P = np.eye(J.shape[1])
        for k in range(1, n - start + 1):
            P = J[start + k - 1] @ P
            norms[(start, k)] = svd_extremes(P)[0]
    full = norms[(0, n)]
    if full == 0.0:
        raise ValueError("singular Jacobian product; lambda is -inf")
    lam = math.log(full) / n
    a, b = 1.0, 1.0
    for (start, k), nrm in norms.items():
        scale = math.exp(lam * k)
        a = max(a, nrm / scale)
        b = min(b, nrm / scale)
    return lam, a, b


def neumann_inverse_norm_check(model: DynamicsModel, traj: Trajectory) -> tuple[float, float]:
    """Spectral norm of the inverse residual Jacobian and its geometric bound.

    The inverse is a finite Neumann sum of powers of the nilpotent
    subdiagonal part, so with lam = max per-step log stretch and a measured
    overshoot constant, ||J^-1||_2 <= a (1 - e^(lam T)) / (1 - e^lam).  The
    norm is computed by explicit inversion (the unit-triangular structure
    makes J always invertible) and must not exceed the bound.
    """
    T = traj.T
    J = build_full_jacobian(model, traj)
    try:
        norm = spectral_norm(np.linalg.inv(J))
    except SpectralNormError as err:
        # near-degenerate spectrum: the certified digits are plenty here
        norm = err.best_estimate
    jacs = model.jacobian_all(traj.prev_states())[1:]  # blocks J_2 .. J_T
    if len(jacs) == 0:
        return norm, 1.0
    step_norms = [svd_extremes(Jt)[0] for Jt in jacs]
    lam = math.log(max(step_norms)) if max(step_norms) > 0 else -math.inf
    rho = math.exp(lam)
    # overshoot measured against the per-step rate; k=0 windows force a >= 1
    a = 1.0
    for start in range(len(jacs)):
        P = np.eye(jacs.shape[1])
        for k in range(1, len(jacs) - start + 1):
            P = jacs[start + k - 1] @ P
            if rho > 0:
                a = max(a, svd_extremes(P)[0] / rho**k)
    bound = a * T if rho == 1.0 else a * (1.0 - rho**T) / (1.0 - rho)
    assert norm <= bound * (1.0 + 1e-9), "Neumann bound violated"
    return norm, bound


def estimate_lipschitz(
    model: DynamicsModel,
    center: Trajectory,
    n_samples: int = 1000,
    radius: float = 1.0,
    seed: int = 0,
) -> float:
    """Sampled lower estimate of the Jacobian Lipschitz constant.

    Draws point pairs inside a ball around states of the center trajectory
    and returns the largest ||J_t(s) - J_t(s')|| / ||s - s'||.  This can only
    undershoot the true constant; callers that need a safe value inflate it.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    T, D = center.T, center.D
    best = 0.0
    for _ in range(n_samples):
        t = int(rng.integers(1, T + 1))
        c = center.states[t - 1]
        u = rng.standard_normal((2, D))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts = c + radius * rng.uniform(0, 1, (2, 1)) ** (1.0 / D) * u
        ds = float(np.linalg.norm(pts[0] - pts[1]))
        if ds == 0.0:
            continue
        dJ = model.jacobian(t, pts[0]) - model.jacobian(t, pts[1])
        best = max(best, svd_extremes(dJ)[0] / ds)
    return best


def basin_radius(mu: float, L: float) -> float:
    """Radius mu/L of the Gauss-Newton quadratic-convergence basin.

    L = 0 (linear dynamics) gives an infinite basin.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if L < 0:
        raise ValueError("L must be nonnegative")
    if L == 0.0:
        return math.inf
    return mu / L


def predict_steps(beta: float, chi: float, L: float, mu: float, r0_norm: float) -> float:
    """Two-phase step-count ansatz: linear approach to the basin, then done.

    Solving mu/L = chi * beta^k * ||r0|| for k gives
    k = log(chi L ||r0|| / mu) / log(1/beta), clamped at zero when the start
    already lies inside the basin.
    """
    if not (0.0 < beta < 1.0):
        raise ValueError("beta must lie in (0, 1)")
    if chi < 1.0 or L <= 0 or mu <= 0 or r0_norm <= 0:
        raise ValueError("chi >= 1 and positive L, mu, r0_norm required")
    arg = chi * L * r0_norm / mu
    if arg <= 1.0:
        return 0.0
    return math.log(arg) / math.log(1.0 / beta)


def fit_convergence_rate(merit_history) -> tuple[float, float]:
    """Fit (beta, chi) of the linear phase from a solver's merit history.

    Residual norms are sqrt(2 * merit); a least-squares line through their
    logs (excluding the final point, where quadratic convergence kicks in)
    gives beta from the slope and chi from the intercept.  Heuristic, meant
    for feeding ``predict_steps``.
    """
    r = np.sqrt(2.0 * np.asarray(merit_history, dtype=np.float64))
    r = r[r > 0]
    if len(r) < 3:
        return 0.5, 1.0
    ks = np.arange(len(r) - 1)
    slope, intercept = np.polyfit(ks, np.log(r[:-1]), 1)
    beta = float(np.clip(np.exp(slope), 1e-6, 1.0 - 1e-9))
    chi = float(max(1.0, np.exp(intercept) / r[0]))
    return beta, chi


def conditioning_report(
    model: DynamicsModel,
    s0,
    lipschitz_samples: int = 1000,
    lipschitz_radius: float = 1.0,
    seed: int = 0,
    beta: float = 0.5,
    chi: float = 1.0,
    r0_norm: float | None = None,
) -> ConditioningReport:
    """Assemble the predictability diagnosis for one system.

    At experiment scale the burn-in constants are assumed a = b = 1 (same
    convention the tilde-mu heatmaps use); the Lipschitz constant is the
    sampled estimate, reported raw.
    """
    s0 = np.asarray(s0, dtype=np.float64).reshape(-1)
    T = model.horizon()
    traj = sequential_rollout(model, s0, T)
    if not traj.finite:
        raise ValueError("rollout overflowed; cannot diagnose")
    jacs = model.jacobian_all(traj.prev_states())
    lam = estimate_lle(jacs, seed=seed)
    lower, upper = pl_bounds(lam, T)
    tmu = tilde_mu(lam, T)
    L = estimate_lipschitz(model, traj, n_samples=lipschitz_samples,
                           radius=lipschitz_radius, seed=seed)
    radius = basin_radius(tmu, L)
    if r0_norm is None:
        rng = np.random.default_rng(seed)
        init = Trajectory(s0=s0, states=rng.uniform(0, 1, (T, model.dim())))
        r0_norm = residual(model, init).norm()
    steps = predict_steps(beta, chi, L, tmu, r0_norm) if L > 0 and r0_norm > 0 else 0.0
    return ConditioningReport(
        lle=lam,
        a=1.0,
        b=1.0,
        sqrt_mu_lower=lower,
        sqrt_mu_upper=upper,
        tilde_mu=tmu,
        lipschitz=L,
        basin_radius=radius,
        predicted_steps=steps,
    )
