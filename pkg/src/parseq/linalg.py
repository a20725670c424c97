"""Small dense matrix kernels used by the conditioning diagnostics.

Matrices are plain 2-D float64 ndarrays (row-major).  The routines here are
deliberately self-contained: ``spectral_norm`` (power iteration) and
``svd_extremes`` (one-sided Jacobi) serve as independent oracles for the
bound checks in :mod:`parseq.analysis`, so they do not defer to LAPACK.
The side cap on ``svd_extremes`` keeps the dense-oracle runtime at seconds
scale.
"""

from __future__ import annotations

import numpy as np

__all__ = ["matmul", "spectral_norm", "svd_extremes", "SpectralNormError"]

SVD_SIDE_CAP = 512


class SpectralNormError(RuntimeError):
    """Power iteration failed to converge; carries the best estimate."""

    def __init__(self, message: str, best_estimate: float):
        super().__init__(message)
        self.best_estimate = best_estimate


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    return A


def matmul(A, B) -> np.ndarray:
    """Standard matrix product."""
    A, B = _as_matrix(A), _as_matrix(B)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")
    return A @ B


def _power_iteration(B: np.ndarray, v: np.ndarray, tol: float, max_iter: int):
    """Iterate v <- Bv / |Bv| and return (sigma^2 estimate, converged)."""
    est = 0.0
    for _ in range(max_iter):
        w = B @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0, True
        v = w / nw
        new_est = float(v @ (B @ v))
        if abs(new_est - est) <= tol * max(new_est, 1e-300):
            return new_est, True
        est = new_est
    return est, False


def spectral_norm(A, tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Largest singular value via power iteration on A^T A.

    Starts from the normalized all-ones vector, then performs one seeded
    random restart; the larger Rayleigh estimate wins.  Power iteration can
    only undershoot, so taking the max guards against a start vector that is
    (numerically) orthogonal to the top singular subspace.
    """
    A = _as_matrix(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix must be finite")
    n = A.shape[1]
    B = A.T @ A
    if not np.any(B):
        return 0.0
    v0 = np.ones(n) / np.sqrt(n)
    est1, ok1 = _power_iteration(B, v0, tol, max_iter)
    rng = np.random.default_rng(0)
    v1 = rng.standard_normal(n)
    v1 /= np.linalg.norm(v1)
    est2, ok2 = _power_iteration(B, v1, tol, max_iter)
    best = max(est1, est2)
    if not (ok1 or ok2):
        raise SpectralNormError(
            f"power iteration did not reach tol={tol} in {max_iter} iterations",
            best_estimate=float(np.sqrt(max(best, 0.0))),
        )
    return float(np.sqrt(max(best, 0.0)))


def svd_extremes(A) -> tuple[float, float]:
    """Extreme singular values of a square matrix via one-sided Jacobi.

    Rotations are applied to column pairs until all pairwise column
    correlations fall below machine-level tolerance; the singular values are
    then the column norms.  Absolute accuracy is ~1e-10 * sigma_max, which is
    what the Theorem-1 sandwich checks assume of their oracle.
    """
    A = _as_matrix(A)
    n, m = A.shape
    if n != m:
        raise ValueError("svd_extremes expects a square matrix")
    if n > SVD_SIDE_CAP:
        raise ValueError(
            f"side {n} exceeds the oracle cap {SVD_SIDE_CAP}; "
            "use the analysis-module bounds instead"
        )
    U = A.copy()
    eps = 1e-15
    for _ in range(60):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ui, uj = U[:, i], U[:, j]
                alpha = float(ui @ ui)
                beta = float(uj @ uj)
                gamma = float(ui @ uj)
                if abs(gamma) <= eps * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                new_i = c * ui - s * uj  # ui/uj are views: build both columns
                new_j = s * ui + c * uj  # before writing either back
                U[:, i] = new_i
                U[:, j] = new_j
        if not rotated:
            break
    sigmas = np.linalg.norm(U, axis=0)
    return float(sigmas.max()), float(sigmas.min())
