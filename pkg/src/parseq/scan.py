"""Associative affine scan: evaluate x_t = A_t x_{t-1} + b_t in parallel.

Affine maps form a monoid under composition,

    combine((A1, b1), (A2, b2)) = (A2 A1, A2 b1 + b2),

with (I, 0) as the identity, so the linear time-varying recursion can be
evaluated by an associative scan instead of a T-step loop.  ``x_0 = 0`` is
fixed: the recursion computes trajectory *deltas* and the initial state is
given, so the delta at the origin is zero.

Two modes are provided.  ``sequential`` is the straight loop and serves as
the oracle.  ``parallel`` partitions the elements into C chunks, scans the
chunks concurrently (data-parallel, batched across chunks), combines the C
chunk summaries with a Blelloch-style up/down sweep, and finalizes each
chunk with its incoming prefix.  Outputs of the two modes agree to ~1e-12
relative (floating-point reassociation), never bitwise.

Work accounting: a ``MultiplyCounter`` records element-level multiply events
(one ``combine`` or one affine apply each).  The chunk count is clamped so
the parallel mode stays within 2x the events of the sequential recursion;
``_choose_chunks`` enforces this, starting from the requested worker count.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AffinePair",
    "identity_pair",
    "combine",
    "MultiplyCounter",
    "affine_scan",
    "affine_scan_diag",
    "stack_pairs",
]


@dataclass(frozen=True)
class AffinePair:
    """One scan element: the map x -> A x + b."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
            raise ValueError("AffinePair needs a square A matching b")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


def identity_pair(D: int) -> AffinePair:
    return AffinePair(A=np.eye(D), b=np.zeros(D))


def combine(e1: AffinePair, e2: AffinePair) -> AffinePair:
    """Compose two affine maps, e1 applied first, e2 second."""
    if e1.b.shape != e2.b.shape:
        raise ValueError("mismatched dimensions")
    return AffinePair(A=e2.A @ e1.A, b=e2.A @ e1.b + e2.b)


@dataclass
class MultiplyCounter:
    """Counts element-level multiply events: combines and affine applies."""

    combines: int = 0
    applies: int = 0

    @property
    def events(self) -> int:
        return self.combines + self.applies


def stack_pairs(elements) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a sequence of AffinePairs (or an (As, bs) tuple) to arrays."""
    if isinstance(elements, tuple) and len(elements) == 2:
        As = np.asarray(elements[0], dtype=np.float64)
        bs = np.asarray(elements[1], dtype=np.float64)
    else:
        As = np.stack([e.A for e in elements]).astype(np.float64)
        bs = np.stack([e.b for e in elements]).astype(np.float64)
    if As.shape[0] != bs.shape[0] or As.shape[0] < 1:
        raise ValueError("need T >= 1 elements of uniform dimension")
    return As, bs


# The dense and diagonal scans share one engine, parameterized by how an A
# factor composes with another A (mm) and how it acts on a vector (mv).
# Both callables broadcast over leading batch axes.

def _mm_dense(A2, A1):
    return np.matmul(A2, A1)


def _mv_dense(A, x):
    return np.matmul(A, x[..., None])[..., 0]


def _mm_diag(a2, a1):
    return a2 * a1


def _mv_diag(a, x):
    return a * x


def _choose_chunks(T: int, requested: int) -> int:
    """Largest chunk count <= requested whose event total stays within 2T."""
    C = max(1, min(requested, T))
    # Beyond ~sqrt(T/3) the bound cannot hold; skip straight down to it.
    C = min(C, max(1, math.isqrt(max(T // 3, 1)) + 1))
    while C > 1:
        K = -(-T // C)
        Tp = C * K
        c_pad = 1 << (C - 1).bit_length()
        events = (Tp - C) + 2 * (c_pad - 1) + (Tp - K)
        if events <= 2 * T:
            return C
        C -= 1
    return 1


def _sequential(As, bs, mm, mv, counter):
    T = As.shape[0]
    out = np.empty_like(bs)
    x = np.zeros_like(bs[0])
    for t in range(T):
        x = mv(As[t], x) + bs[t]
        out[t] = x
    if counter is not None:
        counter.applies += T
    return out


def _blelloch_exclusive(sA, sb, mm, mv, counter):
    """Exclusive scan over chunk summaries; returns per-chunk prefix pairs.

    The summary array is padded to a power of two with identity elements.
    Padding combines execute and are counted: the chunk-choice rule already
    budgets for them.
    """
    C = sA.shape[0]
    P = 1 << (C - 1).bit_length()
    eyeA = np.zeros_like(sA[0])
    if eyeA.ndim == 2:
        np.fill_diagonal(eyeA, 1.0)
    else:
        eyeA[...] = 1.0
    A = np.stack([sA[i] if i < C else eyeA for i in range(P)])
    b = np.stack([sb[i] if i < C else np.zeros_like(sb[0]) for i in range(P)])
    ncomb = 0
    d = 1
    while d < P:  # up-sweep: right node absorbs left subtree
        for k in range(0, P, 2 * d):
            lo, hi = k + d - 1, k + 2 * d - 1
            b[hi] = mv(A[hi], b[lo]) + b[hi]
            A[hi] = mm(A[hi], A[lo])
            ncomb += 1
        d *= 2
    A[P - 1] = eyeA
    b[P - 1] = np.zeros_like(b[P - 1])
    d = P // 2
    while d >= 1:  # down-sweep: left gets parent, right gets parent o left
        for k in range(0, P, 2 * d):
            lo, hi = k + d - 1, k + 2 * d - 1
            tA, tb = A[lo].copy(), b[lo].copy()
            A[lo], b[lo] = A[hi], b[hi]
            b[hi] = mv(tA, b[hi]) + tb
            A[hi] = mm(tA, A[hi])
            ncomb += 1
        d //= 2
    if counter is not None:
        counter.combines += ncomb
    return A[:C], b[:C]


def _parallel(As, bs, mm, mv, counter, chunks):
    T = As.shape[0]
    if chunks is None:
        chunks = os.cpu_count() or 1
    C = _choose_chunks(T, chunks)
    if C <= 1:
        # Single chunk: the prefix pass alone yields every output (x_0 = 0).
        PA = np.empty_like(As)
        Pb = np.empty_like(bs)
        PA[0], Pb[0] = As[0], bs[0]
        for j in range(1, T):
            PA[j] = mm(As[j], PA[j - 1])
            Pb[j] = mv(As[j], Pb[j - 1]) + bs[j]
        if counter is not None:
            counter.combines += T - 1
        return Pb

    K = -(-T // C)
    Tp = C * K
    pad = Tp - T
    if pad:
        eyeA = np.zeros_like(As[0])
        if eyeA.ndim == 2:
            np.fill_diagonal(eyeA, 1.0)
        else:
            eyeA[...] = 1.0
        As = np.concatenate([As, np.broadcast_to(eyeA, (pad,) + eyeA.shape)])
        bs = np.concatenate([bs, np.zeros((pad,) + bs.shape[1:])])
    cAs = As.reshape((C, K) + As.shape[1:])
    cbs = bs.reshape((C, K) + bs.shape[1:])

    # Per-chunk inclusive prefix pairs, batched across chunks.
    PA = np.empty_like(cAs)
    Pb = np.empty_like(cbs)
    PA[:, 0], Pb[:, 0] = cAs[:, 0], cbs[:, 0]
    for j in range(1, K):
        PA[:, j] = mm(cAs[:, j], PA[:, j - 1])
        Pb[:, j] = mv(cAs[:, j], Pb[:, j - 1]) + cbs[:, j]
    if counter is not None:
        counter.combines += C * (K - 1)

    _, Eb = _blelloch_exclusive(PA[:, -1], Pb[:, -1], mm, mv, counter)
    # Incoming value of chunk c is its exclusive prefix applied to x_0 = 0,
    # i.e. just the b part: no multiply needed.

    out = np.empty_like(cbs)
    out[0] = Pb[0]
    out[1:] = mv(PA[1:], Eb[1:, None]) + Pb[1:]
    if counter is not None:
        counter.applies += (C - 1) * K
    return out.reshape((Tp,) + bs.shape[1:])[:T]


def affine_scan(
    elements,
    mode: str = "sequential",
    chunks: int | None = None,
    counter: MultiplyCounter | None = None,
) -> np.ndarray:
    """Evaluate x_t = A_t x_{t-1} + b_t with x_0 = 0; returns (T, D).

    ``elements`` is a sequence of AffinePairs or a pre-stacked ``(As, bs)``
    tuple with shapes (T, D, D) and (T, D).  Overflow is propagated: outputs
    simply come back non-finite for the solver's NaN policy to handle.
    """
    As, bs = stack_pairs(elements)
    if As.ndim != 3 or As.shape[1] != As.shape[2] or As.shape[1] != bs.shape[1]:
        raise ValueError("expected As of shape (T, D, D) and bs of shape (T, D)")
    with np.errstate(all="ignore"):
        if mode == "sequential":
            return _sequential(As, bs, _mm_dense, _mv_dense, counter)
        if mode == "parallel":
            return _parallel(As, bs, _mm_dense, _mv_dense, counter, chunks)
    raise ValueError(f"unknown mode {mode!r}")


def affine_scan_diag(
    a_diag: np.ndarray,
    bs: np.ndarray,
    mode: str = "sequential",
    chunks: int | None = None,
    counter: MultiplyCounter | None = None,
) -> np.ndarray:
    """Same recursion with diagonal A_t, stored as (T, D) and O(D) per combine."""
    a_diag = np.asarray(a_diag, dtype=np.float64)
    bs = np.asarray(bs, dtype=np.float64)
    if a_diag.shape != bs.shape or a_diag.ndim != 2:
        raise ValueError("diagonal scan expects matching (T, D) arrays")
    with np.errstate(all="ignore"):
        if mode == "sequential":
            return _sequential(a_diag, bs, _mm_diag, _mv_diag, counter)
        if mode == "parallel":
            return _parallel(a_diag, bs, _mm_diag, _mv_diag, counter, chunks)
    raise ValueError(f"unknown mode {mode!r}")
