import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parseq.scan import (
    AffinePair,
    MultiplyCounter,
    affine_scan,
    affine_scan_diag,
    combine,
    identity_pair,
)


def random_elements(rng, T, D, scale=0.8):
    As = scale * rng.standard_normal((T, D, D))
    bs = rng.standard_normal((T, D))
    return As, bs


def bounded_random_elements(rng, T, D):
    """Random elements with mixed expanding/contracting steps whose products
    stay bounded; the 1e-12 mode-equivalence contract assumes bounded inputs."""
    As = rng.standard_normal((T, D, D))
    norms = np.linalg.norm(As, ord=2, axis=(1, 2))
    As *= (rng.uniform(0.3, 1.05, T) / norms)[:, None, None]
    bs = rng.standard_normal((T, D))
    return As, bs


class TestCombine:
    def test_identity_is_bitwise_neutral(self, rng):
        e = AffinePair(A=rng.standard_normal((3, 3)), b=rng.standard_normal(3))
        ident = identity_pair(3)
        for out in (combine(ident, e), combine(e, ident)):
            np.testing.assert_array_equal(out.A, e.A)
            np.testing.assert_array_equal(out.b, e.b)

    def test_scalar_composition(self):
        # applying (2,1) then (3,1): 3(2x+1)+1 = 6x+4
        out = combine(AffinePair(A=[[2.0]], b=[1.0]), AffinePair(A=[[3.0]], b=[1.0]))
        assert out.A[0, 0] == 6.0
        assert out.b[0] == 4.0

    def test_associativity(self, rng):
        for _ in range(20):
            es = [
                AffinePair(A=rng.uniform(-1, 1, (3, 3)), b=rng.uniform(-1, 1, 3))
                for _ in range(3)
            ]
            left = combine(combine(es[0], es[1]), es[2])
            right = combine(es[0], combine(es[1], es[2]))
            assert np.abs(left.A - right.A).max() <= 1e-12
            assert np.abs(left.b - right.b).max() <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            combine(identity_pair(2), identity_pair(3))


class TestAffineScanSequential:
    def test_memoryless_when_A_zero(self, rng):
        T, D = 9, 3
        bs = rng.standard_normal((T, D))
        out = affine_scan((np.zeros((T, D, D)), bs))
        np.testing.assert_array_equal(out, bs)

    def test_scalar_example(self):
        # (A,b) = (2,1),(3,1) with x0 = 0: x1 = 1, x2 = 3*1+1 = 4
        As = np.array([[[2.0]], [[3.0]]])
        bs = np.array([[1.0], [1.0]])
        np.testing.assert_array_equal(affine_scan((As, bs))[:, 0], [1.0, 4.0])

    def test_accepts_pair_sequence(self, rng):
        pairs = [
            AffinePair(A=rng.standard_normal((2, 2)), b=rng.standard_normal(2))
            for _ in range(5)
        ]
        out = affine_scan(pairs)
        x = np.zeros(2)
        for t, e in enumerate(pairs):
            x = e.A @ x + e.b
            np.testing.assert_array_equal(out[t], x)


class TestModeEquivalence:
    @pytest.mark.parametrize("T", [1, 2, 3, 17, 100, 1023, 4096])
    def test_parallel_matches_sequential(self, rng, T):
        As, bs = bounded_random_elements(rng, T, 5)
        seq = affine_scan((As, bs), mode="sequential")
        for chunks in (1, 2, 7, 64):
            par = affine_scan((As, bs), mode="parallel", chunks=chunks)
            scale = 1.0 + np.abs(seq).max()
            assert np.abs(par - seq).max() <= 1e-12 * scale

    def test_T_smaller_than_chunk_count(self, rng):
        As, bs = random_elements(rng, 3, 2)
        seq = affine_scan((As, bs), mode="sequential")
        par = affine_scan((As, bs), mode="parallel", chunks=16)
        assert np.abs(par - seq).max() <= 1e-12 * (1.0 + np.abs(seq).max())

    @settings(max_examples=30, deadline=None)
    @given(
        T=st.integers(min_value=1, max_value=400),
        D=st.integers(min_value=1, max_value=4),
        chunks=st.integers(min_value=1, max_value=32),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_property_parallel_equals_sequential(self, T, D, chunks, seed):
        rng = np.random.default_rng(seed)
        As, bs = bounded_random_elements(rng, T, D)
        seq = affine_scan((As, bs), mode="sequential")
        par = affine_scan((As, bs), mode="parallel", chunks=chunks)
        assert np.abs(par - seq).max() <= 1e-12 * (1.0 + np.abs(seq).max())

    def test_overflow_propagates_nonfinite(self, rng):
        As, bs = random_elements(rng, 64, 2)
        As *= 1e200
        for mode in ("sequential", "parallel"):
            out = affine_scan((As, bs), mode=mode)
            assert not np.all(np.isfinite(out))


class TestWorkBound:
    @pytest.mark.parametrize("T,D,chunks", [
        (2, 1, 2), (10, 2, 5), (100, 3, 8), (317, 5, 4), (954, 2, 17),
        (1023, 7, 8), (4096, 3, 64), (33, 4, 64),
    ])
    def test_parallel_within_twice_sequential(self, rng, T, D, chunks):
        As, bs = random_elements(rng, T, D)
        c_seq, c_par = MultiplyCounter(), MultiplyCounter()
        affine_scan((As, bs), mode="sequential", counter=c_seq)
        affine_scan((As, bs), mode="parallel", chunks=chunks, counter=c_par)
        assert c_seq.events == T
        assert c_par.events <= 2 * c_seq.events


class TestDiagonalScan:
    def test_matches_dense_on_diagonal_systems(self, rng):
        T, D = 37, 4
        diag = rng.uniform(-0.9, 0.9, (T, D))
        bs = rng.standard_normal((T, D))
        As = np.zeros((T, D, D))
        idx = np.arange(D)
        As[:, idx, idx] = diag
        dense = affine_scan((As, bs), mode="sequential")
        for mode in ("sequential", "parallel"):
            out = affine_scan_diag(diag, bs, mode=mode)
            assert np.abs(out - dense).max() <= 1e-12 * (1.0 + np.abs(dense).max())

    def test_parallel_matches_sequential(self, rng):
        T, D = 501, 3
        diag = rng.uniform(-1.1, 1.1, (T, D))
        bs = rng.standard_normal((T, D))
        seq = affine_scan_diag(diag, bs, mode="sequential")
        par = affine_scan_diag(diag, bs, mode="parallel", chunks=9)
        assert np.abs(par - seq).max() <= 1e-12 * (1.0 + np.abs(seq).max())

    def test_work_bound(self, rng):
        T, D = 600, 5
        diag = rng.uniform(-0.9, 0.9, (T, D))
        bs = rng.standard_normal((T, D))
        c_seq, c_par = MultiplyCounter(), MultiplyCounter()
        affine_scan_diag(diag, bs, mode="sequential", counter=c_seq)
        affine_scan_diag(diag, bs, mode="parallel", chunks=12, counter=c_par)
        assert c_par.events <= 2 * c_seq.events


class TestConcurrency:
    def test_two_scans_in_flight(self, rng):
        from concurrent.futures import ThreadPoolExecutor

        As, bs = random_elements(rng, 800, 4)
        expected = affine_scan((As, bs), mode="sequential")
        with ThreadPoolExecutor(max_workers=4) as pool:
            futures = [
                pool.submit(affine_scan, (As, bs), "parallel", 8) for _ in range(4)
            ]
            for f in futures:
                out = f.result()
                assert np.abs(out - expected).max() <= 1e-12 * (1 + np.abs(expected).max())
