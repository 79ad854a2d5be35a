import numpy as np
import pytest

from abft_guard import checksum
from abft_guard.checksum import (
    clear_weight_checksum_cache,
    column_checksum,
    checksum_dot,
    comparison_tolerance,
    global_abft_check,
    offline_weight_checksum,
    output_summation,
    row_checksum,
    run_protected_pipeline,
)
from abft_guard.errors import ExactOverflowError, ShapeMismatchError
from abft_guard.shapes import BINARY16, BINARY32, EXACT_INT

from .oracles import naive_gemm, sum_entries

A = np.array([[1, 2], [3, 4]])
B = np.array([[5, 6], [7, 8]])


class TestChecksumVectors:
    def test_column_checksum(self):
        assert column_checksum(A).tolist() == [4, 6]

    def test_column_checksum_of_row_is_identity(self):
        row = np.array([[3, 1, 4, 1, 5]])
        assert column_checksum(row).tolist() == [3, 1, 4, 1, 5]

    def test_column_checksum_zeros(self):
        assert column_checksum(np.zeros((3, 5), dtype=np.int64)).tolist() == [0] * 5

    def test_row_checksum(self):
        assert row_checksum(A).tolist() == [3, 7]

    def test_row_checksum_of_column_is_identity(self):
        col = np.array([[2], [7], [1]])
        assert row_checksum(col).tolist() == [2, 7, 1]

    def test_row_checksum_identity_matrix(self):
        assert row_checksum(np.eye(4, dtype=np.int64)).tolist() == [1, 1, 1, 1]


class TestChecksumDot:
    def test_toy_value(self):
        # [4,6].[3,7] = 54 = sum of entries of A @ A, confirmed by brute force
        assert checksum_dot(np.array([4, 6]), np.array([3, 7])) == 54
        assert sum_entries(naive_gemm(A, A)) == 54

    def test_zero_vectors(self):
        assert checksum_dot(np.zeros(3, dtype=np.int64), np.zeros(3, dtype=np.int64)) == 0

    def test_singleton(self):
        assert checksum_dot(np.array([1]), np.array([9])) == 9

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            checksum_dot(np.array([1, 2]), np.array([1, 2, 3]))


class TestOutputSummation:
    def test_product_sum(self):
        c = naive_gemm(A, B)
        assert c.tolist() == [[19, 22], [43, 50]]
        assert output_summation(c) == 134

    def test_zeros(self):
        assert output_summation(np.zeros((4, 4), dtype=np.int64)) == 0

    def test_single_cell(self):
        assert output_summation(np.array([[42]])) == 42


class TestGlobalCheck:
    def test_fault_free(self):
        assert global_abft_check(A, B, naive_gemm(A, B)).detected is False

    def test_single_fault(self):
        c = naive_gemm(A, B)
        c[1, 0] += 1
        assert global_abft_check(A, B, c).detected is True

    def test_canceling_pair_is_missed(self):
        # two deltas that cancel fall outside the single-fault model
        c = naive_gemm(A, B)
        c[0, 0] += 1
        c[1, 1] -= 1
        assert global_abft_check(A, B, c).detected is False

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            global_abft_check(A, B, np.zeros((3, 3), dtype=np.int64))

    def test_verdict_invariant(self):
        c = naive_gemm(A, B)
        c[0, 1] += 3
        verdict = global_abft_check(A, B, c)
        assert verdict.detected == (abs(verdict.lhs - verdict.rhs) > verdict.tolerance_used)


class TestExactOverflow:
    def test_column_checksum_overflow(self):
        huge = np.full((4, 4), 2**61, dtype=np.int64)
        with pytest.raises(ExactOverflowError):
            column_checksum(huge)

    def test_output_summation_overflow(self):
        huge = np.full((8, 8), 2**60, dtype=np.int64)
        with pytest.raises(ExactOverflowError):
            output_summation(huge)


class TestChecksumLinearity:
    def test_linearity_random_matrices(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            m, n, k = (int(x) for x in rng.integers(1, 33, size=3))
            a = rng.integers(-50, 51, size=(m, k), dtype=np.int64)
            b = rng.integers(-50, 51, size=(k, n), dtype=np.int64)
            lhs = checksum_dot(column_checksum(a), row_checksum(b))
            assert lhs == sum_entries(naive_gemm(a, b))

    def test_single_fault_always_flips(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            m, n, k = (int(x) for x in rng.integers(1, 17, size=3))
            a = rng.integers(-9, 10, size=(m, k), dtype=np.int64)
            b = rng.integers(-9, 10, size=(k, n), dtype=np.int64)
            c = naive_gemm(a, b)
            i, j = int(rng.integers(m)), int(rng.integers(n))
            delta = 0
            while delta == 0:
                delta = int(rng.integers(-100, 101))
            c[i, j] += delta
            assert global_abft_check(a, b, c).detected is True

    def test_one_sided_identity(self):
        # A @ rowck(B) equals the row sums of A @ B elementwise
        rng = np.random.default_rng(13)
        for _ in range(50):
            m, n, k = (int(x) for x in rng.integers(1, 25, size=3))
            a = rng.integers(-20, 21, size=(m, k), dtype=np.int64)
            b = rng.integers(-20, 21, size=(k, n), dtype=np.int64)
            lhs = checksum.accumulate_matmul(a, row_checksum(b).reshape(-1, 1)).ravel()
            rows = naive_gemm(a, b).sum(axis=1)
            assert lhs.tolist() == rows.tolist()


class TestOfflineWeightChecksum:
    def setup_method(self):
        clear_weight_checksum_cache()

    def test_cache_returns_identical_object(self):
        b = np.array([[1, 2], [3, 4]])
        first = offline_weight_checksum(b)
        assert offline_weight_checksum(b) is first

    def test_matches_row_checksum(self):
        b = np.arange(12).reshape(3, 4)
        assert offline_weight_checksum(b).tolist() == row_checksum(b).tolist()

    def test_zeros(self):
        b = np.zeros((3, 2), dtype=np.int64)
        assert offline_weight_checksum(b).tolist() == [0, 0, 0]


class TestTolerance:
    def test_exact_mode_is_zero(self):
        assert comparison_tolerance(EXACT_INT, 1024, 1e9, 1e9) == 0.0

    def test_scales_linearly_in_k(self):
        one = comparison_tolerance(BINARY16, 1, 10.0, 10.0)
        many = comparison_tolerance(BINARY16, 64, 10.0, 10.0)
        assert many == pytest.approx(64 * one)

    def test_floor_at_unit_magnitude(self):
        assert comparison_tolerance(BINARY32, 8, 0.0, 0.0) == pytest.approx(2.0**-23 * 8)


class TestProtectedPipeline:
    def setup_method(self):
        clear_weight_checksum_cache()

    def _chain(self, rng, depth, width=6):
        a0 = rng.integers(-5, 6, size=(4, width), dtype=np.int64)
        dims = [width] + [int(rng.integers(2, 9)) for _ in range(depth)]
        weights = [
            rng.integers(-5, 6, size=(dims[i], dims[i + 1]), dtype=np.int64)
            for i in range(depth)
        ]
        return a0, weights

    def test_fault_free_chain(self):
        rng = np.random.default_rng(21)
        a0, weights = self._chain(rng, depth=2)
        verdicts = run_protected_pipeline(a0, weights)
        assert len(verdicts) == 2
        assert not any(v.detected for v in verdicts)

    def test_fault_in_second_layer_only(self):
        rng = np.random.default_rng(22)
        a0, weights = self._chain(rng, depth=2)
        verdicts = run_protected_pipeline(a0, weights, faults={1: [(0, 0, 7)]})
        assert verdicts[0].detected is False
        assert verdicts[1].detected is True

    def test_relu_changing_values_keeps_verdicts_clean(self):
        # brute-force re-derivation: checks compare pre-activation sums while
        # the next layer consumes post-activation values
        rng = np.random.default_rng(23)
        a0, weights = self._chain(rng, depth=3)
        c0 = naive_gemm(a0, weights[0])
        assert (c0 < 0).any(), "chain must exercise ReLU zeroing"
        verdicts = run_protected_pipeline(a0, weights)
        assert not any(v.detected for v in verdicts)
        # layer 2's expected check value from first principles
        a1 = np.maximum(c0, 0)
        assert verdicts[1].rhs == sum_entries(naive_gemm(a1, weights[1]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            run_protected_pipeline(np.ones((2, 3), dtype=np.int64), [np.ones((4, 2), dtype=np.int64)])

    def test_binary16_chains_have_no_false_positives(self):
        rng = np.random.default_rng(24)
        for _ in range(200):
            depth = int(rng.integers(1, 5))
            a0 = rng.uniform(-0.5, 0.5, size=(4, 8)).astype(np.float16)
            dims = [8] + [int(rng.integers(2, 13)) for _ in range(depth)]
            weights = [
                rng.uniform(-0.5, 0.5, size=(dims[i], dims[i + 1])).astype(np.float16)
                for i in range(depth)
            ]
            verdicts = run_protected_pipeline(a0, weights, dtype=BINARY16)
            assert not any(v.detected for v in verdicts)

    def test_binary16_detects_large_delta(self):
        rng = np.random.default_rng(25)
        a0 = rng.uniform(-0.5, 0.5, size=(4, 8)).astype(np.float16)
        weights = [rng.uniform(-0.5, 0.5, size=(8, 8)).astype(np.float16)]
        clean = run_protected_pipeline(a0, weights, dtype=BINARY16)[0]
        delta = 20 * clean.tolerance_used + 1.0
        faulty = run_protected_pipeline(a0, weights, dtype=BINARY16, faults={0: [(1, 2, delta)]})[0]
        assert faulty.detected is True
