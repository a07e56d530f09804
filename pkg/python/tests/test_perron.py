"""Tests for Perron-Frobenius data, Doob transforms and the tridiagonal family."""

import logging
import math

import numpy as np
import pytest

from mpbridge.exceptions import (
    InconsistentEigendata,
    NoConvergence,
    NotPrimitive,
    ValidationError,
)
from mpbridge.perron import (
    PerronData,
    StochasticMatrix,
    TridiagonalSpec,
    check_primitive,
    doob_transform,
    log_return_weight_even,
    perron_dense,
    perron_finite,
    perron_left,
    perron_tridiagonal_infinite,
    return_weight_even,
    stationary_distribution,
)

GOLDEN = (1 + math.sqrt(5)) / 2

INTEGER_SPECS = [TridiagonalSpec(2.0, 1.0, 1.0), TridiagonalSpec(1.0, 1.0, 1.0)]
TRUNCATION_SPECS = [
    TridiagonalSpec(2.0, 1.0, 1.0),
    TridiagonalSpec(1.0, 4.0, 1.0),
    TridiagonalSpec(1.5, 2.0, 0.5),
]


def random_primitive(rng, dim):
    """Positive-diagonal matrix with a few zeroed off-diagonal entries."""
    while True:
        M = rng.uniform(0.1, 2.0, size=(dim, dim))
        mask = rng.uniform(size=(dim, dim)) < 0.2
        np.fill_diagonal(mask, False)
        M[mask] = 0.0
        if check_primitive(M).primitive:
            return M


class TestCheckPrimitive:
    """Test the support-digraph classification."""

    def test_positive_matrix_is_primitive(self):
        report = check_primitive([[1.0, 2.0], [3.0, 4.0]])
        assert report.primitive
        assert report.period == 1

    def test_swap_has_period_two(self):
        """Test that the 2-cycle is irreducible but periodic."""
        report = check_primitive([[0.0, 1.0], [1.0, 0.0]])
        assert report.irreducible
        assert not report.aperiodic
        assert report.period == 2
        assert not report.primitive

    def test_triangular_is_reducible(self):
        report = check_primitive([[1.0, 1.0], [0.0, 1.0]])
        assert not report.irreducible

    def test_single_state_without_loop(self):
        assert not check_primitive([[0.0]]).primitive
        assert check_primitive([[2.0]]).primitive

    def test_rejects_negative_entries(self):
        with pytest.raises(ValidationError):
            check_primitive([[1.0, -1.0], [1.0, 1.0]])

    def test_rejects_non_square(self):
        with pytest.raises(ValidationError):
            check_primitive([[1.0, 1.0]])


class TestPerronFinite:
    """Test power iteration on small primitive matrices."""

    def test_symmetric_two_by_two(self):
        pd = perron_finite([[2.0, 1.0], [1.0, 2.0]])
        assert pd.value == pytest.approx(3.0, abs=1e-10)
        np.testing.assert_allclose(pd.right_vector, [1.0, 1.0], atol=1e-10)
        assert pd.residual <= 1e-10

    def test_golden_ratio(self):
        """Test the Fibonacci matrix, whose Perron value is the golden ratio."""
        pd = perron_finite([[1.0, 1.0], [1.0, 0.0]])
        assert pd.value == pytest.approx(GOLDEN, abs=1e-10)
        np.testing.assert_allclose(pd.right_vector, [1.0, 1.0 / GOLDEN], atol=1e-9)

    def test_vector_normalized_to_max_one(self):
        M = np.array([[1.0, 3.0, 0.5], [2.0, 0.1, 1.0], [0.3, 0.2, 4.0]])
        pd = perron_finite(M)
        assert np.max(pd.right_vector) == pytest.approx(1.0)
        np.testing.assert_allclose(M @ pd.right_vector, pd.value * pd.right_vector, atol=1e-9)

    def test_warm_start(self):
        M = [[1.0, 1.0], [1.0, 0.0]]
        pd = perron_finite(M, start=[1.0, 0.618])
        assert pd.value == pytest.approx(GOLDEN, abs=1e-10)

    def test_periodic_matrix_rejected(self):
        with pytest.raises(NotPrimitive):
            perron_finite([[0.0, 1.0], [1.0, 0.0]])

    def test_iteration_cap(self):
        with pytest.raises(NoConvergence) as excinfo:
            perron_finite([[1.0, 1.0], [1.0, 0.0]], max_iter=1)
        assert excinfo.value.iterations == 1
        assert excinfo.value.residual > 0

    def test_invalid_tolerance(self):
        with pytest.raises(ValidationError):
            perron_finite([[1.0]], tol=0.0)

    def test_tolerance_below_rounding_is_logged(self, caplog):
        with caplog.at_level(logging.DEBUG, logger="mpbridge.perron"):
            pd = perron_finite([[2.0, 1.0], [1.0, 2.0]], tol=1e-300)
        assert pd.value == pytest.approx(3.0)
        assert "below rounding level" in caplog.text

    def test_left_vector(self):
        M = np.array([[1.0, 2.0], [0.5, 1.0]])
        pd = perron_left(M)
        np.testing.assert_allclose(pd.right_vector @ M, pd.value * pd.right_vector, atol=1e-9)

    def test_dense_matches_power_iteration(self):
        M = np.array([[1.0, 3.0, 0.5], [2.0, 0.1, 1.0], [0.3, 0.2, 4.0]])
        dense, left = perron_dense(M)
        power = perron_finite(M)
        assert dense.value == pytest.approx(power.value, rel=1e-9)
        np.testing.assert_allclose(dense.right_vector, power.right_vector, atol=1e-8)
        np.testing.assert_allclose(left @ M, dense.value * left, atol=1e-9)


class TestDoobTransform:
    """Test the stochastic conjugation and its stationary law."""

    def test_rows_sum_to_one(self):
        M = np.array([[1.0, 3.0, 0.5], [2.0, 0.1, 1.0], [0.3, 0.2, 4.0]])
        S = doob_transform(M, perron_finite(M))
        np.testing.assert_allclose(S.entries.sum(axis=1), 1.0, atol=1e-12)
        assert S.dim == 3

    def test_wrong_eigendata_rejected(self):
        M = [[2.0, 1.0], [1.0, 2.0]]
        wrong = PerronData(2.0, np.array([1.0, 1.0]), 0.0)
        with pytest.raises(InconsistentEigendata):
            doob_transform(M, wrong)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InconsistentEigendata):
            doob_transform([[2.0, 1.0], [1.0, 2.0]], PerronData(3.0, np.ones(3), 0.0))

    def test_stationary_law(self):
        theta = stationary_distribution([[0.9, 0.1], [0.5, 0.5]])
        np.testing.assert_allclose(theta, [5 / 6, 1 / 6], atol=1e-12)

    def test_stochastic_matrix_validates_rows(self):
        with pytest.raises(ValidationError):
            StochasticMatrix(np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_powers_of_doob_transform(self):
        """Test S^k = λ^{-k} E^{-1} M^k E for k = 1..5."""
        rng = np.random.default_rng(3)
        for _ in range(10):
            M = random_primitive(rng, 4)
            pd = perron_finite(M)
            e = pd.right_vector
            S = doob_transform(M, pd).entries
            for k in range(1, 6):
                expected = np.linalg.matrix_power(M, k) * e[None, :] / (
                    pd.value**k * e[:, None]
                )
                np.testing.assert_allclose(
                    np.linalg.matrix_power(S, k), expected, rtol=0, atol=1e-10
                )


class TestTridiagonal:
    """Test the half-infinite constant tridiagonal family."""

    def test_perron_value(self):
        """Test λ = α + 2√(β₁β₂), which is 4 for the TASEP sum D + E."""
        spec = TridiagonalSpec(2.0, 1.0, 1.0)
        result = perron_tridiagonal_infinite(spec)
        assert result.value == pytest.approx(4.0)
        assert result.eigenvector_term(0) == pytest.approx(1.0)
        assert result.eigenvector_term(3) == pytest.approx(4.0)

    def test_eigenvector_of_asymmetric_family(self):
        spec = TridiagonalSpec(1.0, 4.0, 1.0)
        result = perron_tridiagonal_infinite(spec)
        assert result.value == pytest.approx(5.0)
        # (n+1)(1/4)^((n+1)/2)
        assert result.eigenvector_term(1) == pytest.approx(2 * 0.25)

    @pytest.mark.parametrize("spec", INTEGER_SPECS)
    def test_return_weight_is_exact_matrix_power(self, spec):
        """Test integer families, whose powers are exact in floating point."""
        A = spec.truncated(25)
        for n in range(11):
            expected = np.linalg.matrix_power(A, 2 * n)[0, 0]
            assert return_weight_even(n, spec) == expected

    def test_return_weight_matches_matrix_power(self):
        spec = TridiagonalSpec(1.5, 2.0, 0.5)
        A = spec.truncated(25)
        for n in range(11):
            expected = np.linalg.matrix_power(A, 2 * n)[0, 0]
            assert return_weight_even(n, spec) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("spec", TRUNCATION_SPECS)
    def test_truncated_eigensolve_approaches_perron_value(self, spec):
        dense, _ = perron_dense(spec.truncated(100))
        expected = perron_tridiagonal_infinite(spec).value
        assert dense.value == pytest.approx(expected, abs=1e-2)
        assert dense.value < expected

    def test_log_path_agrees_with_direct_sum(self):
        spec = TridiagonalSpec(2.0, 1.0, 1.0)
        n = 31
        A = spec.truncated(n + 2)
        expected = np.linalg.matrix_power(A, 2 * n)[0, 0]
        assert return_weight_even(n, spec) == pytest.approx(expected, rel=1e-9)
        assert log_return_weight_even(n, spec) == pytest.approx(math.log(expected), rel=1e-12)

    def test_return_weight_overflow(self):
        spec = TridiagonalSpec(10.0, 10.0, 10.0)
        assert return_weight_even(400, spec) == math.inf
        assert math.isfinite(log_return_weight_even(400, spec))

    def test_invalid_spec(self):
        with pytest.raises(ValidationError):
            TridiagonalSpec(1.0, 0.0, 1.0)
        with pytest.raises(ValidationError):
            return_weight_even(-1, TridiagonalSpec(1.0, 1.0, 1.0))
