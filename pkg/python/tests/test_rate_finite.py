"""Tests for the pair rate functional of finite rational models."""

import math

import numpy as np
import pytest

from mpbridge.empirical import generalized_spatial
from mpbridge.exceptions import Infeasible, ValidationError
from mpbridge.rate_finite import (
    RateOptions,
    RateReport,
    pair_rate_dual,
    pair_rate_primal,
    rate_parallel_case,
    rate_stochastic_case,
    spatial_rate,
    tilted_perron,
    typical_pair_measure,
)
from mpbridge.rational import RationalModel, build_enlarged, parallel_model

SYMMETRIC = np.array([[0.4, 0.1], [0.1, 0.4]])


@pytest.fixture
def model():
    return RationalModel.from_lists(
        [[[1.0, 2.0], [0.5, 1.0]], [[0.3, 1.0], [1.0, 2.0]]],
        x=[1.0, 2.0],
        y=[1.0, 0.5],
    )


@pytest.fixture
def scalar():
    return RationalModel.from_lists([[[1.0]], [[1.0]]])


def conditional_entropy_rate(nu2):
    """Σ ν² log(ν²(a,a') / (ν¹(a)/2)) for the uniform binary measure."""
    nu1 = nu2.sum(axis=1)
    charged = nu2 > 0
    ratio = nu2 / (nu1[:, None] / 2)
    return float(np.sum(nu2[charged] * np.log(ratio[charged])))


class TestTypicalMeasure:
    """Test that the rate vanishes at the typical pair law."""

    def test_typical_measure_is_stationary_probability(self, model):
        nu = typical_pair_measure(model)
        assert nu.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(nu.sum(axis=0), nu.sum(axis=1), atol=1e-12)

    def test_dual_zero_at_typical(self, model):
        report = pair_rate_dual(model, typical_pair_measure(model))
        assert report.value == pytest.approx(0.0, abs=1e-8)
        assert report.converged

    def test_primal_zero_at_typical(self, model):
        report = pair_rate_primal(model, typical_pair_measure(model))
        assert report.value == pytest.approx(0.0, abs=1e-8)

    def test_uniform_typical_is_product(self, scalar):
        np.testing.assert_allclose(typical_pair_measure(scalar), np.full((2, 2), 0.25))


class TestSolvers:
    """Test the primal and dual solvers against closed forms and each other."""

    def test_uniform_model_is_conditional_entropy(self, scalar):
        expected = conditional_entropy_rate(SYMMETRIC)
        assert pair_rate_dual(scalar, SYMMETRIC).value == pytest.approx(expected, abs=1e-7)
        assert pair_rate_primal(scalar, SYMMETRIC).value == pytest.approx(expected, abs=1e-7)
        assert rate_stochastic_case(SYMMETRIC, 2) == pytest.approx(expected, abs=1e-12)

    def test_primal_and_dual_agree(self, model):
        nu = np.array([[0.3, 0.2], [0.2, 0.3]])
        primal = pair_rate_primal(model, nu)
        dual = pair_rate_dual(model, nu)
        assert primal.value == pytest.approx(dual.value, abs=1e-6)
        assert primal.value >= -1e-9
        assert abs(dual.gap) < 1e-6

    def test_dual_tilt_is_stochastic(self, model):
        report = pair_rate_dual(model, np.array([[0.3, 0.2], [0.2, 0.3]]))
        assert report.minimizer is not None
        np.testing.assert_allclose(report.minimizer.sum(axis=1), 1.0, atol=1e-10)

    def test_primal_minimizer_matches_marginal(self, model):
        nu = np.array([[0.3, 0.2], [0.2, 0.3]])
        report = pair_rate_primal(model, nu)
        C2 = report.minimizer.reshape(2, 2, 2, 2)
        np.testing.assert_allclose(C2.sum(axis=(1, 3)), nu, atol=1e-12)
        assert report.constraint_residual < 1e-8

    def test_parallel_case(self):
        m = [1.0, 3.0]
        kernels = [[[0.5, 0.5], [0.2, 0.8]], [[0.9, 0.1], [0.4, 0.6]]]
        model = parallel_model(m, kernels, [1.0, 2.0])
        nu = np.array([[0.3, 0.2], [0.2, 0.3]])
        expected = rate_parallel_case(m, nu)
        assert pair_rate_dual(model, nu).value == pytest.approx(expected, abs=1e-6)

    def test_zero_entry_handled_by_primal(self, scalar):
        """Test a pair law that never shows 11, whose optimal tilt vanishes there."""
        nu = np.array([[0.5, 0.25], [0.25, 0.0]])
        report = pair_rate_primal(scalar, nu)
        assert report.value == pytest.approx(conditional_entropy_rate(nu), abs=1e-6)

    def test_tilted_perron_at_unit_tilt(self, model):
        lam = build_enlarged(model).lam
        assert tilted_perron(model, np.ones((2, 2))).k == pytest.approx(lam, rel=1e-10)

    def test_tilted_perron_rejects_zero_tilt(self, model):
        with pytest.raises(ValidationError):
            tilted_perron(model, np.array([[1.0, 0.0], [1.0, 1.0]]))


class TestInfeasible:
    """Test that infeasible pair laws give an infinite rate."""

    def test_non_stationary(self, model):
        nu = np.array([[0.5, 0.3], [0.1, 0.1]])
        report = pair_rate_dual(model, nu)
        assert report.infinite
        assert not report.feasible
        assert "stationary" in report.message

    def test_not_probability(self, model):
        assert pair_rate_primal(model, np.full((2, 2), 0.5)).value == math.inf

    def test_vanishing_block(self):
        model = RationalModel.from_lists([[[1.0]], [[0.0]]])
        nu = np.array([[0.5, 0.25], [0.25, 0.0]])
        assert pair_rate_dual(model, nu).value == math.inf

    def test_raise_infeasible(self, model):
        with pytest.raises(Infeasible):
            pair_rate_primal(
                model, np.array([[0.5, 0.3], [0.1, 0.1]]), RateOptions(raise_infeasible=True)
            )

    def test_wrong_shape(self, model):
        with pytest.raises(ValidationError):
            pair_rate_dual(model, np.full((3, 3), 1 / 9))


class TestSpecialCases:
    """Test the closed-form rates and the spatial Riemann sum."""

    def test_stochastic_case_order_one(self):
        assert rate_stochastic_case([0.5, 0.5], 2) == pytest.approx(0.0)
        assert rate_stochastic_case([1.0, 0.0], 2) == pytest.approx(math.log(2))

    def test_stochastic_case_not_stationary(self):
        assert rate_stochastic_case([[0.5, 0.3], [0.1, 0.1]], 2) == math.inf

    def test_parallel_case_zero_at_product(self):
        assert rate_parallel_case([1.0, 3.0], [[1 / 16, 3 / 16], [3 / 16, 9 / 16]]) == (
            pytest.approx(0.0, abs=1e-12)
        )

    def test_spatial_rate_of_constant_profile(self, scalar):
        bins = np.stack([SYMMETRIC, np.full((2, 2), 0.25)])
        expected = 0.5 * conditional_entropy_rate(SYMMETRIC)
        assert spatial_rate(scalar, bins, workers=2) == pytest.approx(expected, abs=1e-7)

    def test_spatial_rate_infinite_bin(self, scalar):
        bins = np.stack([SYMMETRIC, np.array([[0.5, 0.3], [0.1, 0.1]])])
        assert spatial_rate(scalar, bins) == math.inf

    def test_spatial_rate_from_word(self, scalar):
        """Test that a periodic word's generalized measure is rescaled per bin."""
        measure = generalized_spatial("00011" * 3, 2, 3)
        nu = np.array([[0.4, 0.2], [0.2, 0.2]])
        assert spatial_rate(scalar, measure) == pytest.approx(
            conditional_entropy_rate(nu), abs=1e-6
        )

    def test_spatial_rate_needs_order_two(self, scalar):
        with pytest.raises(ValidationError):
            spatial_rate(scalar, generalized_spatial("0101", 1, 2))

    def test_report_record(self):
        report = RateReport(value=0.5, minimizer=np.eye(2), extra={"solver": "dual"})
        record = report.to_record()
        assert record["value"] == 0.5
        assert record["minimizer"] == [[1.0, 0.0], [0.0, 1.0]]
        assert record["solver"] == "dual"
        assert not report.infinite


def random_positive_model(rng, alphabet_size=2, dim=3):
    matrices = rng.uniform(0.1, 2.0, size=(alphabet_size, dim, dim))
    return RationalModel(matrices, rng.uniform(0.5, 2.0, dim), rng.uniform(0.5, 2.0, dim))


def random_symmetric_pair_law(rng, alphabet_size=2):
    weights = rng.uniform(size=(alphabet_size, alphabet_size))
    weights = weights + weights.T
    return weights / weights.sum()


class TestRandomModels:
    """Test the solvers on seeded random positive models."""

    def test_primal_and_dual_agree_on_random_models(self):
        """Test strongly correlated models, where undamped scaling oscillates."""
        rng = np.random.default_rng(1)
        for _ in range(20):
            model = random_positive_model(rng)
            nu = random_symmetric_pair_law(rng)
            primal = pair_rate_primal(model, nu)
            dual = pair_rate_dual(model, nu)
            assert primal.converged
            assert primal.value == pytest.approx(dual.value, abs=1e-4)
            assert primal.constraint_residual < 1e-8

    def test_rate_invariant_under_scaling(self):
        rng = np.random.default_rng(7)
        model = random_positive_model(rng)
        nu = random_symmetric_pair_law(rng)
        value = pair_rate_dual(model, nu).value
        for factor in (0.25, 3.0, 40.0):
            scaled = model.scaled(factor)
            assert pair_rate_dual(scaled, nu).value == pytest.approx(value, abs=1e-8)
            assert pair_rate_primal(scaled, nu).value == pytest.approx(value, abs=1e-6)
