"""
Tests for the evasion pass, untargeted attacks and the optimal epsilon search.
"""

import numpy as np
import pytest

from evade_lite.domain.attack import (
    EPSILON_NOT_FOUND,
    attack_features,
    category_midpoint,
    distance,
    evade,
    l2_distance,
    move_toward_category,
    optimal_epsilon,
    untargeted_evade,
)
from evade_lite.domain.entities import ImpactCategory
from evade_lite.schemas import AttackConfig, EpsilonSearchConfig
from evade_lite.utils.exceptions import AttackError, ValidationError

from .conftest import ThresholdModel, make_table

L, M, H = ImpactCategory.L, ImpactCategory.M, ImpactCategory.H


class TestMoves:
    """Test cases for single-feature moves and distances."""

    def test_midpoints(self, thresholds):
        assert category_midpoint(L, thresholds) == pytest.approx(0.165)
        assert category_midpoint(M, thresholds) == pytest.approx(0.495)
        assert category_midpoint(H, thresholds) == pytest.approx(0.83)

    def test_move_is_bounded(self, thresholds):
        assert move_toward_category(0.2, H, 0.5, thresholds) == pytest.approx(0.7)
        assert move_toward_category(0.2, H, 0.1, thresholds) == pytest.approx(0.3)
        assert move_toward_category(0.9, L, 0.05, thresholds) == pytest.approx(0.85)

    def test_move_reaches_midpoint(self, thresholds):
        assert move_toward_category(0.6, H, 0.5, thresholds) == pytest.approx(0.83)

    def test_distances(self):
        assert distance([0.0, 0.5], [0.3, 0.1]) == pytest.approx(0.4)
        assert l2_distance([0.0, 0.0], [0.3, 0.4]) == pytest.approx(0.5)
        with pytest.raises(ValidationError):
            distance([0.0], [0.0, 1.0])


class TestAttackFeatures:
    """Test cases for the visiting order of features."""

    @pytest.fixture
    def ranked_table(self):
        table = make_table({(0, 1): [[H]] * 4, (1, 0): [[L]] * 4}, n_features=4)
        table.feature_ranking = {0: [0, 1, 2, 3], 1: [2, 0, 3, 1]}
        return table

    def test_schema_order(self, ranked_table):
        assert attack_features(ranked_table, 1, AttackConfig(), 4) == [0, 1, 2, 3]

    def test_allowed_features_keep_given_order(self, ranked_table):
        cfg = AttackConfig(allowed_features=[3, 1])
        assert attack_features(ranked_table, 1, cfg, 4) == [3, 1]

    def test_shap_rank_order(self, ranked_table):
        cfg = AttackConfig(feature_order="shap_rank")
        assert attack_features(ranked_table, 1, cfg, 4) == [2, 0, 3, 1]

    def test_top_k(self, ranked_table):
        cfg = AttackConfig(feature_order="shap_rank", top_k=2)
        assert attack_features(ranked_table, 1, cfg, 4) == [2, 0]

    def test_allowed_out_of_range(self, ranked_table):
        with pytest.raises(ValidationError):
            attack_features(ranked_table, 1, AttackConfig(allowed_features=[7]), 4)


class TestEvade:
    """Test cases for one evasion pass."""

    def test_success_within_budget(self, threshold_model, raise_first_table):
        out = evade(threshold_model, raise_first_table, [0.2, 0.4], 0, 1, AttackConfig(d_max=0.5))
        assert out.success
        assert out.adversarial_row.tolist() == pytest.approx([0.7, 0.4])
        assert out.distance == pytest.approx(0.5)
        assert out.l2_distance == pytest.approx(0.5)
        assert out.queries == 2
        assert out.modified_features == [0]
        assert (out.c_from, out.c_to, out.epsilon) == (0, 1, 0.5)

    def test_failure_returns_last_working_row(self, threshold_model, raise_first_table):
        out = evade(threshold_model, raise_first_table, [0.2, 0.4], 0, 1, AttackConfig(d_max=0.2))
        assert not out.success
        assert out.adversarial_row.tolist() == pytest.approx([0.4, 0.4])
        assert out.distance == pytest.approx(0.2)

    def test_already_target_class(self, threshold_model, raise_first_table):
        """One query, no modification."""
        out = evade(threshold_model, raise_first_table, [0.8, 0.1], 0, 1)
        assert out.success
        assert out.distance == 0.0
        assert out.queries == 1
        assert out.adversarial_row.tolist() == [0.8, 0.1]

    def test_feature_already_in_target_category_is_skipped(self, raise_first_table):
        model = ThresholdModel(n_features=2, feature=0, cut=0.95)
        out = evade(model, raise_first_table, [0.9, 0.1], 0, 1)
        assert not out.success
        assert out.queries == 1
        assert out.adversarial_row.tolist() == [0.9, 0.1]

    def test_allowed_features_restrict_moves(self, threshold_model, raise_first_table):
        cfg = AttackConfig(allowed_features=[1])
        out = evade(threshold_model, raise_first_table, [0.2, 0.4], 0, 1, cfg)
        assert not out.success
        assert out.modified_features == []

    def test_input_is_not_mutated(self, threshold_model, raise_first_table):
        x = np.array([0.2, 0.4])
        evade(threshold_model, raise_first_table, x, 0, 1)
        assert x.tolist() == [0.2, 0.4]

    def test_same_class(self, threshold_model, raise_first_table):
        with pytest.raises(ValidationError):
            evade(threshold_model, raise_first_table, [0.2, 0.4], 1, 1)

    def test_missing_pair(self, threshold_model):
        table = make_table({(1, 0): [[L], []]}, n_features=2)
        with pytest.raises(AttackError):
            evade(threshold_model, table, [0.2, 0.4], 0, 1)

    @pytest.mark.parametrize("x", [[1.2, 0.0], [0.5], [-0.1, 0.5]])
    def test_invalid_rows(self, threshold_model, raise_first_table, x):
        with pytest.raises(ValidationError):
            evade(threshold_model, raise_first_table, x, 0, 1)

    @pytest.mark.slow
    def test_bound_soundness(self, iris_logistic, iris_table):
        """Ten thousand random passes respect the budget and [0, 1]; every success is confirmed."""
        rng = np.random.default_rng(11)
        for _ in range(10_000):
            x = rng.random(4)
            c_from = iris_logistic.predict_one(x)
            c_to = int(rng.choice([c for c in range(3) if c != c_from]))
            eps = float(rng.uniform(0.01, 1.0))
            out = evade(iris_logistic, iris_table, x, c_from, c_to, AttackConfig(d_max=eps))
            row = out.adversarial_row
            assert np.all(np.abs(row - x) <= eps + 1e-12)
            assert row.min() >= 0.0 and row.max() <= 1.0
            assert out.distance <= eps + 1e-12
            if out.success:
                assert iris_logistic.predict_one(row) == c_to


class TestUntargeted:
    """Test cases for untargeted attacks."""

    def test_two_classes_match_targeted(self, threshold_model, raise_first_table):
        targeted = evade(threshold_model, raise_first_table, [0.2, 0.4], 0, 1)
        untargeted = untargeted_evade(threshold_model, raise_first_table, [0.2, 0.4], 0)
        assert untargeted.success == targeted.success
        assert untargeted.c_to == 1
        assert untargeted.queries == targeted.queries

    def test_queries_sum_over_targets(self, iris_logistic, iris_table, iris_test):
        x, c_from = iris_test.matrix[0], int(iris_test.labels[0])
        cfg = AttackConfig(d_max=0.4)
        per_target = [
            evade(iris_logistic, iris_table, x, c_from, c, cfg).queries
            for c in range(3)
            if c != c_from
        ]
        out = untargeted_evade(iris_logistic, iris_table, x, c_from, cfg)
        assert out.queries == sum(per_target)
        assert out.c_to != c_from


class TestOptimalEpsilon:
    """Test cases for the bisection search."""

    def test_six_iterations_and_oracle(self, threshold_model, raise_first_table):
        """The smallest working budget for x0 = 0.2 and cut 0.5 is 0.3."""
        out = optimal_epsilon(threshold_model, raise_first_table, [0.2, 0.4], 0, 1)
        assert out.iterations == 6
        assert out.success
        assert abs(out.epsilon_optimal - 0.3) <= 0.01
        assert out.epsilon_optimal >= 0.3
        assert out.least_distance == pytest.approx(out.epsilon_optimal)

    def test_replay_reproduces_outcome(self, threshold_model, raise_first_table):
        out = optimal_epsilon(threshold_model, raise_first_table, [0.2, 0.4], 0, 1)
        replay = evade(
            threshold_model, raise_first_table, [0.2, 0.4], 0, 1,
            AttackConfig(d_max=out.epsilon_optimal),
        )
        assert replay.success == out.success
        assert np.array_equal(replay.adversarial_row, out.best_adversarial)

    def test_not_found(self, raise_first_table):
        model = ThresholdModel(n_features=2, feature=0, cut=0.95)
        out = optimal_epsilon(model, raise_first_table, [0.2, 0.4], 0, 1)
        assert not out.success
        assert out.epsilon_optimal == EPSILON_NOT_FOUND
        assert out.least_distance == EPSILON_NOT_FOUND
        assert out.best_adversarial.tolist() == [0.2, 0.4]
        assert out.iterations == 6

    def test_budget_above_last_midpoint(self, raise_first_table):
        """A cut reachable only beyond the last midpoint is found at eps_high."""
        model = ThresholdModel(n_features=2, feature=0, cut=0.697)
        before = model.query_count
        out = optimal_epsilon(model, raise_first_table, [0.2, 0.4], 0, 1)
        assert out.success
        assert out.epsilon_optimal == 0.5
        assert out.iterations == 6
        assert out.queries == model.query_count - before
        replay = evade(model, raise_first_table, [0.2, 0.4], 0, 1, AttackConfig(d_max=0.5))
        assert np.array_equal(replay.adversarial_row, out.best_adversarial)

    def test_already_target_converges_to_low_end(self, threshold_model, raise_first_table):
        out = optimal_epsilon(threshold_model, raise_first_table, [0.8, 0.4], 0, 1)
        assert out.success
        assert out.epsilon_optimal == pytest.approx(0.5 / 64)
        assert out.least_distance == 0.0
        assert out.queries == 6

    def test_queries_accumulate(self, threshold_model, raise_first_table):
        before = threshold_model.query_count
        out = optimal_epsilon(threshold_model, raise_first_table, [0.2, 0.4], 0, 1)
        assert out.queries == threshold_model.query_count - before

    def test_custom_range(self, threshold_model, raise_first_table):
        scfg = EpsilonSearchConfig(eps_low=0.25, eps_high=0.35, tolerance=0.01)
        out = optimal_epsilon(threshold_model, raise_first_table, [0.2, 0.4], 0, 1, scfg)
        assert out.iterations == 4
        assert 0.3 - 1e-9 <= out.epsilon_optimal <= 0.31

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            EpsilonSearchConfig(eps_low=0.5, eps_high=0.2)
