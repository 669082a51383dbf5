import itertools

import numpy as np
import pytest

from equilearn.config import settings
from equilearn.dependencies import make_rng
from equilearn.exceptions import (
    DistributionError,
    GameValidationError,
    ScaleCapExceededError,
    ZeroProbabilityTypeError,
)
from equilearn.services.bayes_game import (
    BayesianGame,
    BehaviorStrategy,
    CorrelatedProfile,
    MixedStrategy,
    StrategyProfileDist,
    conditional_reward_table,
    conditional_reward_vector,
    default_sample_count,
    expected_utility,
    pure_strategies,
    pure_strategy_index,
    random_game,
    sampled_reward_vector,
    validate_game,
    validate_pure_strategy,
)
from equilearn.services.equilibrium_check import appendix_a_game, appendix_a_profile
from equilearn.services.finite_dist import FiniteDist
from tests.conftest import correlated_types_game


def zero_mass_game() -> BayesianGame:
    prior = np.array([[0.5, 0.5], [0.0, 0.0]])
    utilities = tuple(np.full((2, 2, 2, 2), 0.5) for _ in range(2))
    return BayesianGame((2, 2), (2, 2), prior, utilities)


def brute_force_utility(g: BayesianGame, tables) -> np.ndarray:
    """Sum over every (theta, a) cell; tables[j] is player j's (K_j, n_j) behavior table."""
    total = np.zeros(g.m)
    for theta in itertools.product(*(range(k) for k in g.type_counts)):
        for a in itertools.product(*(range(n) for n in g.action_counts)):
            p = g.prior[theta] * np.prod([tables[j][theta[j], a[j]] for j in range(g.m)])
            for i in range(g.m):
                total[i] += p * g.utilities[i][theta + a]
    return total


class TestValidation:
    def test_random_game_is_valid(self, small_random_game):
        validate_game(small_random_game)

    def test_unnormalized_prior(self):
        g = BayesianGame((2,), (2,), np.array([0.5, 0.6]), (np.zeros((2, 2)),))
        with pytest.raises(GameValidationError, match="not normalized"):
            validate_game(g)

    def test_utility_out_of_range(self):
        u = np.zeros((1, 1, 2, 2))
        u[0, 0, 1, 0] = 1.5
        g = BayesianGame((1, 1), (2, 2), np.ones((1, 1)), (u, np.zeros((1, 1, 2, 2))))
        with pytest.raises(GameValidationError, match=r"\(0, 0, 1, 0\)"):
            validate_game(g)

    def test_payoff_bounds_widen_range(self):
        validate_game(appendix_a_game(5))

    def test_shape_mismatch(self):
        g = BayesianGame((2, 2), (2, 2), np.full((2, 2), 0.25), (np.zeros((2, 2, 2, 2)), np.zeros((2, 2, 2))))
        with pytest.raises(GameValidationError, match="player 1"):
            validate_game(g)

    def test_tables_are_read_only(self, matching_game):
        with pytest.raises(ValueError):
            matching_game.prior[0, 0] = 1.0


class TestPrior:
    def test_conditional_prior_of_correlated_types(self):
        g = correlated_types_game()
        assert g.conditional_prior(0, 0).probs == pytest.approx([0.25, 0.75])
        assert g.conditional_prior(1, 0).probs == pytest.approx([1 / 7, 6 / 7])

    def test_zero_mass_type_raises(self):
        g = zero_mass_game()
        assert g.positive_types(0) == [0]
        with pytest.raises(ZeroProbabilityTypeError) as exc:
            g.conditional_prior(0, 1)
        assert (exc.value.player, exc.value.type_index) == (0, 1)


class TestStrategies:
    def test_pure_strategy_order(self):
        assert list(pure_strategies(2, 2)) == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert pure_strategy_index((1, 0), 2) == 2

    def test_validate_pure_strategy(self):
        with pytest.raises(DistributionError):
            validate_pure_strategy((0, 4), 2, 4)

    def test_behaviorize_all_zero_all_one(self):
        all_zero = BehaviorStrategy.pure((0, 0, 0), 4)
        all_one = BehaviorStrategy.pure((1, 1, 1), 4)
        mixed = MixedStrategy(np.array([1 / 3, 2 / 3]), (all_zero, all_one))
        table = mixed.behaviorize().table
        assert table == pytest.approx(np.tile([1 / 3, 2 / 3, 0.0, 0.0], (3, 1)))

    def test_behaviorize_loses_correlation_across_types(self):
        mixed = MixedStrategy.uniform_mixture([BehaviorStrategy.pure((0, 0), 2), BehaviorStrategy.pure((1, 1), 2)])
        assert mixed.pure_masses() == pytest.approx([0.5, 0.0, 0.0, 0.5])
        assert mixed.behaviorize().pure_masses() == pytest.approx([0.25] * 4)

    def test_from_pure_dist_round_trip(self):
        masses = np.array([0.1, 0.2, 0.3, 0.4])
        mixed = MixedStrategy.from_pure_dist(FiniteDist(masses), 2, 2)
        assert mixed.pure_masses() == pytest.approx(masses)

    def test_pure_space_cap(self):
        mixed = MixedStrategy.of(BehaviorStrategy.uniform(7, 4))
        assert 4 ** 7 > settings.pure_strategy_cap
        with pytest.raises(ScaleCapExceededError):
            mixed.pure_masses()

    def test_behavior_rows_must_be_distributions(self):
        with pytest.raises(DistributionError):
            BehaviorStrategy(np.array([[0.5, 0.4]]))

    def test_expand_uniform_mixtures(self):
        a = MixedStrategy.uniform_mixture([BehaviorStrategy.pure((0,), 2), BehaviorStrategy.pure((1,), 2)])
        b = MixedStrategy.of(BehaviorStrategy.pure((1,), 2))
        mu = CorrelatedProfile((StrategyProfileDist.of(a, b),))
        assert mu.expand().rank == 2

    def test_expand_rejects_skewed_mixture(self):
        a = MixedStrategy(np.array([0.3, 0.7]), (BehaviorStrategy.pure((0,), 2), BehaviorStrategy.pure((1,), 2)))
        b = MixedStrategy.of(BehaviorStrategy.pure((1,), 2))
        with pytest.raises(DistributionError):
            CorrelatedProfile((StrategyProfileDist.of(a, b),)).expand()


class TestEvaluation:
    def test_matching_pennies_uniform(self, pennies):
        uniform = BehaviorStrategy.uniform(1, 2)
        assert expected_utility(pennies, StrategyProfileDist.of(uniform, uniform)) == pytest.approx([0.5, 0.5])

    def test_rank_two_example_pays_alice_zero(self):
        u = expected_utility(appendix_a_game(6), appendix_a_profile(6))
        assert u == pytest.approx([0.0, 0.0])

    def test_contraction_matches_brute_force(self):
        rng = make_rng(11)
        g = random_game((2, 3, 2), (2, 2, 3), rng)
        tables = [rng.dirichlet(np.ones(n), size=k) for k, n in zip(g.type_counts, g.action_counts)]
        profile = StrategyProfileDist(tuple(BehaviorStrategy(t) for t in tables))
        assert expected_utility(g, profile) == pytest.approx(brute_force_utility(g, tables))

    def test_conditional_reward_vector_by_hand(self, matching_game, matching_bne):
        opponent = {1: BehaviorStrategy(matching_bne[1])}
        assert conditional_reward_vector(matching_game, 0, 0, opponent) == pytest.approx([0.8, 0.2])
        assert conditional_reward_vector(matching_game, 0, 1, opponent) == pytest.approx([0.2, 0.8])

    def test_conditional_rewards_average_to_utility(self, small_random_game, rng):
        g = small_random_game
        tables = [rng.dirichlet(np.ones(2), size=2) for _ in range(2)]
        profile = StrategyProfileDist(tuple(BehaviorStrategy(t) for t in tables))
        r = conditional_reward_table(g, 0, profile)
        total = sum(g.type_marginal(0)[k] * tables[0][k] @ r[k] for k in range(2))
        assert total == pytest.approx(expected_utility(g, profile)[0])

    def test_expected_utility_is_linear_in_mixtures(self):
        rng = make_rng(13)
        g = random_game((2, 3), (3, 2), rng)
        first, second = (
            [BehaviorStrategy(rng.dirichlet(np.ones(n), size=k)) for k, n in zip(g.type_counts, g.action_counts)]
            for _ in range(2)
        )
        u_first = expected_utility(g, StrategyProfileDist(tuple(first)))
        u_second = expected_utility(g, StrategyProfileDist(tuple(second)))
        correlated = CorrelatedProfile((StrategyProfileDist(tuple(first)), StrategyProfileDist(tuple(second))))
        assert expected_utility(g, correlated) == pytest.approx((u_first + u_second) / 2)

        mixed = MixedStrategy(np.array([0.3, 0.7]), (first[0], second[0]))
        u_mixed = expected_utility(g, StrategyProfileDist.of(mixed, first[1]))
        u_a = expected_utility(g, StrategyProfileDist.of(first[0], first[1]))
        u_b = expected_utility(g, StrategyProfileDist.of(second[0], first[1]))
        assert u_mixed == pytest.approx(0.3 * u_a + 0.7 * u_b)

    def test_single_type_reward_is_unconditioned(self):
        rng = make_rng(14)
        g = random_game((1, 3), (2, 3), rng)
        table = rng.dirichlet(np.ones(3), size=3)
        # u_0[0] is indexed (theta_1, a_0, a_1)
        direct = np.einsum("t,tab,tb->a", g.prior[0], g.utilities[0][0], table)
        assert conditional_reward_vector(g, 0, 0, {1: BehaviorStrategy(table)}) == pytest.approx(direct)

    def test_missing_opponent(self, matching_game):
        with pytest.raises(DistributionError, match="opponents"):
            conditional_reward_vector(matching_game, 0, 0, {})

    def test_zero_mass_rows_are_nan(self):
        g = zero_mass_game()
        profile = StrategyProfileDist.of(BehaviorStrategy.uniform(2, 2), BehaviorStrategy.uniform(2, 2))
        table = conditional_reward_table(g, 0, profile)
        assert np.all(np.isnan(table[1]))
        assert table[0] == pytest.approx([0.5, 0.5])


class TestSampledRewards:
    def test_close_to_exact(self):
        g = correlated_types_game()
        rng = make_rng(7)
        profile = StrategyProfileDist.of(
            BehaviorStrategy(rng.dirichlet(np.ones(2), size=2)), BehaviorStrategy(rng.dirichlet(np.ones(2), size=2))
        )
        exact = conditional_reward_vector(g, 0, 1, profile)
        estimate = sampled_reward_vector(g, 0, 1, profile, 20_000, make_rng(8))
        assert estimate == pytest.approx(exact, abs=0.02)

    def test_same_seed_same_estimate(self, matching_game, matching_bne):
        opponent = {1: BehaviorStrategy(matching_bne[1])}
        first = sampled_reward_vector(matching_game, 0, 0, opponent, 50, make_rng(3, 0, 1))
        second = sampled_reward_vector(matching_game, 0, 0, opponent, 50, make_rng(3, 0, 1))
        assert np.array_equal(first, second)

    def test_sample_count_grows_with_precision(self, matching_game):
        assert default_sample_count(matching_game, 0.1) > default_sample_count(matching_game, 0.5) >= 1
