"""
Tests for the steady-state multi-objective EA
"""
import itertools
from unittest.mock import MagicMock

import numpy as np
from django.test import SimpleTestCase

from apps.planning.domain import AssetCatalog, EASettings, Portfolio, RunConfig
from apps.planning.evolution import (
    Member,
    ObjectivePair,
    ScenarioSolver,
    dominates,
    evaluate,
    make_offspring,
    non_dominated,
    solve_scenario,
    steady_state_update,
)
from apps.planning.tests.utils import deterministic_space, reference_config
from core.streams import derive_stream


def member(cost, success_rate, tag=0):
    return Member(Portfolio.from_counts([tag], 100), ObjectivePair(cost, success_rate))


def pairs(population):
    return [(m.objectives.cost, m.objectives.success_rate) for m in population]


def oracle_config(seed=1, evaluations=500):
    """n = 2, m = 1, x_max = 5, deterministic demand of 4 units"""
    catalog = AssetCatalog.from_rows([1, 2], [[1], [3]])
    return RunConfig(
        catalog=catalog,
        space=deterministic_space([4]),
        master_seed=seed,
        x_max=5,
        ea=EASettings(population=20, evaluations=evaluations, mutation_stddev=0.1, mutation_prob=1.0),
    )


class DominanceTests(SimpleTestCase):
    """Tests for dominates and non_dominated"""

    def test_strictly_better(self):
        self.assertTrue(dominates(ObjectivePair(5, 0.9), ObjectivePair(6, 0.8)))

    def test_equal_pairs(self):
        self.assertFalse(dominates(ObjectivePair(5, 0.9), ObjectivePair(5, 0.9)))

    def test_incomparable(self):
        self.assertFalse(dominates(ObjectivePair(5, 0.7), ObjectivePair(6, 0.9)))
        self.assertFalse(dominates(ObjectivePair(6, 0.9), ObjectivePair(5, 0.7)))

    def test_better_in_one_equal_in_other(self):
        self.assertTrue(dominates(ObjectivePair(5, 0.9), ObjectivePair(5, 0.8)))
        self.assertTrue(dominates(ObjectivePair(4, 0.9), ObjectivePair(5, 0.9)))

    def test_non_dominated_keeps_duplicates(self):
        population = [member(5, 0.9, 1), member(5, 0.9, 2), member(6, 0.8, 3), member(3, 0.1, 4)]
        self.assertEqual(pairs(non_dominated(population)), [(5, 0.9), (5, 0.9), (3, 0.1)])


class MakeOffspringTests(SimpleTestCase):
    """Tests for crossover, mutation and decoding"""

    def test_identical_parents_without_mutation(self):
        parent = Portfolio.from_genotype([0.2, 0.7, 0.5], 500)
        ea = EASettings(mutation_prob=0.0)
        child = make_offspring(parent, parent, derive_stream(1, ['offspring']), ea, 500)
        self.assertEqual(child, parent)

    def test_crossover_takes_genes_from_parents(self):
        p1 = Portfolio.from_genotype([0.1] * 8, 500)
        p2 = Portfolio.from_genotype([0.9] * 8, 500)
        child = make_offspring(p1, p2, derive_stream(4, ['offspring']), EASettings(mutation_prob=0.0), 500)
        self.assertTrue(set(child.genotype) <= {0.1, 0.9})

    def test_mutation_clamps_at_one(self):
        """Genotype 0.98 mutated by +0.05 clamps to 1.0 and decodes to x_max"""
        stream = MagicMock()
        stream.random.side_effect = [np.array([0.2]), np.array([0.0])]
        stream.normal.return_value = np.array([0.05])
        parent = Portfolio.from_genotype([0.98], 500)
        child = make_offspring(parent, parent, stream, EASettings(mutation_prob=0.4), 500)
        self.assertEqual(child.genotype, (1.0,))
        self.assertEqual(child.counts, (500,))

    def test_mutation_granularity(self):
        """Genotype 0.5 decodes to 250; after +0.001 it decodes to 251"""
        stream = MagicMock()
        stream.random.side_effect = [np.array([0.7]), np.array([0.1])]
        stream.normal.return_value = np.array([0.001])
        parent = Portfolio.from_genotype([0.5], 500)
        self.assertEqual(parent.counts, (250,))
        child = make_offspring(parent, parent, stream, EASettings(mutation_prob=0.4), 500)
        self.assertEqual(child.counts, (251,))

    def test_stream_consumption_is_fixed(self):
        """Every offspring draws crossover, mutation mask and noise for each gene"""
        stream = MagicMock()
        stream.random.side_effect = [np.zeros(3), np.ones(3)]
        stream.normal.return_value = np.zeros(3)
        parent = Portfolio.from_genotype([0.1, 0.2, 0.3], 10)
        make_offspring(parent, parent, stream, EASettings(mutation_prob=0.5), 10)
        self.assertEqual(stream.random.call_count, 2)
        stream.normal.assert_called_once_with(0.0, 0.1, 3)


class SteadyStateUpdateTests(SimpleTestCase):
    """Tests for steady_state_update"""

    def setUp(self):
        self.stream = MagicMock()

    def test_child_replaces_dominated_member(self):
        population = steady_state_update([member(5, 0.5)], member(4, 0.6), self.stream)
        self.assertEqual(pairs(population), [(4, 0.6)])

    def test_dominated_child_discarded(self):
        population = steady_state_update([member(4, 0.6)], member(5, 0.5), self.stream)
        self.assertEqual(pairs(population), [(4, 0.6)])

    def test_incomparable_child_appended(self):
        population = steady_state_update([member(4, 0.6), member(6, 0.9)], member(5, 0.7), self.stream)
        self.assertEqual(pairs(population), [(4, 0.6), (6, 0.9), (5, 0.7)])
        self.stream.integers.assert_not_called()

    def test_prefers_member_dominated_by_child(self):
        """A member the child dominates goes before one dominated by someone else"""
        population = [member(1, 0.1), member(2, 0.05), member(8, 0.8)]
        updated = steady_state_update(population, member(7, 0.85), self.stream)
        self.assertEqual(pairs(updated), [(1, 0.1), (2, 0.05), (7, 0.85)])

    def test_replaces_member_dominated_by_others(self):
        population = [member(1, 0.1), member(2, 0.05)]
        updated = steady_state_update(population, member(5, 0.9), self.stream)
        self.assertEqual(pairs(updated), [(1, 0.1), (5, 0.9)])

    def test_random_choice_among_candidates(self):
        self.stream.integers.return_value = 1
        population = [member(5, 0.5), member(6, 0.4), member(1, 0.0)]
        updated = steady_state_update(population, member(4, 0.6), self.stream)
        self.stream.integers.assert_called_once_with(2)
        self.assertEqual(pairs(updated), [(5, 0.5), (4, 0.6), (1, 0.0)])

    def test_population_never_shrinks(self):
        """Random children: size is non-decreasing and a kept child is never dominated on insertion"""
        rng = np.random.default_rng(8)
        stream = derive_stream(8, ['update'])
        population = [member(float(c), float(s)) for c, s in zip(rng.integers(0, 20, 5), rng.random(5))]
        for _ in range(300):
            child = member(float(rng.integers(0, 20)), float(rng.random()))
            updated = steady_state_update(population, child, stream)
            self.assertGreaterEqual(len(updated), len(population))
            if any(m is child for m in updated):
                self.assertFalse(any(dominates(m.objectives, child.objectives) for m in updated))
            population = updated


class SolveScenarioTests(SimpleTestCase):
    """Tests for the full EA loop"""

    def test_budget_equal_to_population(self):
        """With no offspring budget the initial population's front is returned"""
        config = oracle_config(evaluations=20)
        solver = ScenarioSolver(config.space.scenarios[0], config)
        result = solver.solve()
        self.assertEqual(result.evaluations, 20)
        self.assertEqual(len(result.population), 20)
        self.assertEqual(pairs(result.front), pairs(non_dominated(result.population)))

    def test_evaluations_match_budget(self):
        config = oracle_config(evaluations=137)
        self.assertEqual(ScenarioSolver(config.space.scenarios[0], config).solve().evaluations, 137)

    def test_counts_within_bounds(self):
        config = oracle_config(evaluations=200)
        result = ScenarioSolver(config.space.scenarios[0], config).solve()
        for m in result.population:
            self.assertTrue(all(0 <= x <= config.x_max for x in m.portfolio.counts))

    def test_deterministic_success_rates(self):
        """With deterministic futures every success rate is 0 or 1"""
        config = oracle_config(evaluations=60)
        result = ScenarioSolver(config.space.scenarios[0], config).solve()
        self.assertTrue({m.objectives.success_rate for m in result.population} <= {0.0, 1.0})

    def test_front_matches_exhaustive_search(self):
        """Tiny instance: the returned front equals the brute-force front over all 36 portfolios"""
        config = oracle_config()
        scenario = config.space.scenarios[0]
        everything = [
            Member(p, evaluate(p, scenario, config))
            for p in (Portfolio.from_counts(c, 5) for c in itertools.product(range(6), repeat=2))
        ]
        expected = set(pairs(non_dominated(everything)))
        self.assertEqual(expected, {(0.0, 0.0), (3.0, 1.0)})

        for seed in range(20):
            front = solve_scenario(scenario, config.with_seed(seed))
            self.assertEqual(set(pairs(front)), expected, f"seed {seed}")

    def test_seeded_runs_repeat(self):
        config = oracle_config(seed=5, evaluations=120)
        first = solve_scenario(config.space.scenarios[0], config)
        second = solve_scenario(config.space.scenarios[0], config)
        self.assertEqual([m.portfolio for m in first], [m.portfolio for m in second])

    def test_reference_scenario_has_trade_off(self):
        """Second reference scenario, seed 42, full budget: at least two incomparable points"""
        config = reference_config()
        front = solve_scenario(config.space.scenarios[1], config)
        self.assertGreaterEqual(len(set(pairs(front))), 2)
        for a, b in itertools.combinations(front, 2):
            self.assertFalse(dominates(a.objectives, b.objectives))

    def test_evaluate_cost(self):
        config = reference_config()
        objectives = evaluate(Portfolio.from_counts([3, 1, 0, 2, 0], 500), config.space.scenarios[0], config)
        self.assertEqual(objectives.cost, 6.0)
        self.assertTrue(0.0 <= objectives.success_rate <= 1.0)
