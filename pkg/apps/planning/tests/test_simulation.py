"""
Tests for future sampling and the greedy assignment kernel
"""
import math
from unittest.mock import MagicMock

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from apps.planning.domain import AssetCatalog, Portfolio, Scenario, ScenarioSpace
from apps.planning.simulation import (
    FutureDemands,
    ScenarioFutures,
    assign_assets,
    beta_path,
    demand_path,
    future_success,
    sample_future,
    scenario_futures,
    scenario_success_rate,
    ties_path,
)
from apps.planning.tests.utils import deterministic_space, reference_config, reference_catalog
from core.streams import derive_stream

X_MAX = 500


def single_demand(*row):
    return FutureDemands(demands=np.array([row], dtype=float))


def counts(*values):
    return Portfolio.from_counts(values, X_MAX)


class SampleFutureTests(SimpleTestCase):
    """Tests for sample_future"""

    def test_zero_variance_rows(self):
        """sigma 0, mu (2, 2, 3, 3), beta 2 gives (4, 4, 6, 6) on every row"""
        space = deterministic_space([2, 2, 3, 3], time_points=10)
        future = sample_future(space.scenarios[0], 2.0, derive_stream(1, ['demand']), space)
        self.assertEqual(future.demands.shape, (10, 4))
        np.testing.assert_array_equal(future.demands, np.tile([4.0, 4.0, 6.0, 6.0], (10, 1)))

    def test_negative_draws_clamp(self):
        """mu 0, sigma 1: the clamped mean is the half-normal mean 1/sqrt(2 pi)"""
        scenario = Scenario(id=0, demand_mean=(0.0,), demand_stddev=(1.0,), probability=1.0)
        space = ScenarioSpace(scenarios=(scenario,), time_points=100_000)
        future = sample_future(scenario, 1.0, derive_stream(5, ['demand']), space)
        self.assertTrue((future.demands >= 0).all())
        self.assertAlmostEqual(future.demands.mean(), 1 / math.sqrt(2 * math.pi), delta=0.01)
        self.assertAlmostEqual((future.demands == 0).mean(), 0.5, delta=0.01)

    def test_large_mean_close_to_normal(self):
        """mu 10, sigma 4, beta 1: sample mean within 3 standard errors of the clamped mean"""
        scenario = Scenario(id=0, demand_mean=(10.0,), demand_stddev=(4.0,), probability=1.0)
        space = ScenarioSpace(scenarios=(scenario,), time_points=100_000)
        future = sample_future(scenario, 1.0, derive_stream(9, ['demand']), space)
        alpha = 10.0 / 4.0
        pdf = math.exp(-alpha ** 2 / 2) / math.sqrt(2 * math.pi)
        cdf = 0.5 * (1 + math.erf(alpha / math.sqrt(2)))
        clamped_mean = 10.0 * cdf + 4.0 * pdf
        self.assertLess(abs(future.demands.mean() - clamped_mean), 3 * 4.0 / math.sqrt(100_000))

    def test_reference_cells_match_clamped_mean(self):
        """Every reference (scenario, k) with sigma > 0: mean of 10^5 draws within 3 standard errors"""
        draws = 100_000
        config = reference_config()
        for scenario in config.space.scenarios:
            space = ScenarioSpace(scenarios=(scenario,), time_points=draws)
            future = sample_future(scenario, 1.0, derive_stream(11, [('cell-check', scenario.id)]), space)
            for k, (mu, sigma) in enumerate(zip(scenario.demand_mean, scenario.demand_stddev)):
                if sigma == 0:
                    continue
                alpha = mu / sigma
                pdf = math.exp(-alpha ** 2 / 2) / math.sqrt(2 * math.pi)
                cdf = 0.5 * (1 + math.erf(alpha / math.sqrt(2)))
                mean = mu * cdf + sigma * pdf
                variance = (mu ** 2 + sigma ** 2) * cdf + mu * sigma * pdf - mean ** 2
                error = math.sqrt(variance / draws)
                with self.subTest(scenario=scenario.label, demand_type=k):
                    self.assertLess(abs(future.demands[:, k].mean() - mean), 3 * error)
                    if mu == 0:
                        self.assertAlmostEqual(future.demands[:, k].mean(), 0.3989, delta=0.01)

    def test_future_is_read_only(self):
        space = deterministic_space([1])
        future = sample_future(space.scenarios[0], 1.0, derive_stream(1, ['demand']), space)
        with self.assertRaises(ValueError):
            future.demands[0, 0] = 5.0


class AssignAssetsTests(SimpleTestCase):
    """Hand traces of the greedy rule on the five-asset catalog"""

    def setUp(self):
        self.catalog = reference_catalog()
        self.stream = derive_stream(0, ['ties'])

    def test_single_unit_covers_demand(self):
        """d_1 = 10 and one unit of asset 4 (w = 10): one unit, residual 0"""
        trace = assign_assets(counts(0, 0, 0, 1, 0), single_demand(10, 0, 0, 0), self.catalog, self.stream)
        self.assertEqual(trace.committed(0, 0), [(3, 1)])
        self.assertEqual(trace.residuals[0, 0], 0.0)
        self.assertTrue(trace.satisfied)

    def test_cheapest_ratio_first(self):
        """d_1 = 6 with 2 x asset 1 and 1 x asset 4: asset 4 (1/10) beats asset 1 (1/3)"""
        trace = assign_assets(counts(2, 0, 0, 1, 0), single_demand(6, 0, 0, 0), self.catalog, self.stream)
        self.assertEqual(trace.committed(0, 0), [(3, 1)])
        self.assertEqual(list(trace.units_used(0, 5)), [0, 0, 0, 1, 0])
        self.assertTrue(trace.satisfied)

    def test_multi_pass(self):
        """d_1 = 25 with 2 x asset 4 and 1 x asset 1: 20 then 3, residual 2"""
        portfolio = counts(1, 0, 0, 2, 0)
        demands = single_demand(25, 0, 0, 0)
        trace = assign_assets(portfolio, demands, self.catalog, self.stream)
        self.assertEqual(trace.committed(0, 0), [(3, 2), (0, 1)])
        self.assertEqual(trace.residuals[0, 0], 2.0)
        self.assertFalse(future_success(portfolio, demands, self.catalog, derive_stream(0, ['ties'])))

    def test_pool_shared_across_demand_types(self):
        """Units used for k = 0 are unavailable for k = 1 within the same time point"""
        trace = assign_assets(counts(2, 0, 0, 0, 0), single_demand(3, 6, 0, 0), self.catalog, self.stream)
        self.assertEqual(trace.committed(0, 0), [(0, 1)])
        self.assertEqual(trace.committed(0, 1), [(0, 1)])
        self.assertEqual(trace.residuals[0, 1], 3.0)

    def test_availability_resets_each_time_point(self):
        demands = FutureDemands(demands=np.array([[3, 0, 0, 0], [3, 0, 0, 0]], dtype=float))
        trace = assign_assets(counts(1, 0, 0, 0, 0), demands, self.catalog, self.stream)
        self.assertTrue(trace.satisfied)
        self.assertEqual(list(trace.units_used(1, 5)), [1, 0, 0, 0, 0])

    def test_all_zero_demand_vacuous(self):
        self.assertTrue(future_success(counts(0, 0, 0, 0, 0), single_demand(0, 0, 0, 0), self.catalog, self.stream))

    def test_zero_portfolio_fails(self):
        self.assertFalse(future_success(counts(0, 0, 0, 0, 0), single_demand(0, 0.5, 0, 0), self.catalog, self.stream))

    def test_residual_within_tolerance_counts_as_met(self):
        tolerance = settings.PLANNING['RESIDUAL_TOLERANCE']
        trace = assign_assets(counts(1, 0, 0, 0, 0), single_demand(3 + tolerance / 2, 0, 0, 0), self.catalog, self.stream)
        self.assertTrue(trace.satisfied)
        self.assertEqual(trace.committed(0, 0), [(0, 1)])

    def test_ties_follow_stream_keys(self):
        """Equally cheap assets are taken in order of their drawn keys"""
        catalog = AssetCatalog.from_rows([1, 1], [[2], [2]])
        stream = MagicMock()
        stream.random.return_value = np.array([[[0.9, 0.1]]])
        trace = assign_assets(Portfolio.from_counts([1, 1], 5), single_demand(2), catalog, stream)
        self.assertEqual(trace.committed(0, 0), [(1, 1)])

        stream.random.return_value = np.array([[[0.1, 0.9]]])
        trace = assign_assets(Portfolio.from_counts([1, 1], 5), single_demand(2), catalog, stream)
        self.assertEqual(trace.committed(0, 0), [(0, 1)])

    def test_trace_records(self):
        trace = assign_assets(counts(1, 0, 0, 2, 0), single_demand(25, 0, 0, 0), self.catalog, self.stream)
        records = trace.to_records()
        self.assertEqual([(r['asset'], r['units']) for r in records], [(3, 2), (0, 1)])
        self.assertTrue(all(r['residual'] == 2.0 for r in records))

    def test_committed_units_within_counts(self):
        """Random futures: per-time-point usage never exceeds x_i, residuals stay >= 0"""
        rng = np.random.default_rng(11)
        for trial in range(200):
            portfolio = counts(*rng.integers(0, 6, size=5))
            demands = FutureDemands(demands=rng.uniform(0, 25, size=(3, 4)))
            trace = assign_assets(portfolio, demands, self.catalog, derive_stream(trial, ['ties']))
            self.assertTrue((trace.residuals >= 0).all())
            for t in range(3):
                self.assertTrue((trace.units_used(t, 5) <= portfolio.count_array).all())


def straight_line_success(portfolio, scenario, space, catalog, master_seed):
    """Success flags per future from a plain loop over the same seeded futures"""
    tolerance = settings.PLANNING['RESIDUAL_TOLERANCE']
    costs, capability = catalog.unit_costs, catalog.capability_matrix
    flags = []
    for p in range(space.instances_per_scenario):
        low, high = space.beta_range
        beta = derive_stream(master_seed, beta_path(scenario.id, p)).uniform(low, high)
        for h in range(space.futures_per_instance):
            raw = derive_stream(master_seed, demand_path(scenario.id, p, h)).normal(
                scenario.demand_mean, scenario.demand_stddev, size=(space.time_points, len(scenario.demand_mean))
            )
            demands = np.maximum(raw, 0.0) * beta
            keys = derive_stream(master_seed, ties_path(scenario.id, p, h)).random(
                (space.time_points, catalog.demand_type_count, catalog.size)
            )
            ok = True
            for t in range(space.time_points):
                left = list(portfolio.counts)
                for k in range(catalog.demand_type_count):
                    need = demands[t, k] if demands[t, k] > tolerance else 0.0
                    ranked = sorted(
                        (i for i in range(catalog.size) if capability[i, k] > 0),
                        key=lambda i: (costs[i] / capability[i, k], keys[t, k, i]),
                    )
                    for i in ranked:
                        if need == 0.0:
                            break
                        units = 0
                        while units < left[i] and need - units * capability[i, k] > tolerance:
                            units += 1
                        left[i] -= units
                        need = max(0.0, need - units * capability[i, k])
                        if need <= tolerance:
                            need = 0.0
                    if need > 0.0:
                        ok = False
            flags.append(ok)
    return np.array(flags)


class ScenarioSuccessRateTests(SimpleTestCase):
    """Tests for scenario_success_rate and the shared futures"""

    def test_deterministic_ample_portfolio(self):
        space = deterministic_space([2, 2, 3, 3], time_points=4, instances=2, futures=3)
        rate = scenario_success_rate(counts(50, 50, 50, 50, 50), space.scenarios[0], space, reference_catalog(), 42)
        self.assertEqual(rate, 1.0)

    def test_deterministic_empty_portfolio(self):
        space = deterministic_space([2, 2, 3, 3], time_points=4, instances=2, futures=3)
        rate = scenario_success_rate(counts(0, 0, 0, 0, 0), space.scenarios[0], space, reference_catalog(), 42)
        self.assertEqual(rate, 0.0)

    def test_matches_straight_line_kernel(self):
        """First reference scenario, x = (50, 0, 0, 0, 0): vectorised and plain loops agree exactly"""
        config = reference_config()
        scenario = config.space.scenarios[0]
        portfolio = counts(50, 0, 0, 0, 0)
        futures = ScenarioFutures(scenario, config.space, config.catalog, config.master_seed)
        expected = straight_line_success(portfolio, scenario, config.space, config.catalog, config.master_seed)
        np.testing.assert_array_equal(futures.success(portfolio), expected)
        self.assertEqual(futures.success_rate(portfolio), expected.mean())

    def test_vectorised_matches_assign_assets(self):
        """Every future replayed through assign_assets gives the vectorised flag"""
        config = reference_config()
        futures = ScenarioFutures(config.space.scenarios[1], config.space, config.catalog, config.master_seed)
        rng = np.random.default_rng(3)
        for _ in range(5):
            portfolio = counts(*rng.integers(0, 40, size=5))
            replayed = [trace.satisfied for _, _, trace in futures.iter_traces(portfolio)]
            np.testing.assert_array_equal(futures.success(portfolio), replayed)

    def test_monotone_in_counts(self):
        """Adding units never turns a satisfied future into a failed one"""
        config = reference_config()
        futures = scenario_futures(config.space.scenarios[3], config.space, config.catalog, config.master_seed)
        rng = np.random.default_rng(17)
        for _ in range(1000):
            base = rng.integers(0, 30, size=5)
            more = base + rng.integers(0, 5, size=5)
            before = futures.success(counts(*base))
            after = futures.success(counts(*more))
            self.assertFalse((before & ~after).any())

    def test_common_random_numbers(self):
        """Separately built futures for the same scenario are byte-identical"""
        config = reference_config()
        scenario = config.space.scenarios[2]
        first = ScenarioFutures(scenario, config.space, config.catalog, config.master_seed)
        second = ScenarioFutures(scenario, config.space, config.catalog, config.master_seed)
        self.assertEqual(first.demands.tobytes(), second.demands.tobytes())
        np.testing.assert_array_equal(first.betas, second.betas)
        portfolio = counts(20, 10, 5, 10, 5)
        self.assertEqual(first.success_rate(portfolio), second.success_rate(portfolio))

    def test_betas_within_range(self):
        config = reference_config()
        futures = scenario_futures(config.space.scenarios[0], config.space, config.catalog, config.master_seed)
        self.assertEqual(futures.size, 100)
        self.assertTrue(((futures.betas >= 1.0) & (futures.betas <= 10.0)).all())

    def test_seed_changes_futures(self):
        config = reference_config()
        scenario = config.space.scenarios[0]
        a = ScenarioFutures(scenario, config.space, config.catalog, 1)
        b = ScenarioFutures(scenario, config.space, config.catalog, 2)
        self.assertFalse(np.array_equal(a.demands, b.demands))
