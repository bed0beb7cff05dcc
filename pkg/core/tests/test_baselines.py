import numpy as np
from django.test import SimpleTestCase

from core.utils.bandit_controller import EnsembleParams, PerformanceSample
from core.utils.baselines import (DEFAULT, EXPLOIT, EXPLORE, OPTIMAL, BruteNCStrategy, BruteStrategy,
                                  ConfigTronStrategy, DecisionContext, MABNCStrategy, OptimalStrategy,
                                  StrategyOptions, list_strategies, make_strategy, normalize_kind)
from core.utils.config_space import CongestionControl, default_config_id, lhc_sample, restricted_ids
from core.utils.exceptions import ConfigError
from core.utils.netclass import FeatureVector
from core.utils.plt_oracle import OracleParams, noiseless_plt_all, optimal_config
from core.utils.workload import NetworkCondition, default_catalog

NEWS = default_catalog()[3]
CLEAN = NetworkCondition(8000, 100, 0.0)
LOSSY = NetworkCondition(8000, 100, 0.3)
CC_ONLY = restricted_ids(['cc'])


def context(client_id='c1', class_id=0, condition=CLEAN, ts_ms=0):
    features = FeatureVector(condition.bandwidth_kbps, condition.rtt_ms, condition.loss_rate, NEWS.complexity)
    return DecisionContext(client_id, class_id, features, NEWS, condition, ts_ms)


def sample(config_id, plt_ms, client_id='c1', class_id=0):
    features = FeatureVector(8000, 100, 0.0)
    return PerformanceSample(client_id, class_id, features, 'news', config_id, plt_ms, 0, EXPLORE)


class FactoryTests(SimpleTestCase):
    def test_names_are_normalized(self):
        self.assertEqual(normalize_kind('configtron-no-gp'), 'ConfigTronNoGP')
        self.assertEqual(normalize_kind('bo_nc'), 'BONC')
        self.assertEqual(normalize_kind('MABNC'), 'MABNC')
        with self.assertRaises(ConfigError):
            normalize_kind('hill-climb')

    def test_every_kind_builds(self):
        per_client = {'Default', 'Brute', 'BO', 'Optimal'}
        for kind in list_strategies():
            strategy = make_strategy(kind, seed=1)
            self.assertEqual(strategy.kind, kind)
            self.assertEqual(strategy.needs_rules, kind not in per_client)

    def test_ablation_variants_switch_arms_off(self):
        no_gp = make_strategy('ConfigTronNoGP')
        no_dt = make_strategy('ConfigTronNoDT')
        self.assertFalse(no_gp.controller.params.use_gp)
        self.assertTrue(no_gp.controller.params.use_dt)
        self.assertFalse(no_dt.controller.params.use_dt)
        self.assertTrue(no_dt.controller.params.use_gp)

    def test_knob_mask_restricts_candidates(self):
        strategy = make_strategy('BruteNC', StrategyOptions(knobs=('cc',)))
        np.testing.assert_array_equal(strategy.candidate_ids, CC_ONLY)

    def test_cherrypick_uses_its_own_thresholds(self):
        strategy = make_strategy('CherryPickNC')
        search = strategy.search(0)
        self.assertEqual(search.params.init_sample, 6)
        self.assertEqual(search.params.ei_rel_threshold, 0.10)
        self.assertEqual(len(search.queue), 6)


class DefaultAndOptimalTests(SimpleTestCase):
    def test_default_always_default(self):
        strategy = make_strategy('Default')
        rng = np.random.default_rng(0)
        decision = strategy.decide(context(), rng)
        self.assertEqual((decision.config_id, decision.arm), (default_config_id(), DEFAULT))

    def test_optimal_uses_true_condition(self):
        strategy = OptimalStrategy(OracleParams())
        decision = strategy.decide(context(condition=LOSSY), np.random.default_rng(0))
        expected, _ = optimal_config(LOSSY, NEWS, OracleParams())
        self.assertEqual((decision.config_id, decision.arm), (expected.config_id, OPTIMAL))

    def test_optimal_follows_network_changes(self):
        strategy = OptimalStrategy(OracleParams())
        current = strategy.decide(context(condition=CLEAN), np.random.default_rng(0))
        self.assertIsNone(strategy.decide_phase(context(condition=CLEAN), current))
        changed = strategy.decide_phase(context(condition=LOSSY), current)
        self.assertEqual(changed.config.cc, CongestionControl.VEGAS)

    def test_evaluator_and_restriction(self):
        params = OracleParams()
        strategy = OptimalStrategy(params, CC_ONLY, evaluator=lambda n, w: noiseless_plt_all(n, w, params))
        decision = strategy.decide(context(condition=LOSSY), np.random.default_rng(0))
        expected, _ = optimal_config(LOSSY, NEWS, params, CC_ONLY)
        self.assertEqual(decision.config_id, expected.config_id)


class BruteTests(SimpleTestCase):
    def test_walks_candidates_then_exploits(self):
        strategy = BruteStrategy(CC_ONLY)
        rng = np.random.default_rng(0)
        walked = []
        for value in (400.0, 300.0, 350.0, 500.0):
            decision = strategy.decide(context(), rng)
            self.assertEqual(decision.arm, EXPLORE)
            walked.append(decision.config_id)
            strategy.feedback(sample(decision.config_id, value))
        self.assertEqual(walked, [int(i) for i in CC_ONLY])
        self.assertTrue(strategy.exhausted('c1'))
        decision = strategy.decide(context(), rng)
        self.assertEqual((decision.config_id, decision.arm), (int(CC_ONLY[1]), EXPLOIT))

    def test_clients_are_independent(self):
        strategy = BruteStrategy(CC_ONLY)
        rng = np.random.default_rng(0)
        strategy.decide(context('a'), rng)
        self.assertEqual(strategy.decide(context('b'), rng).config_id, int(CC_ONLY[0]))

    def test_exhausted_without_feedback_serves_default(self):
        strategy = BruteStrategy(CC_ONLY)
        rng = np.random.default_rng(0)
        for _ in range(len(CC_ONLY)):
            strategy.decide(context(), rng)
        self.assertEqual(strategy.decide(context(), rng).arm, DEFAULT)

    def test_class_variant_publishes_decisions(self):
        strategy = BruteNCStrategy(CC_ONLY)
        strategy.ensure_class(2)
        strategy.ensure_class(5)
        strategy.feedback(sample(int(CC_ONLY[2]), 120.0, class_id=5))
        update = strategy.update_models()
        self.assertEqual(update.decisions, {2: default_config_id(), 5: int(CC_ONLY[2])})
        self.assertEqual((update.version, update.processed_samples), (1, 1))
        self.assertEqual(strategy.update_models().processed_samples, 0)


class BOTests(SimpleTestCase):
    def test_bootstrap_then_inflight_limit(self):
        strategy = make_strategy('BO', seed=3)
        rng = np.random.default_rng(0)
        decisions = [strategy.decide(context(), rng) for _ in range(5)]
        self.assertEqual([d.arm for d in decisions[:4]], [EXPLORE] * 4)
        self.assertEqual(decisions[4].arm, DEFAULT)
        self.assertEqual(len({d.config_id for d in decisions[:4]}), 4)

    def test_same_key_same_bootstrap(self):
        first = make_strategy('BO', seed=3).search('c1').queue
        second = make_strategy('BO', seed=3).search('c1').queue
        self.assertEqual(first, second)
        self.assertEqual(len(first), 4)

    def test_stopped_search_keeps_incumbent(self):
        strategy = make_strategy('BO', seed=5)
        rng = np.random.default_rng(0)
        values = noiseless_plt_all(CLEAN, NEWS, OracleParams())
        for _ in range(40):
            decision = strategy.decide(context(), rng)
            if decision.arm == EXPLORE:
                strategy.feedback(sample(decision.config_id, float(values[decision.config_id])))
        search = strategy.search('c1')
        self.assertTrue(search.stopped)
        final = strategy.decide(context(), rng)
        self.assertEqual((final.config_id, final.arm), (search.incumbent(), EXPLOIT))

    def test_class_variant_reports_incumbents(self):
        strategy = make_strategy('BONC', seed=2)
        strategy.ensure_class(1)
        strategy.feedback(sample(17, 90.0, class_id=1))
        self.assertEqual(strategy.update_models().decisions, {1: 17})


class MABNCTests(SimpleTestCase):
    def test_epsilon_decays_with_pulls(self):
        strategy = MABNCStrategy(epsilon0=0.2)
        strategy.ensure_class(0)
        self.assertAlmostEqual(strategy.epsilon(0), 0.2)
        strategy.pulls[0][:] = 2
        self.assertAlmostEqual(strategy.epsilon(0), 0.2 * 768 / 1537)

    def test_no_pulls_explores(self):
        strategy = MABNCStrategy(epsilon0=0.0)
        decision = strategy.decide(context(), np.random.default_rng(0))
        self.assertEqual(decision.arm, EXPLORE)

    def test_greedy_ignores_unpulled_arms(self):
        strategy = MABNCStrategy(epsilon0=0.0)
        strategy.feedback(sample(40, 500.0))
        strategy.feedback(sample(41, 300.0))
        decision = strategy.decide(context(), np.random.default_rng(0))
        self.assertEqual((decision.config_id, decision.arm), (41, EXPLOIT))
        self.assertEqual(strategy.class_decisions(), {0: 41})

    def test_running_statistics(self):
        strategy = MABNCStrategy()
        for value in (100.0, 200.0, 300.0):
            strategy.feedback(sample(7, value))
        position = strategy.position[7]
        self.assertAlmostEqual(strategy.means[0][position], 200.0)
        self.assertAlmostEqual(strategy.arm_variance(0, 7), 10000.0)

    def test_invalid_epsilon(self):
        with self.assertRaises(ConfigError):
            MABNCStrategy(epsilon0=1.5)


class ConfigTronStrategyTests(SimpleTestCase):
    def test_decisions_carry_arm_names(self):
        strategy = make_strategy('ConfigTron', StrategyOptions(), seed=9)
        self.assertIsInstance(strategy, ConfigTronStrategy)
        rng = np.random.default_rng(1)
        arms = set()
        for _ in range(50):
            arms.add(strategy.decide(context(), rng).arm)
        self.assertTrue(arms <= {'LHC', 'GP', 'Epsilon', 'DTree', 'Default'})
        self.assertIn('LHC', arms)

    def test_first_decisions_follow_lhc(self):
        strategy = make_strategy('ConfigTron', StrategyOptions(ensemble=EnsembleParams(epsilon=0.0)), seed=9)
        rng = np.random.default_rng(1)
        ids = [strategy.decide(context(class_id=4), rng).config_id for _ in range(4)]
        self.assertEqual(ids, [c.config_id for c in lhc_sample(4, np.random.default_rng([9, 4]))])
