import numpy as np
from django.test import SimpleTestCase

from core.utils.bandit_controller import (Arm, BanditController, EnsembleParams, Phase, PerformanceSample,
                                          arm_contributions)
from core.utils.config_space import lhc_sample
from core.utils.exceptions import ConfigError, EmptyDataError
from core.utils.netclass import FeatureVector
from core.utils.plt_oracle import OracleParams, noiseless_plt_all
from core.utils.workload import NetworkCondition, default_catalog

SLOW = FeatureVector(500, 200, 0.02, 1000.0)
FAST = FeatureVector(50000, 10, 0.0, 1000.0)


def sample(class_id, config_id, plt_ms, features=SLOW, ts_ms=0, arm='GP'):
    return PerformanceSample('c1', class_id, features, 'news', config_id, plt_ms, ts_ms, arm)


class EnsembleParamsTests(SimpleTestCase):
    def test_invalid_params_rejected(self):
        with self.assertRaises(ConfigError):
            EnsembleParams(epsilon=1.5)
        with self.assertRaises(ConfigError):
            EnsembleParams(bootstrap='sobol')
        with self.assertRaises(ConfigError):
            BanditController(EnsembleParams(bootstrap='ranked'))

    def test_gp_params_follow_ensemble(self):
        gp = EnsembleParams(init_sample=3, min_sample_tested=9).gp_params()
        self.assertEqual((gp.init_sample, gp.min_sample_tested), (3, 9))


class OnSessionTests(SimpleTestCase):
    def test_new_class_starts_with_lhc_quartet(self):
        controller = BanditController(EnsembleParams(epsilon=0.0), seed=11)
        rng = np.random.default_rng(0)
        decisions = [controller.on_session(3, SLOW, rng) for _ in range(4)]
        expected = [c.config_id for c in lhc_sample(4, np.random.default_rng([11, 3]))]
        self.assertEqual([d.config_id for d in decisions], expected)
        self.assertTrue(all(d.arm == Arm.LHC for d in decisions))
        self.assertEqual(controller.state(3).phase, Phase.GP_EXPLORE)

    def test_full_epsilon_is_uniform_random(self):
        controller = BanditController(EnsembleParams(epsilon=1.0))
        rng = np.random.default_rng(1)
        decisions = [controller.on_session(0, SLOW, rng) for _ in range(3000)]
        self.assertTrue(all(d.arm == Arm.EPSILON for d in decisions))
        self.assertGreater(len({d.config_id for d in decisions}), 600)

    def test_steady_class_follows_tree(self):
        controller = BanditController(EnsembleParams(epsilon=0.0, use_gp=False))
        for _ in range(3):
            controller.on_feedback(sample(0, 5, 100.0))
        controller.update_models()
        rng = np.random.default_rng(2)
        decisions = {controller.on_session(0, SLOW, rng) for _ in range(5)}
        self.assertEqual({(d.config_id, d.arm) for d in decisions}, {(5, Arm.DTREE)})

    def test_tree_seeds_first_bootstrap_slot_of_new_classes(self):
        controller = BanditController(EnsembleParams(epsilon=0.0), seed=4)
        early = controller.state(1)
        controller.on_feedback(sample(0, 42, 100.0))
        controller.update_models()
        late = controller.state(2)
        self.assertFalse(early.dt_seeded)
        self.assertTrue(late.dt_seeded)

        rng = np.random.default_rng(3)
        decisions = [controller.on_session(2, SLOW, rng) for _ in range(4)]
        self.assertEqual(decisions[0].config_id, 42)
        self.assertEqual([d.arm for d in decisions], [Arm.DTREE, Arm.LHC, Arm.LHC, Arm.LHC])
        self.assertEqual(controller.state(2).phase, Phase.GP_EXPLORE)

    def test_inflight_limit_falls_back_to_exploitation(self):
        controller = BanditController(EnsembleParams(epsilon=0.0, max_inflight=2))
        rng = np.random.default_rng(5)
        decisions = [controller.on_session(0, SLOW, rng) for _ in range(3)]
        self.assertEqual([d.arm for d in decisions], [Arm.LHC, Arm.LHC, Arm.DEFAULT])

    def test_converges_to_fixed_incumbent_without_noise(self):
        condition = NetworkCondition(3000, 80, 0.01)
        values = noiseless_plt_all(condition, default_catalog()[3], OracleParams())
        features = FeatureVector(3000, 80, 0.01, 1000.0)
        controller = BanditController(EnsembleParams(epsilon=0.0), seed=6)
        rng = np.random.default_rng(6)
        phases, decisions = [], []
        for step in range(60):
            decision = controller.on_session(0, features, rng)
            controller.on_feedback(sample(0, decision.config_id, float(values[decision.config_id]),
                                          features, step, decision.arm.value))
            phases.append(controller.state(0).phase)
            decisions.append(decision)
        order = [Phase.BOOTSTRAP, Phase.GP_EXPLORE, Phase.STEADY]
        self.assertEqual([order.index(p) for p in phases], sorted(order.index(p) for p in phases))
        self.assertEqual(phases[-1], Phase.STEADY)
        self.assertEqual(len({d.config_id for d in decisions[-10:]}), 1)
        self.assertEqual(decisions[-1].config_id, controller.state(0).best_config)

    def test_same_seed_same_decisions(self):
        def run():
            controller = BanditController(EnsembleParams(epsilon=0.3), seed=8)
            rng = np.random.default_rng(8)
            out = []
            for step in range(30):
                d = controller.on_session(step % 3, SLOW, rng)
                controller.on_feedback(sample(step % 3, d.config_id, 100.0 + d.config_id, ts_ms=step))
                out.append((d.config_id, d.arm))
            return out
        self.assertEqual(run(), run())


class FeedbackTests(SimpleTestCase):
    def test_single_sample_sets_incumbent(self):
        controller = BanditController()
        controller.on_feedback(sample(0, 17, 250.0))
        self.assertEqual(controller.state(0).best_config, 17)

    def test_lowest_mean_wins(self):
        controller = BanditController()
        controller.on_feedback(sample(0, 1, 400.0))
        controller.on_feedback(sample(0, 2, 300.0))
        self.assertEqual(controller.state(0).best_config, 2)

    def test_steady_incumbent_switches_on_first_clear_gain(self):
        controller = BanditController(EnsembleParams(use_gp=False))
        controller.on_feedback(sample(0, 1, 400.0))
        self.assertEqual(controller.state(0).phase, Phase.STEADY)
        controller.on_feedback(sample(0, 2, 350.0))
        self.assertEqual(controller.state(0).best_config, 2)

    def test_marginal_gain_keeps_incumbent(self):
        controller = BanditController(EnsembleParams(use_gp=False))
        controller.on_feedback(sample(0, 1, 400.0))
        for _ in range(3):
            controller.on_feedback(sample(0, 2, 380.0))
        self.assertEqual(controller.state(0).best_config, 1)

    def test_non_positive_plt_rejected(self):
        with self.assertRaises(ValueError):
            sample(0, 1, 0.0)


class UpdateModelsTests(SimpleTestCase):
    def test_no_data(self):
        with self.assertRaises(EmptyDataError):
            BanditController().update_models()

    def test_single_class_tree_is_constant(self):
        controller = BanditController()
        controller.on_feedback(sample(0, 9, 120.0))
        update = controller.update_models()
        self.assertEqual(update.decisions, {0: 9})
        self.assertEqual(update.tree.predict_one(FAST.active()), 9)
        self.assertEqual(update.processed_samples, 1)

    def test_tree_separates_classes(self):
        controller = BanditController()
        for _ in range(5):
            controller.on_feedback(sample(0, 11, 900.0, SLOW))
            controller.on_feedback(sample(1, 22, 90.0, FAST))
        update = controller.update_models()
        self.assertEqual(update.tree.predict_one(SLOW.active()), 11)
        self.assertEqual(update.tree.predict_one(FAST.active()), 22)
        payload = update.payload({'version': 1})
        self.assertEqual(payload['decisions'], {'0': 11, '1': 22})
        self.assertIsNotNone(payload['tree'])

    def test_versions_increase(self):
        controller = BanditController()
        controller.on_feedback(sample(0, 9, 120.0))
        first = controller.update_models()
        controller.on_feedback(sample(0, 9, 110.0))
        second = controller.update_models()
        self.assertEqual(second.version, first.version + 1)
        self.assertEqual(second.processed_samples, 1)

    def test_without_tree_arm(self):
        controller = BanditController(EnsembleParams(use_dt=False))
        controller.on_feedback(sample(0, 9, 120.0))
        update = controller.update_models()
        self.assertIsNone(update.tree)
        self.assertEqual(update.decisions, {0: 9})


class DriftTests(SimpleTestCase):
    def _steady(self, plts):
        controller = BanditController(EnsembleParams(use_gp=False, drift_reset=True))
        for step, value in enumerate(plts):
            controller.on_feedback(sample(0, 3, float(value), ts_ms=step))
        return controller

    def test_level_shift_resets_class(self):
        rng = np.random.default_rng(9)
        plts = np.concatenate([100 * np.exp(rng.normal(0, 0.05, 30)), 300 * np.exp(rng.normal(0, 0.05, 30))])
        controller = self._steady(plts)
        update = controller.update_models()
        self.assertEqual(update.reset_classes, (0,))
        state = controller.state(0)
        self.assertEqual(state.phase, Phase.GP_EXPLORE)
        self.assertEqual(state.sample_count, 60)
        self.assertEqual(state.resets, 1)

    def test_stationary_stream_keeps_class(self):
        rng = np.random.default_rng(10)
        controller = self._steady(100 * np.exp(rng.normal(0, 0.05, 60)))
        self.assertEqual(controller.update_models().reset_classes, ())
        self.assertEqual(controller.state(0).phase, Phase.STEADY)


class ArmContributionTests(SimpleTestCase):
    def test_single_arm(self):
        fractions = arm_contributions([(5, 'GP'), (6, 'GP')], [])
        self.assertEqual(fractions, [{'GP': 1.0}])

    def test_buckets_and_sums(self):
        records = [(5, Arm.LHC), (15, 'GP'), (16, 'DTree'), (17, 'DTree'), (25, 'Epsilon')]
        fractions = arm_contributions(records, [10, 20, 30])
        self.assertEqual(len(fractions), 4)
        self.assertEqual(fractions[0], {'LHC': 1.0})
        self.assertAlmostEqual(fractions[1]['DTree'], 2 / 3)
        self.assertEqual(fractions[3], {})
        for bucket in fractions[:3]:
            self.assertAlmostEqual(sum(bucket.values()), 1.0, delta=1e-9)
