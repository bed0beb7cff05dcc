import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from core.utils import netclass
from core.utils.exceptions import SampleSizeError
from core.utils.netclass import (FeatureVector, choose_k, class_spread, export_rules, feature_matrix, fit,
                                 fit_matrix, import_rules, mask_from_names)

CENTERS = [(500.0, 200.0), (5000.0, 50.0), (50000.0, 10.0)]


def blobs(rng, per_blob=40, centers=CENTERS, mask=netclass.ALL_FEATURES):
    samples, truth = [], []
    for label, (bandwidth, rtt) in enumerate(centers):
        for _ in range(per_blob):
            samples.append(FeatureVector(
                bandwidth_kbps=bandwidth * float(np.exp(rng.normal(0, 0.05))),
                rtt_ms=rtt * float(np.exp(rng.normal(0, 0.05))),
                loss_rate=0.01,
                mask=mask,
            ))
            truth.append(label)
    return samples, np.array(truth)


class FeatureVectorTests(SimpleTestCase):
    def test_invalid_values_rejected(self):
        with self.assertRaises(ValueError):
            FeatureVector(0, 50, 0.0)
        with self.assertRaises(ValueError):
            FeatureVector(1000, 50, -0.1)
        with self.assertRaises(ValueError):
            FeatureVector(1000, 50, 0.0, mask=(False, False, False, False))

    def test_mask_selects_features(self):
        f = FeatureVector(1000, 50, 0.02, 10.0)
        np.testing.assert_allclose(f.active((True, False, True, False)), [np.log(1000), 0.02])

    def test_mask_from_names(self):
        self.assertEqual(mask_from_names(['rtt', 'loss']), (False, True, True, False))
        self.assertEqual(mask_from_names(None), netclass.ALL_FEATURES)
        with self.assertRaises(ValueError):
            mask_from_names(['jitter'])
        with self.assertRaises(ValueError):
            mask_from_names([])


class FitTests(SimpleTestCase):
    def test_blobs_recovered(self):
        samples, truth = blobs(np.random.default_rng(0))
        model = fit(samples, 3, np.random.default_rng(1))
        labels = np.array([model.classify(s) for s in samples])
        for blob in range(3):
            self.assertEqual(len(set(labels[truth == blob])), 1)
        self.assertEqual(len(set(labels)), 3)

    def test_inertia_close_to_best_restart(self):
        samples, _ = blobs(np.random.default_rng(2))
        matrix = feature_matrix(samples, netclass.ALL_FEATURES)
        model = fit_matrix(matrix, 3, np.random.default_rng(3))
        best = min(fit_matrix(matrix, 3, np.random.default_rng(seed)).inertia for seed in range(100, 120))
        self.assertLessEqual(model.inertia, 1.05 * best)

    def test_same_seed_same_model(self):
        samples, _ = blobs(np.random.default_rng(4))
        a = fit(samples, 3, np.random.default_rng(7))
        b = fit(samples, 3, np.random.default_rng(7))
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_k_larger_than_samples_rejected(self):
        samples, _ = blobs(np.random.default_rng(0), per_blob=1)
        with self.assertRaises(SampleSizeError):
            fit(samples, 4, np.random.default_rng(0))

    def test_identical_samples_collapse_to_one_class(self):
        samples = [FeatureVector(1000.0, 50.0, 0.01)] * 10
        with self.assertLogs('core.utils.netclass', level='WARNING'):
            model = fit(samples, 3, np.random.default_rng(0))
        self.assertEqual(model.k, 1)
        self.assertEqual(model.classify(samples[0]), 0)

    def test_repeated_rows_give_distinct_centroids(self):
        samples = [FeatureVector(1000.0, 50.0, 0.01)] * 5 + [FeatureVector(8000.0, 20.0, 0.0)] * 5
        for seed in range(10):
            model = fit(samples, 3, np.random.default_rng(seed))
            self.assertEqual(model.k, 2)
            self.assertEqual(len(np.unique(model.centroids, axis=0)), 2)
            self.assertNotEqual(model.classify(samples[0]), model.classify(samples[-1]))

    def test_classify_matrix_matches_classify(self):
        samples, _ = blobs(np.random.default_rng(5))
        model = fit(samples, 3, np.random.default_rng(5))
        matrix = feature_matrix(samples, model.mask)
        np.testing.assert_array_equal(model.classify_matrix(matrix), [model.classify(s) for s in samples])

    def test_masked_model_ignores_inactive_features(self):
        mask = mask_from_names(['bandwidth'])
        samples, _ = blobs(np.random.default_rng(6), mask=mask)
        model = fit(samples, 3, np.random.default_rng(6))
        self.assertEqual(model.feature_names, ('bandwidth',))
        a = FeatureVector(5000, 10, 0.0, mask=mask)
        b = FeatureVector(5000, 900, 0.3, mask=mask)
        self.assertEqual(model.classify(a), model.classify(b))

    @settings(max_examples=30, deadline=None)
    @given(bandwidth=st.floats(min_value=100, max_value=100_000), rtt=st.floats(min_value=1, max_value=1000),
           loss=st.floats(min_value=0.0, max_value=0.5))
    def test_classify_returns_a_valid_class(self, bandwidth, rtt, loss):
        samples, _ = blobs(np.random.default_rng(8), per_blob=10)
        model = fit(samples, 3, np.random.default_rng(8))
        self.assertIn(model.classify(FeatureVector(bandwidth, rtt, loss)), range(3))


class ChooseKTests(SimpleTestCase):
    def test_bimodal_performance_gives_two_classes(self):
        rng = np.random.default_rng(10)
        samples, truth = blobs(rng, centers=CENTERS[:1] + CENTERS[2:])
        plts = np.where(truth == 0, 1000.0, 100.0) * np.exp(rng.normal(0, 0.02, len(truth)))
        self.assertEqual(choose_k(samples, plts, np.random.default_rng(0), cv_threshold=0.25, k_max=6), 2)

    def test_falls_back_to_k_max(self):
        rng = np.random.default_rng(11)
        samples, _ = blobs(rng)
        plts = np.exp(rng.normal(5, 1.5, len(samples)))
        self.assertEqual(choose_k(samples, plts, np.random.default_rng(0), cv_threshold=0.05, k_max=3), 3)

    def test_identical_conditions_take_first_candidate(self):
        samples = [FeatureVector(2000.0, 40.0, 0.0)] * 12
        self.assertEqual(choose_k(samples, [500.0] * 12, np.random.default_rng(0)), 2)

    def test_length_mismatch_rejected(self):
        samples, _ = blobs(np.random.default_rng(0), per_blob=2)
        with self.assertRaises(ValueError):
            choose_k(samples, [1.0], np.random.default_rng(0))


class RuleExportTests(SimpleTestCase):
    def test_imported_rules_classify_identically(self):
        samples, _ = blobs(np.random.default_rng(12))
        model = fit(samples, 3, np.random.default_rng(12))
        rules = export_rules(model)
        restored = import_rules(rules)
        self.assertEqual(restored.version, rules['version'])
        self.assertEqual([restored.classify(s) for s in samples], [model.classify(s) for s in samples])

    def test_versions_increase(self):
        samples, _ = blobs(np.random.default_rng(13), per_blob=5)
        model = fit(samples, 2, np.random.default_rng(13))
        self.assertLess(export_rules(model)['version'], export_rules(model)['version'])

    def test_inconsistent_rules_rejected(self):
        samples, _ = blobs(np.random.default_rng(14), per_blob=5)
        rules = export_rules(fit(samples, 2, np.random.default_rng(14)))
        rules['feature_names'] = ['bandwidth']
        with self.assertRaises(ValueError):
            import_rules(rules)


class ClassSpreadTests(SimpleTestCase):
    def test_diverging_classes(self):
        spread, diverging = class_spread([0, 0, 1, 1], [1.0, 1.0, 1.0, 3.0], threshold=0.25)
        self.assertEqual(spread[0], 0.0)
        self.assertAlmostEqual(spread[1], 0.5)
        self.assertEqual(diverging, [1])

    def test_empty_input(self):
        self.assertEqual(class_spread([], []), ({}, []))
