import dataclasses
import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from core.utils.config_space import (CongestionControl, HttpVersion, SPACE_SIZE, default_config,
                                     enumerate_space, knob_arrays, restricted_ids)
from core.utils.exceptions import ConfigError, TensorTooLargeError
from core.utils.plt_oracle import (ConditionGrid, OracleParams, PLTTensor, build_tensor, noise_factor,
                                   noiseless_plt, noiseless_plt_all, optimal_config, plt, ranked_config_ids)
from core.utils.workload import NetworkCondition, Website, default_catalog

CATALOG = {w.website_id: w for w in default_catalog()}
PARAMS = OracleParams()

conditions = st.builds(
    NetworkCondition,
    bandwidth_kbps=st.floats(min_value=50, max_value=200_000),
    rtt_ms=st.floats(min_value=1, max_value=2000),
    loss_rate=st.floats(min_value=0.0, max_value=0.5),
)
websites = st.sampled_from(default_catalog())


class NoiselessModelTests(SimpleTestCase):
    @settings(max_examples=60, deadline=None)
    @given(n=conditions, w=websites)
    def test_plt_is_positive_and_finite(self, n, w):
        values = noiseless_plt_all(n, w, PARAMS)
        self.assertEqual(values.shape, (SPACE_SIZE,))
        self.assertTrue(np.all(np.isfinite(values)))
        self.assertTrue(np.all(values > 0))

    @settings(max_examples=60, deadline=None)
    @given(n=conditions, w=websites)
    def test_slow_start_after_idle_is_inert(self, n, w):
        values = noiseless_plt_all(n, w, PARAMS)
        off = np.flatnonzero(knob_arrays()['slow_start_after_idle'] == 0)
        np.testing.assert_array_equal(values[off], values[off + 16])

    @settings(max_examples=80, deadline=None)
    @given(bandwidth=st.floats(min_value=50, max_value=100_000), rtt=st.floats(min_value=1, max_value=2000),
           w=websites)
    def test_doubling_bandwidth_never_hurts_without_loss(self, bandwidth, rtt, w):
        slow = noiseless_plt_all(NetworkCondition(bandwidth, rtt, 0.0), w, PARAMS)
        fast = noiseless_plt_all(NetworkCondition(2 * bandwidth, rtt, 0.0), w, PARAMS)
        self.assertTrue(np.all(fast <= slow * (1 + 1e-9) + 1e-9))

    def test_http_version_irrelevant_for_single_object_without_loss(self):
        n = NetworkCondition(8000, 100, 0.0)
        w = CATALOG['landing']
        h1 = default_config()
        h2 = dataclasses.replace(h1, http=HttpVersion.H2)
        self.assertEqual(noiseless_plt(h1, n, w, PARAMS), noiseless_plt(h2, n, w, PARAMS))

    def test_setup_dominates_tiny_page(self):
        n = NetworkCondition(8000, 100, 0.0)
        value = noiseless_plt(default_config(), n, CATALOG['landing'], PARAMS)
        self.assertGreaterEqual(value, 200.0)
        self.assertLess(value, 200.0 + 3 * 100.0)

    def test_deterministic(self):
        n = NetworkCondition(3000, 70, 0.01)
        a = noiseless_plt_all(n, CATALOG['news'], PARAMS)
        b = noiseless_plt_all(n, CATALOG['news'], PARAMS)
        np.testing.assert_array_equal(a, b)

    def test_single_config_matches_vector(self):
        n = NetworkCondition(1500, 200, 0.03)
        w = CATALOG['shop']
        values = noiseless_plt_all(n, w, PARAMS)
        for config in enumerate_space()[::37]:
            self.assertEqual(noiseless_plt(config, n, w, PARAMS), values[config.config_id])


class OracleParamsTests(SimpleTestCase):
    def test_invalid_params_rejected(self):
        with self.assertRaises(ConfigError):
            OracleParams(tail_spike_prob=1.5)
        with self.assertRaises(ConfigError):
            OracleParams(mss_bytes=0)
        with self.assertRaises(ConfigError):
            OracleParams.from_dict({'mss': 1500})

    def test_without_noise(self):
        self.assertFalse(PARAMS.noiseless)
        self.assertTrue(PARAMS.without_noise().noiseless)
        self.assertEqual(OracleParams.from_dict(PARAMS.to_dict()), PARAMS)


class NoiseTests(SimpleTestCase):
    def test_noise_off_equals_noiseless(self):
        p = PARAMS.without_noise()
        n = NetworkCondition(4000, 50, 0.002)
        rng = np.random.default_rng(1)
        expected = noiseless_plt(default_config(), n, CATALOG['blog'], p)
        for _ in range(5):
            self.assertEqual(plt(default_config(), n, CATALOG['blog'], p, rng), expected)

    def test_same_seed_same_draws(self):
        first, second = np.random.default_rng(5), np.random.default_rng(5)
        self.assertEqual([noise_factor(PARAMS, first) for _ in range(20)],
                         [noise_factor(PARAMS, second) for _ in range(20)])

    def test_lognormal_mean(self):
        p = PARAMS.replace(noise_sigma_log=0.1, tail_spike_prob=0.0)
        rng = np.random.default_rng(123)
        draws = np.array([noise_factor(p, rng) for _ in range(100_000)])
        self.assertAlmostEqual(draws.mean() / math.exp(0.1 ** 2 / 2), 1.0, delta=0.01)

    def test_spikes_only_increase(self):
        p = PARAMS.replace(noise_sigma_log=0.0, tail_spike_prob=1.0)
        rng = np.random.default_rng(9)
        self.assertTrue(all(noise_factor(p, rng) >= 1.0 for _ in range(200)))


class OptimalConfigTests(SimpleTestCase):
    def _brute_force(self, n, w, candidates=None):
        best_id, best_value = None, math.inf
        for config in enumerate_space():
            if candidates is not None and config.config_id not in candidates:
                continue
            value = noiseless_plt(config, n, w, PARAMS)
            if value < best_value:
                best_id, best_value = config.config_id, value
        return best_id, best_value

    def test_high_loss_matches_brute_force(self):
        n = NetworkCondition(2000, 300, 0.12)
        w = Website('heavy', 50, 4000, 50000)
        config, value = optimal_config(n, w, PARAMS)
        self.assertEqual((config.config_id, value), self._brute_force(n, w))
        self.assertLessEqual(value, noiseless_plt(default_config(), n, w, PARAMS))

    @settings(max_examples=25, deadline=None)
    @given(n=conditions, w=websites)
    def test_matches_brute_force(self, n, w):
        config, value = optimal_config(n, w, PARAMS)
        self.assertEqual(config.config_id, self._brute_force(n, w)[0])
        self.assertLessEqual(value, noiseless_plt(default_config(), n, w, PARAMS))

    def test_restricted_argmin_keeps_other_knobs_default(self):
        ids = restricted_ids(['cc'])
        n = NetworkCondition(2000, 300, 0.3)
        config, value = optimal_config(n, CATALOG['news'], PARAMS, ids)
        self.assertIn(config.config_id, set(int(i) for i in ids))
        self.assertEqual(dataclasses.replace(config, cc=CongestionControl.CUBIC), default_config())
        self.assertEqual(config.config_id, self._brute_force(n, CATALOG['news'], set(int(i) for i in ids))[0])

    def test_congestion_control_choice_depends_on_loss(self):
        w = CATALOG['news']
        clean, _ = optimal_config(NetworkCondition(8000, 100, 0.0), w, PARAMS)
        lossy, _ = optimal_config(NetworkCondition(8000, 100, 0.3), w, PARAMS)
        self.assertEqual(clean.cc, CongestionControl.CUBIC)
        self.assertEqual(lossy.cc, CongestionControl.VEGAS)

    def test_ranking_covers_candidates(self):
        grid = ConditionGrid((1000, 8000), (20, 200), (0.0, 0.05))
        ids = restricted_ids(['cc', 'icw'])
        ranked = ranked_config_ids(default_catalog()[:3], PARAMS, grid, ids)
        self.assertEqual(sorted(ranked), sorted(int(i) for i in ids))


class TensorTests(SimpleTestCase):
    def setUp(self):
        self.grid = ConditionGrid((1000, 8000), (20, 200), (0.0, 0.05))
        self.websites = [CATALOG['blog'], CATALOG['news']]
        self.tensor = build_tensor(self.grid, self.websites, PARAMS)

    def test_lookup_is_bit_exact(self):
        for cell in self.grid.cells():
            condition = self.grid.cell_condition(cell)
            for website in self.websites:
                expected = noiseless_plt_all(condition, website, PARAMS)
                np.testing.assert_array_equal(self.tensor.cell_vector(cell, website.website_id), expected)
        config = enumerate_space()[300]
        cell = (1, 0, 1)
        self.assertEqual(self.tensor.lookup(config, cell, 'news'),
                         noiseless_plt(config, self.grid.cell_condition(cell), CATALOG['news'], PARAMS))

    def test_nearest_cell(self):
        self.assertEqual(self.grid.nearest_cell(NetworkCondition(1000, 20, 0.0)), (0, 0, 0))
        self.assertEqual(self.grid.nearest_cell(NetworkCondition(7000, 150, 0.04)), (1, 1, 1))

    def test_unknown_website(self):
        with self.assertRaises(KeyError):
            self.tensor.lookup(0, (0, 0, 0), 'video')

    def test_tensor_is_immutable(self):
        with self.assertRaises(ValueError):
            self.tensor.values[0, 0, 0, 0, 0] = 1.0

    def test_save_and_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            array_path, sidecar_path = self.tensor.save(os.path.join(tmp, 'oracle'))
            self.assertTrue(os.path.exists(sidecar_path))
            loaded = PLTTensor.load(array_path)
            self.assertEqual(loaded.sha256(), self.tensor.sha256())
            self.assertEqual(loaded.grid, self.grid)

            np.save(array_path, np.ones_like(self.tensor.values))
            with self.assertRaises(ValueError):
                PLTTensor.load(array_path)

    def test_oversized_tensor_rejected(self):
        grid = ConditionGrid(tuple(range(100, 160)), tuple(range(1, 61)), tuple(i / 100 for i in range(40)))
        with self.assertRaises(TensorTooLargeError):
            build_tensor(grid, [CATALOG['blog']], PARAMS)
