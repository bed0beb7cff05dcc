import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from core.utils import config_space
from core.utils.config_space import (CongestionControl, Configuration, HttpVersion, Pacing, SPACE_SIZE,
                                     default_config, encode, encoded_space, enumerate_space, knob_counts,
                                     lhc_sample, random_sample, restricted_ids)
from core.utils.exceptions import SampleSizeError


class EnumerationTests(SimpleTestCase):
    def test_space_has_768_distinct_configs_in_id_order(self):
        space = enumerate_space()
        self.assertEqual(len(space), 768)
        self.assertEqual(SPACE_SIZE, 768)
        self.assertEqual([c.config_id for c in space], list(range(768)))
        self.assertEqual(len(set(space)), 768)

    def test_first_and_last_configs(self):
        first, last = enumerate_space()[0], enumerate_space()[767]
        self.assertEqual(first, Configuration(CongestionControl.CUBIC, 1, 0, 0, 0, Pacing.PFIFO_FAST, HttpVersion.H1_1))
        self.assertEqual(last, Configuration(CongestionControl.BBR, 30, 1, 1, 1, Pacing.FQ, HttpVersion.H2))

    def test_default_config(self):
        default = default_config()
        self.assertEqual(default.cc, CongestionControl.CUBIC)
        self.assertEqual(default.icw, 10)
        self.assertEqual((default.slow_start_after_idle, default.low_latency, default.autocorking), (1, 0, 1))
        self.assertEqual(default.pacing, Pacing.PFIFO_FAST)
        self.assertEqual(default.http, HttpVersion.H1_1)
        self.assertEqual(default.config_id, 84)

    def test_invalid_knob_value_rejected(self):
        with self.assertRaises(ValueError):
            Configuration(icw=12)
        with self.assertRaises(ValueError):
            Configuration(cc='Westwood')
        with self.assertRaises(ValueError):
            config_space.config_from_id(768)

    def test_string_round_trip_of_default(self):
        text = default_config().to_string()
        self.assertEqual(text, 'cc=Cubic,icw=10,ssai=1,ll=0,ac=1,pacing=PfifoFast,http=H1_1')
        self.assertEqual(Configuration.from_string(text), default_config())


class EncodingTests(SimpleTestCase):
    def test_default_encoding(self):
        np.testing.assert_allclose(encode(default_config()), [1, 0, 0, 0, 9 / 29, 1, 0, 1, 0, 0])

    def test_minimum_icw_maps_to_zero(self):
        config = Configuration(CongestionControl.BBR, 1, 0, 0, 0, Pacing.PFIFO_FAST, HttpVersion.H1_1)
        np.testing.assert_array_equal(encode(config), [0, 0, 0, 1, 0, 0, 0, 0, 0, 0])

    def test_encoding_is_injective(self):
        rows = {tuple(row) for row in encoded_space()}
        self.assertEqual(len(rows), SPACE_SIZE)


class SamplingTests(SimpleTestCase):
    def test_six_samples_cover_every_icw(self):
        samples = lhc_sample(6, np.random.default_rng(3))
        self.assertEqual(sorted(c.icw for c in samples), [1, 4, 10, 16, 20, 30])

    def test_four_samples_cover_every_cc_and_balance_binaries(self):
        samples = lhc_sample(4, np.random.default_rng(11))
        self.assertEqual(set(knob_counts(samples, 'cc').values()), {1})
        self.assertEqual(len(knob_counts(samples, 'cc')), 4)
        self.assertEqual(knob_counts(samples, 'autocorking'), {0: 2, 1: 2})

    def test_full_sample_is_a_permutation(self):
        samples = lhc_sample(768, np.random.default_rng(0))
        self.assertEqual(sorted(c.config_id for c in samples), list(range(768)))

    def test_same_seed_same_sample(self):
        a = lhc_sample(9, np.random.default_rng(5))
        b = lhc_sample(9, np.random.default_rng(5))
        self.assertEqual(a, b)

    def test_oversized_sample_rejected(self):
        with self.assertRaisesMessage(SampleSizeError, 'sample exceeds space'):
            lhc_sample(769, np.random.default_rng(0))
        with self.assertRaises(SampleSizeError):
            lhc_sample(3, np.random.default_rng(0), knobs=('autocorking',))

    @settings(max_examples=40, deadline=None)
    @given(k=st.integers(min_value=1, max_value=60), seed=st.integers(min_value=0, max_value=10_000))
    def test_lhc_counts_are_balanced(self, k, seed):
        samples = lhc_sample(k, np.random.default_rng(seed))
        self.assertEqual(len({c.config_id for c in samples}), k)
        for knob, values in config_space.KNOB_VALUES.items():
            counts = knob_counts(samples, knob)
            ceiling = -(-k // len(values))
            for value in values:
                self.assertLessEqual(abs(counts.get(value, 0) - ceiling), 1)

    def test_random_sample_is_distinct(self):
        samples = random_sample(20, np.random.default_rng(1))
        self.assertEqual(len({c.config_id for c in samples}), 20)


class RestrictionTests(SimpleTestCase):
    def test_cc_only_subspace(self):
        ids = restricted_ids(['cc'])
        self.assertEqual(len(ids), 4)
        configs = [config_space.config_from_id(i) for i in ids]
        self.assertEqual({c.cc for c in configs}, set(CongestionControl))
        self.assertTrue(all(c.icw == 10 for c in configs))

    def test_empty_knob_set_is_the_default(self):
        self.assertEqual(list(restricted_ids([])), [default_config().config_id])

    def test_lhc_respects_knob_restriction(self):
        samples = lhc_sample(4, np.random.default_rng(2), knobs=['cc', 'http'])
        allowed = set(int(i) for i in restricted_ids(['cc', 'http']))
        self.assertTrue(all(c.config_id in allowed for c in samples))
