import json
import os
import tempfile
from io import StringIO

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from core.models import ExperimentRun
from core.utils.workload import ingest_trace


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        override = override_settings(LAB_OUTPUT_DIR=self.tmp.name, LAB_DEFAULT_PROFILE='smoke')
        override.enable()
        self.addCleanup(override.disable)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def call(self, *args, **kwargs):
        out = StringIO()
        call_command(*args, stdout=out, **kwargs)
        return out.getvalue()

    def assertConfigError(self, *args, **kwargs):
        with self.assertRaises(CommandError) as ctx:
            self.call(*args, **kwargs)
        self.assertEqual(ctx.exception.returncode, 2)
        return ctx.exception


class GenWorkloadCommandTests(CommandTestCase):
    def test_writes_trace_and_spec(self):
        out = self.call('gen_workload', '--sessions', '25', '--clients', '5', '--seed', '3',
                        '-o', self.path('trace.csv'), '--spec-out', self.path('spec.json'))
        self.assertIn('Wrote 25 sessions', out)
        self.assertEqual(len(ingest_trace(self.path('trace.csv'))), 25)
        with open(self.path('spec.json'), encoding='utf-8') as f:
            spec = json.load(f)
        self.assertEqual(spec['session_count'], 25)
        self.assertEqual(spec['seed'], 3)

    def test_unknown_profile_exits_with_config_error(self):
        self.assertConfigError('gen_workload', '--profile', 'huge', '-o', self.path('trace.csv'))
        self.assertFalse(os.path.exists(self.path('trace.csv')))


class RunCommandTests(CommandTestCase):
    def test_run_records_experiment(self):
        output = self.path('run.csv')
        out = self.call('run', '--algo', 'bonc', '--sessions', '30', '--nc-k', '2', '-o', output)
        self.assertIn('BONC: 30 sessions', out)
        self.assertTrue(os.path.exists(output))
        run = ExperimentRun.objects.get()
        self.assertEqual(run.algo, 'BONC')
        self.assertEqual(run.session_count, 30)
        self.assertEqual(run.output_path, output)
        self.assertEqual(len(run.config_hash), 64)

    def test_run_from_trace(self):
        trace = self.path('trace.csv')
        self.call('gen_workload', '--sessions', '20', '--clients', '4', '-o', trace)
        output = self.path('from_trace.csv')
        self.call('run', '--algo', 'default', '--trace', trace, '--nc-k', '2', '-o', output)
        self.assertEqual(len(pd.read_csv(output)), 20)

    def test_unknown_algorithm_exits_with_config_error(self):
        error = self.assertConfigError('run', '--algo', 'nope', '-o', self.path('x.csv'))
        self.assertIn('Unknown algorithm', str(error))
        self.assertFalse(os.path.exists(self.path('x.csv')))
        self.assertEqual(ExperimentRun.objects.count(), 0)

    def test_bad_masks_and_paths_exit_with_config_error(self):
        self.assertConfigError('run', '--feature-mask', 'jitter', '-o', self.path('x.csv'))
        self.assertConfigError('run', '--knob-mask', 'mtu', '-o', self.path('x.csv'))
        self.assertConfigError('run', '--trace', self.path('missing.csv'), '-o', self.path('x.csv'))
        self.assertConfigError('run', '--drift-param', 'bbr_share', '-o', self.path('x.csv'))

    def test_config_file_with_unknown_field(self):
        config = self.path('experiment.json')
        with open(config, 'w', encoding='utf-8') as f:
            json.dump({'algo': 'BO', 'warp_factor': 9}, f)
        self.assertConfigError('run', '--config', config)


class ReportCommandTests(CommandTestCase):
    def test_report_over_two_runs(self):
        for algo in ('default', 'optimal'):
            self.call('run', '--algo', algo, '--sessions', '30', '--nc-k', '2', '-o', self.path(f"{algo}.csv"))
        prefix = self.path('report')
        out = self.call('report', self.path('default.csv'), self.path('optimal.csv'), '-o', prefix, '--no-svg')
        self.assertIn('Wrote 4 report files', out)
        table = pd.read_csv(f"{prefix}.percentiles.csv")
        self.assertEqual(sorted(table['algo']), ['Default', 'Optimal'])
        default_row = table[table['algo'] == 'Default'].iloc[0]
        self.assertAlmostEqual(default_row['p50'], 0.0)

    def test_missing_results_exit_with_config_error(self):
        self.assertConfigError('report', self.path('missing.csv'))


class OracleCommandTests(CommandTestCase):
    def test_malformed_parameter_exits_with_config_error(self):
        self.assertConfigError('build_oracle', '--param', 'bbr_share', '-o', self.path('tensor'))
        self.assertConfigError('build_oracle', '--param', 'bbr_share=lots', '-o', self.path('tensor'))


class StudyCommandTests(CommandTestCase):
    def test_sweep_writes_table(self):
        table = self.path('sweep_table.csv')
        self.call('sweep', '--algo', 'default', '--sessions', '20', '--nc-k', '2', '--parameter', 'delay_ms',
                  '--values', '0,1000', '--table', table, '-o', self.path('sweep.csv'))
        frame = pd.read_csv(table)
        self.assertEqual(list(frame['value']), [0, 1000])

    def test_ablation_writes_table(self):
        table = self.path('ablation_table.csv')
        self.call('ablate', '--algo', 'default', '--sessions', '20', '--nc-k', '2', '--axis', 'features',
                  '--subset', 'bandwidth,rtt', '--subset', 'all', '--table', table, '-o', self.path('ablation.csv'))
        frame = pd.read_csv(table)
        self.assertEqual(list(frame['value']), ['bandwidth,rtt', 'all'])

    def test_bootstrap_study_unknown_kind(self):
        self.assertConfigError('bootstrap_study', '--classes', '1', '--kinds', 'sobol')

    def test_bootstrap_study_writes_rows(self):
        output = self.path('study.csv')
        self.call('bootstrap_study', '--classes', '2', '--kinds', 'lhc,random', '-o', output)
        self.assertEqual(len(pd.read_csv(output)), 4)


class LabStatusCommandTests(CommandTestCase):
    def test_reports_components(self):
        out = self.call('lab_status')
        self.assertIn('numpy', out)
        self.assertIn('Recorded runs: 0', out)
        self.assertIn('Default profile: smoke', out)
