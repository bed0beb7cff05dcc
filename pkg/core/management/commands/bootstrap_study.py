from django.core.management.base import BaseCommand

from core.utils import settings as lab_settings
from core.utils.exceptions import ConfigError
from core.utils.harness import bootstrap_study, summarize_bootstrap_study
from core.utils.workload import WorkloadSpec

from ._options import config_error, default_output, ensure_parent


class Command(BaseCommand):
    help = 'Compare LHC, random and ranked bootstraps by GP steps to stop and to within 5% of optimal'

    def add_arguments(self, parser):
        parser.add_argument('--classes', type=int, help='Seeded (condition, website) classes')
        parser.add_argument('--profile', help='Experiment profile supplying the class count')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--kinds', default='lhc,random,ranked')
        parser.add_argument('--workload', help='Workload spec JSON for condition distributions')
        parser.add_argument('-o', '--output', default=None, help='Per-class CSV path')

    def handle(self, *args, **options):
        try:
            classes = options['classes'] or lab_settings.get_profile(options['profile'])['bootstrap_classes']
            seed = options['seed'] if options['seed'] is not None else lab_settings.get_lab_setting('LAB_DEFAULT_SEED')
            workload = WorkloadSpec.load(options['workload']) if options['workload'] else None
            kinds = [k.strip() for k in options['kinds'].split(',') if k.strip()]
            frame = bootstrap_study(classes, seed, kinds, workload)
        except ConfigError as e:
            raise config_error(str(e)) from e

        output = options['output'] or default_output('bootstrap_study.csv')
        ensure_parent(output)
        frame.to_csv(output, index=False, float_format='%.6f', lineterminator='\n')
        summary = summarize_bootstrap_study(frame)
        for _, row in summary.iterrows():
            self.stdout.write(f"{row['bootstrap']:<8} steps to stop {row['steps_to_stop']:.1f}  "
                              f"steps to within 5% {row['steps_to_within_5pct']:.1f}")
        self.stdout.write(self.style.SUCCESS(f"Bootstrap study over {classes} classes written to {output}"))
