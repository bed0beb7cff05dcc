from django.core.management.base import BaseCommand

from core.utils import settings as lab_settings
from core.utils.exceptions import ConfigError
from core.utils.workload import WorkloadSpec, generate_sessions, write_trace

from ._options import config_error, default_output, ensure_parent


class Command(BaseCommand):
    help = 'Generate a synthetic session trace (and optionally the spec that produced it)'

    def add_arguments(self, parser):
        parser.add_argument('--spec', help='Workload spec JSON to start from')
        parser.add_argument('--profile', help='Experiment profile: smoke, standard or large')
        parser.add_argument('--sessions', type=int)
        parser.add_argument('--clients', type=int)
        parser.add_argument('--seed', type=int)
        parser.add_argument('--spec-out', dest='spec_out', help='Write the resolved spec as JSON')
        parser.add_argument('-o', '--output', default=None, help='Trace CSV path')

    def handle(self, *args, **options):
        try:
            if options['spec']:
                spec = WorkloadSpec.load(options['spec'])
            else:
                profile = lab_settings.get_profile(options['profile'])
                spec = WorkloadSpec(session_count=profile['session_count'], client_count=profile['client_count'],
                                    arrival_rate_per_min=profile['arrival_rate_per_min'],
                                    seed=lab_settings.get_lab_setting('LAB_DEFAULT_SEED'))
            if options['sessions'] is not None:
                spec.session_count = options['sessions']
            if options['clients'] is not None:
                spec.client_count = options['clients']
            if options['seed'] is not None:
                spec.seed = options['seed']
            sessions = generate_sessions(spec)
        except ConfigError as e:
            raise config_error(str(e)) from e

        output = options['output'] or default_output('workload.csv')
        ensure_parent(output)
        write_trace(sessions, output)
        if options['spec_out']:
            ensure_parent(options['spec_out'])
            spec.save(options['spec_out'])
        changed = sum(1 for s in sessions if len(s.phases) > 1)
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {len(sessions)} sessions ({changed} with a network change) to {output}"))
