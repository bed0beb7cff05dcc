from django.core.management.base import BaseCommand

from core.utils.exceptions import ConfigError
from core.utils.harness import SWEEP_PARAMETERS, sweep

from ._options import add_experiment_arguments, build_config, config_error, ensure_parent


class Command(BaseCommand):
    help = 'Sensitivity runs over update interval, propagation delay, topology or epsilon'

    def add_arguments(self, parser):
        add_experiment_arguments(parser)
        parser.add_argument('--parameter', choices=SWEEP_PARAMETERS, required=True)
        parser.add_argument('--values', required=True, help='Comma-separated values')
        parser.add_argument('--table', help='Comparison CSV path')

    def handle(self, *args, **options):
        cfg = build_config(options, default_name='sweep.csv')
        values = [v.strip() for v in options['values'].split(',') if v.strip()]
        try:
            table = sweep(cfg, options['parameter'], values)
        except ConfigError as e:
            raise config_error(str(e)) from e
        except ValueError as e:
            raise config_error(f"Invalid sweep value: {e}") from e

        target = options['table'] or cfg.output.replace('.csv', '') + f".{options['parameter']}-sweep.csv"
        ensure_parent(target)
        table.to_csv(target, index=False, float_format='%.6f', lineterminator='\n')
        for _, row in table.iterrows():
            self.stdout.write(f"{options['parameter']}={row['value']:<12} median {row['p50']:.2%}  p95 {row['p95']:.2%}")
        self.stdout.write(self.style.SUCCESS(f"Sweep table written to {target}"))
