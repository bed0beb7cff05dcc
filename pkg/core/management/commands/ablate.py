from django.core.management.base import BaseCommand

from core.utils.exceptions import ConfigError
from core.utils.harness import ablate

from ._options import add_experiment_arguments, build_config, config_error, ensure_parent, parse_subsets


class Command(BaseCommand):
    help = 'One run per feature or knob subset; compares improvement percentiles'

    def add_arguments(self, parser):
        add_experiment_arguments(parser)
        parser.add_argument('--axis', choices=['features', 'knobs'], required=True)
        parser.add_argument('--subset', action='append', required=True,
                            help="Comma list of names, 'all' or 'none'; repeatable")
        parser.add_argument('--table', help='Comparison CSV path')

    def handle(self, *args, **options):
        cfg = build_config(options, default_name='ablation.csv')
        try:
            table = ablate(cfg, options['axis'], parse_subsets(options['subset']))
        except ConfigError as e:
            raise config_error(str(e)) from e

        target = options['table'] or cfg.output.replace('.csv', '') + f".{options['axis']}-ablation.csv"
        ensure_parent(target)
        table.to_csv(target, index=False, float_format='%.6f', lineterminator='\n')
        for _, row in table.iterrows():
            self.stdout.write(f"{row['value']:<40} median {row['p50']:.2%}  p95 {row['p95']:.2%}")
        self.stdout.write(self.style.SUCCESS(f"Ablation table written to {target}"))
