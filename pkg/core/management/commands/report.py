from django.core.management.base import BaseCommand

from core.utils.exceptions import ConfigError, EmptyDataError
from core.utils.report import PERCENTILES, build_report, write_report

from ._options import config_error, default_output


class Command(BaseCommand):
    help = 'Percentiles, CDF points, convergence and arm contributions from results files'

    def add_arguments(self, parser):
        parser.add_argument('results', nargs='+', help='Results CSV files from run')
        parser.add_argument('-o', '--output', default=None, help='Output prefix for report files')
        parser.add_argument('--no-svg', action='store_true', dest='no_svg')
        parser.add_argument('--pdf', action='store_true')

    def handle(self, *args, **options):
        try:
            report = build_report(options['results'])
        except (ConfigError, EmptyDataError) as e:
            raise config_error(str(e)) from e

        prefix = options['output'] or default_output('report')
        written = write_report(report, prefix, svg=not options['no_svg'], pdf=options['pdf'])
        for _, row in report.percentiles.iterrows():
            values = ' '.join(f"p{q}={row[f'p{q}']:.1%}" for q in PERCENTILES)
            self.stdout.write(f"{row['algo']:<16} {values}")
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(written)} report files with prefix {prefix}"))
