from django.core.management.base import BaseCommand, CommandError

from core.models import ExperimentRun
from core.utils import settings as lab_settings
from core.utils.system_status import check_system_status


class Command(BaseCommand):
    help = 'Check numerical dependencies, output directories and recorded runs'

    def handle(self, *args, **options):
        status = check_system_status([lab_settings.get_lab_setting('LAB_OUTPUT_DIR')])
        for component, state in status['components'].items():
            self.stdout.write(f"{component:<40} {state}")
        self.stdout.write(f"Report formats: {', '.join(status['report_formats'])}")
        self.stdout.write(f"Default profile: {lab_settings.get_lab_setting('LAB_DEFAULT_PROFILE')}")
        self.stdout.write(f"Recorded runs: {ExperimentRun.objects.count()}")
        if status['status'] == 'error':
            raise CommandError('; '.join(status['errors']))
        if status['errors']:
            for error in status['errors']:
                self.stdout.write(self.style.WARNING(error))
        else:
            self.stdout.write(self.style.SUCCESS(f"Lab status: {status['status']}"))
