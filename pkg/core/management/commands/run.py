import logging

from django.core.management.base import BaseCommand, CommandError

from core.models import ExperimentRun
from core.utils.exceptions import ConfigError, LabError
from core.utils.harness import run_experiment

from ._options import add_experiment_arguments, build_config, config_error

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Run one experiment: sessions through a strategy and the control plane against the PLT oracle'

    def add_arguments(self, parser):
        add_experiment_arguments(parser)

    def handle(self, *args, **options):
        cfg = build_config(options)
        try:
            summary = run_experiment(cfg)
        except ConfigError as e:
            raise config_error(str(e)) from e
        except LabError as e:
            raise CommandError(f"Run failed: {e}") from e

        ExperimentRun.objects.create(
            algo=cfg.kind,
            seed=cfg.seed,
            config_hash=summary.config_hash,
            output_path=str(summary.output),
            session_count=summary.session_count,
            update_count=summary.update_count,
            median_improvement=summary.median_improvement,
            p95_improvement=summary.p95_improvement,
        )
        self.stdout.write(self.style.SUCCESS(
            f"{cfg.kind}: {summary.session_count} sessions, {summary.update_count} model updates, "
            f"median improvement {summary.median_improvement:.2%}, p95 {summary.p95_improvement:.2%}"))
        self.stdout.write(f"Results: {summary.output}")
