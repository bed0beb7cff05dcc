# Make minimal necessary functions available at the package level

from .system_status import check_system_status
from .harness import ExperimentConfig, run_experiment
from .report import build_report, write_report
