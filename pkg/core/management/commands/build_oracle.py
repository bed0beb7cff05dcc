from django.core.management.base import BaseCommand

from core.utils.exceptions import ConfigError, TensorTooLargeError
from core.utils.plt_oracle import OracleParams, build_tensor, default_grid
from core.utils.workload import WorkloadSpec

from ._options import config_error, default_output, ensure_parent, parse_assignments


class Command(BaseCommand):
    help = 'Precompute the PLT tensor over the condition grid, catalog websites and all configurations'

    def add_arguments(self, parser):
        parser.add_argument('--workload', help='Workload spec JSON whose website catalog is used')
        parser.add_argument('--param', action='append', metavar='NAME=VALUE', help='Oracle parameter override')
        parser.add_argument('-o', '--output', default=None, help='Tensor path (.npy and .json are written)')

    def handle(self, *args, **options):
        try:
            spec = WorkloadSpec.load(options['workload']) if options['workload'] else WorkloadSpec()
            params = OracleParams.from_dict({**OracleParams().to_dict(), **parse_assignments(options['param'])})
            tensor = build_tensor(default_grid(), spec.websites, params)
        except (ConfigError, TensorTooLargeError) as e:
            raise config_error(str(e)) from e

        output = options['output'] or default_output('plt_tensor')
        ensure_parent(output)
        array_path, sidecar_path = tensor.save(output)
        self.stdout.write(self.style.SUCCESS(
            f"Tensor with {tensor.entry_count} entries written to {array_path} (sha256 {tensor.sha256()[:12]})"))
        self.stdout.write(f"Sidecar: {sidecar_path}")
