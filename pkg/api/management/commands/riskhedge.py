import logging
import sys

from django.core.management.base import BaseCommand

from core.commands import COMMANDS, EXIT_INVALID, CommandRouter

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Check no-arbitrage conditions and compute risk-hedging prices on a scenario tree model'

    def add_arguments(self, parser):
        parser.add_argument('command', choices=COMMANDS)
        parser.add_argument('model', help='path to the model JSON file')
        parser.add_argument('--time', type=int, default=None, help='restrict check-na to one time')
        parser.add_argument('--direct', action='store_true', help='cross-check prices with the multi-period LP')
        parser.add_argument('--csv', dest='csv_path', default=None, help='write node prices and strategies as CSV')
        parser.add_argument('--samples', type=int, default=None, help='random samples per ftap leg')
        parser.add_argument('--tol', type=float, default=None, help='numerical tolerance (default RISKHEDGE_TOL)')
        parser.add_argument('--exact', action='store_true', help='rational arithmetic with zero tolerance')

    def handle(self, *args, **options):
        path = options['model']
        try:
            with open(path, 'rb') as handle:
                model_text = handle.read()
        except OSError as e:
            logger.error(f"Cannot read model {path}: {e}")
            self.stderr.write(f'cannot read {path}: {e}')
            sys.exit(EXIT_INVALID)

        report, code = CommandRouter().route(
            options['command'],
            model_text,
            time=options['time'],
            direct=options['direct'],
            csv_path=options['csv_path'],
            samples=options['samples'],
            tol=options['tol'],
            exact=options['exact'],
        )
        self.stdout.write(report.to_json())
        sys.exit(code)
