import argparse
import importlib
import logging
import sys
from typing import Optional, Sequence

from config import Config
from models.errors import AlgorithmError, DataError, UsageError
from services.failure_log_service import report_failure
from version import __version__

# Configure logging
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ALGORITHM = 3

COMMAND_MODULES = (
    'commands.register_command',
    'commands.eval_2d_command',
    'commands.eval_3d_command',
    'commands.eval_reg_command',
    'commands.render_overlay_command',
    'commands.synth_command',
)


class ToolkitArgumentParser(argparse.ArgumentParser):
    """ArgumentParser raising UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


class RegistrationCLI:
    """Command-line front end for liver registration and evaluation."""

    def __init__(self):
        self.parser = ToolkitArgumentParser(
            prog='liverreg',
            description='Rigid 3D-2D liver registration and landmark evaluation.',
        )
        self.parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
        self.subparsers = self.parser.add_subparsers(
            dest='command',
            metavar='command',
            parser_class=ToolkitArgumentParser,
        )
        self.commands = {}

    def add_command(self, command):
        parser = self.subparsers.add_parser(command.name, help=command.help, description=command.help)
        command.configure(parser)
        self.commands[command.name] = command

    def setup(self):
        """Load every command module; each exposes setup(cli)."""
        for module_name in COMMAND_MODULES:
            importlib.import_module(module_name).setup(self)
            logger.debug(f"Loaded {module_name}")

    def run(self, argv: Sequence[str]) -> int:
        args = self.parser.parse_args(list(argv))
        if not args.command:
            raise UsageError(f"no command given; choose from {', '.join(self.commands)}")
        return self.commands[args.command].run(args) or EXIT_OK


def _fail(code: int, source: str, exc: Exception) -> int:
    report_failure(source, "command failed", exc, level=logging.DEBUG)
    print(f"liverreg: error: {exc}", file=sys.stderr)
    return code


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code.

    0 success, 1 usage or configuration error, 2 data error, 3 algorithmic
    failure.
    """
    argv = sys.argv[1:] if argv is None else argv
    source = argv[0] if argv else 'liverreg'
    try:
        Config.validate_config()
    except ValueError as e:
        return _fail(EXIT_USAGE, source, e)

    cli = RegistrationCLI()
    cli.setup()
    try:
        return cli.run(argv)
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else EXIT_OK
    except UsageError as e:
        return _fail(EXIT_USAGE, source, e)
    except DataError as e:
        return _fail(EXIT_DATA, source, e)
    except AlgorithmError as e:
        return _fail(EXIT_ALGORITHM, source, e)
