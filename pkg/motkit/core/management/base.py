"""
Shared plumbing for the toolkit's management commands.

A command resolves the pipeline config, queues one django-q task per
sequence, and records the run as a RunManifest (database row plus
manifest.json under --out). Failures leave with the exit code of the
error: 1 for usage, 2 for data and config, 3 for numerical failures.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, CommandParser

from motkit.core.config import PipelineConfig
from motkit.core.django_q_tasks import TaskOutcome, is_failure
from motkit.core.exceptions import EXIT_USAGE, MotkitError
from motkit.core.models import RunManifest
from motkit.moio.config import load_config_file, parse_overrides
from motkit.moio.files import find_sequences

logger = logging.getLogger(__name__)

# BaseCommand's own options, left out of the manifest
DJANGO_OPTIONS = {
    "verbosity",
    "settings",
    "pythonpath",
    "traceback",
    "no_color",
    "force_color",
    "skip_checks",
    "stdout",
    "stderr",
}


class ToolkitParser(CommandParser):
    """ argparse exits with 2 on bad arguments, but 2 is reserved for data errors. """

    def error(self, message):
        if self.called_from_command_line:
            self.print_usage()
            self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)


class ToolkitCommand(BaseCommand):
    takes_sequences = True
    out_required = False
    # django-q group the per-sequence tasks are queued under
    group = ""

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.__class__ = ToolkitParser
        return parser

    def add_arguments(self, parser):
        if self.takes_sequences:
            parser.add_argument(
                "sequences",
                nargs="+",
                type=Path,
                help="Sequence directories, or directories holding them",
            )
        parser.add_argument(
            "--config", type=Path, help="Pipeline config file (default: MOTKIT_CONFIG)"
        )
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override one config key, e.g. tracker.high_thresh=0.7",
        )
        parser.add_argument(
            "--out", type=Path, required=self.out_required, help="Output directory"
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser: CommandParser) -> None:
        pass

    def flag_overrides(self, options: Dict) -> Dict[str, str]:
        """ Config keys set by the command's dedicated flags. They win over --set. """
        return {}

    def config_path(self, options: Dict) -> Optional[Path]:
        path = options.get("config") or settings.MOTKIT_CONFIG
        return Path(path) if path else None

    def run(
        self,
        cfg: PipelineConfig,
        sequence_dirs: List[Path],
        context: Dict,
        options: Dict,
    ) -> List[TaskOutcome]:
        raise NotImplementedError

    def summarize(
        self, results: List[TaskOutcome], cfg: PipelineConfig, options: Dict
    ) -> Optional[dict]:
        """ Print the command's report and return it for the manifest. """
        return None

    def handle(self, *args, **options):
        manifest = RunManifest(
            command=self.__module__.rsplit(".", 1)[-1],
            arguments=[
                f"{key}={value}"
                for key, value in sorted(options.items())
                if key not in DJANGO_OPTIONS
            ],
        )
        out_dir = options.get("out")
        try:
            overrides = parse_overrides(options["overrides"])
            overrides.update(self.flag_overrides(options))
            config_path = self.config_path(options)
            cfg = load_config_file(config_path, [overrides])
            manifest.config = cfg.resolved
            manifest.defaults_applied = list(cfg.defaulted)
            sequence_dirs = (
                find_sequences(options["sequences"]) if self.takes_sequences else []
            )
            context = {
                "config_path": str(config_path) if config_path else None,
                "overrides": overrides,
            }
            results = self.run(cfg, sequence_dirs, context, options)
            self.raise_first_failure(results)
            for result in results:
                manifest.inputs.update(result["inputs"])
                manifest.outputs.update(result["outputs"])
            manifest.report = self.summarize(results, cfg, options)
        except MotkitError as exc:
            manifest.exit_code = exc.exit_code
            self.record(manifest, out_dir)
            raise CommandError(str(exc), returncode=exc.exit_code)
        self.record(manifest, out_dir)

    def raise_first_failure(self, results: Sequence[TaskOutcome]) -> None:
        failures = [result for result in results if is_failure(result)]
        for failure in failures:
            logger.error(failure["error"])
        if failures:
            first = failures[0]
            error = MotkitError(first["error"])
            error.exit_code = first["exit_code"]
            raise error

    def record(self, manifest: RunManifest, out_dir: Optional[Path]) -> None:
        manifest.save()
        path = manifest.write(out_dir)
        if path:
            logger.info("Wrote %s", path)


COMPONENT_FLAGS = (
    ("fullbox", "Skip full-box extension of border-clipped detections"),
    ("compensation", "Skip camera-motion compensation on dynamic scenes"),
    ("interpolation", "Skip interpolation and GSI smoothing"),
    ("merge", "Skip track merging on static scenes"),
)


def add_component_flags(
    parser: CommandParser, names: Optional[Sequence[str]] = None
) -> None:
    for name, help_text in COMPONENT_FLAGS:
        if names is None or name in names:
            parser.add_argument(
                f"--no-{name}", dest=name, action="store_false", help=help_text
            )


def components(options: Dict) -> Dict[str, bool]:
    return {name: options[name] for name, _ in COMPONENT_FLAGS if name in options}
