from pathlib import Path

from motkit.core.django_q_tasks import dispatch, eval_task
from motkit.core.management.base import ToolkitCommand
from motkit.core.management.reports import add_format_argument, print_reports


class Command(ToolkitCommand):
    help = "Score <tracks>/<sequence>.txt against each sequence's ground truth"
    group = "eval"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--tracks",
            type=Path,
            required=True,
            help="Directory of <sequence>.txt track files",
        )
        parser.add_argument(
            "--ap",
            action="store_true",
            help="Also report detection AP@0.5 of det/det.txt",
        )
        add_format_argument(parser)

    def run(self, cfg, sequence_dirs, context, options):
        arguments = [
            (
                str(sequence_dir),
                str(options["tracks"]),
                context["config_path"],
                context["overrides"],
                options["ap"],
            )
            for sequence_dir in sequence_dirs
        ]
        return dispatch(eval_task, arguments, self.group)

    def summarize(self, results, cfg, options):
        return print_reports(
            self.stdout, [result["report"] for result in results], options["format"]
        )
