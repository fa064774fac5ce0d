import shlex

from django.core.management.base import CommandError

from motkit.core.django_q_tasks import (
    OBJECTIVE_AP,
    OBJECTIVE_COMMAND,
    OBJECTIVE_TRACKING,
    dispatch,
    search_task,
)
from motkit.core.exceptions import EXIT_USAGE
from motkit.core.management.base import ToolkitCommand


class Command(ToolkitCommand):
    help = (
        "Search thresholds in [0, 1] for each sequence with clipped-surrogate "
        "policy updates of a truncated normal. The command objective is called as "
        "`<command> <sequence> <params...>` and must print its score on the last "
        "line of standard output."
    )
    group = "search"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--objective",
            choices=(OBJECTIVE_COMMAND, OBJECTIVE_AP, OBJECTIVE_TRACKING),
            default=OBJECTIVE_COMMAND,
            help=(
                "command: external scorer; ap: detection AP after score filtering; "
                "tracking: HOTA against gt"
            ),
        )
        parser.add_argument(
            "--objective-command", help="Scorer command line for --objective=command"
        )
        parser.add_argument(
            "--timeout", type=float, help="Seconds allowed per scorer call"
        )
        parser.add_argument(
            "--seed", type=int, help="Random seed (default: search.seed)"
        )

    def flag_overrides(self, options):
        flags = {}
        if options["seed"] is not None:
            flags["search.seed"] = str(options["seed"])
        if options["objective"] in (OBJECTIVE_AP, OBJECTIVE_TRACKING):
            flags["search.dims"] = "1"
        return flags

    def objective(self, options):
        objective = {"kind": options["objective"], "timeout": options["timeout"]}
        if options["objective"] == OBJECTIVE_COMMAND:
            if not options["objective_command"]:
                raise CommandError(
                    "--objective-command is required for --objective=command",
                    returncode=EXIT_USAGE,
                )
            objective["command"] = shlex.split(options["objective_command"])
        return objective

    def run(self, cfg, sequence_dirs, context, options):
        objective = self.objective(options)
        arguments = [
            (str(sequence_dir), objective, context["config_path"], context["overrides"])
            for sequence_dir in sequence_dirs
        ]
        return dispatch(search_task, arguments, self.group)

    def summarize(self, results, cfg, options):
        reports = [result["report"] for result in results]
        for report in reports:
            params = " ".join(f"{value:.4f}" for value in report["best_params"])
            self.stdout.write(
                f"{report['sequence']}: best {report['best_score']:.4f} at {params} "
                f"({report['evaluations']} evaluations)"
            )
        return {"sequences": reports}
