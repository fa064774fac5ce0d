from pathlib import Path

from motkit.core.django_q_tasks import dispatch, postprocess_task
from motkit.core.management.base import ToolkitCommand, add_component_flags, components


class Command(ToolkitCommand):
    help = (
        "Interpolate, smooth, merge and prune tracks read from --tracks, "
        "writing <out>/<sequence>.txt"
    )
    out_required = True
    group = "postprocess"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--tracks",
            type=Path,
            required=True,
            help="Directory of <sequence>.txt track files",
        )
        parser.add_argument(
            "--steps",
            help="Comma-separated steps in order, e.g. merge,interpolate,gsi,prune",
        )
        add_component_flags(parser, ("interpolation", "merge"))

    def flag_overrides(self, options):
        if options["steps"] is not None:
            return {"postprocess.steps": options["steps"]}
        return {}

    def run(self, cfg, sequence_dirs, context, options):
        arguments = [
            (
                str(sequence_dir),
                str(options["tracks"]),
                str(options["out"]),
                context["config_path"],
                context["overrides"],
                components(options),
            )
            for sequence_dir in sequence_dirs
        ]
        return dispatch(postprocess_task, arguments, self.group)

    def summarize(self, results, cfg, options):
        for result in results:
            steps = ",".join(result["config"]["postprocess"]["steps"]) or "none"
            self.stdout.write(f"{result['sequence']}: {steps}")
        return None
