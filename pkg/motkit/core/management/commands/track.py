from motkit.core.django_q_tasks import dispatch, track_task
from motkit.core.management.base import ToolkitCommand, add_component_flags, components
from motkit.core.management.reports import add_format_argument, print_reports


class Command(ToolkitCommand):
    help = "Track the detections of one or more sequences, writing <out>/<sequence>.txt"
    out_required = True
    group = "track"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--full",
            action="store_true",
            help="Also post-process the tracks and evaluate sequences with gt",
        )
        add_component_flags(parser)
        add_format_argument(parser)

    def run(self, cfg, sequence_dirs, context, options):
        arguments = [
            (
                str(sequence_dir),
                str(options["out"]),
                context["config_path"],
                context["overrides"],
                components(options),
                options["full"],
            )
            for sequence_dir in sequence_dirs
        ]
        return dispatch(track_task, arguments, self.group)

    def summarize(self, results, cfg, options):
        for result in results:
            self.stdout.write(
                f"{result['sequence']}: {', '.join(sorted(result['outputs']))}"
            )
        reports = [result["report"] for result in results if result["report"]]
        if reports:
            return print_reports(self.stdout, reports, options["format"])
        return None
