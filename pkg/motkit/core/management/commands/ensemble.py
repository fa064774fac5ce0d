from motkit.core.django_q_tasks import dispatch, ensemble_task
from motkit.core.management.base import ToolkitCommand


class Command(ToolkitCommand):
    help = (
        "Fuse the detection files under each sequence's det/ directory into one, "
        "writing a copy of the sequence to <out>/<sequence>"
    )
    out_required = True
    group = "ensemble"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--method",
            choices=("wbf", "nms"),
            help="Fusion method (default: ensemble.method)",
        )
        parser.add_argument(
            "--iou-thresh",
            type=float,
            help="Cluster IoU threshold (default: ensemble.iou_thresh)",
        )
        parser.add_argument(
            "--weights", help="Comma-separated model weights, in det/ file name order"
        )

    def flag_overrides(self, options):
        flags = {
            "ensemble.method": options["method"], "ensemble.weights": options["weights"]
        }
        if options["iou_thresh"] is not None:
            flags["ensemble.iou_thresh"] = str(options["iou_thresh"])
        return {key: value for key, value in flags.items() if value is not None}

    def run(self, cfg, sequence_dirs, context, options):
        arguments = [
            (
                str(sequence_dir),
                str(options["out"]),
                context["config_path"],
                context["overrides"],
            )
            for sequence_dir in sequence_dirs
        ]
        return dispatch(ensemble_task, arguments, self.group)

    def summarize(self, results, cfg, options):
        for result in results:
            self.stdout.write(
                f"{result['sequence']}: {', '.join(sorted(result['outputs']))}"
            )
        return None
