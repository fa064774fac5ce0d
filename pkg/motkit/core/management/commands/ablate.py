from rest_framework.renderers import JSONRenderer

from motkit.core.django_q_tasks import ablate_task, dispatch
from motkit.core.exceptions import DataError
from motkit.core.management.base import ToolkitCommand
from motkit.core.management.reports import JSON, add_format_argument
from motkit.core.metrics import EvalReport, combine
from motkit.core.pipeline import format_table


class Command(ToolkitCommand):
    help = (
        "Run the component grid (full box, motion compensation, interpolation, "
        "track merge) over sequences with ground truth and print combined HOTA, "
        "HOTA-S, HOTA-D, IDF1 and MOTA per row"
    )
    group = "ablate"

    def add_command_arguments(self, parser):
        add_format_argument(parser)

    def run(self, cfg, sequence_dirs, context, options):
        arguments = [
            (str(sequence_dir), context["config_path"], context["overrides"])
            for sequence_dir in sequence_dirs
        ]
        return dispatch(ablate_task, arguments, self.group)

    def summarize(self, results, cfg, options):
        labels = []
        by_label = {}
        for result in results:
            for label, report in result["report"]["rows"]:
                if report is None:
                    raise DataError(
                        f"{result['sequence']}: no ground truth to evaluate against"
                    )
                if label not in by_label:
                    labels.append(label)
                by_label.setdefault(label, []).append(EvalReport(**report))
        rows = [(label, combine(by_label[label])) for label in labels]
        payload = {"rows": [[label, combined] for label, combined in rows]}
        if options["format"] == JSON:
            self.stdout.write(
                JSONRenderer().render(payload, renderer_context={"indent": 2}).decode()
            )
        else:
            self.stdout.write(format_table(rows))
        return payload
