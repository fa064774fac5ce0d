"""
Printing evaluation reports from management commands.
"""
from typing import Dict, List, Sequence, TextIO

from rest_framework.renderers import JSONRenderer

from motkit.core.metrics import EvalReport, combine
from motkit.core.pipeline import format_table
from motkit.core.serializers import EvalReportSerializer

TABLE = "table"
JSON = "json"
FORMATS = (TABLE, JSON)

SEQUENCE_COLUMNS = ("hota", "deta", "assa", "idf1", "mota", "idsw", "fp", "fn")


def add_format_argument(parser) -> None:
    parser.add_argument(
        "--format",
        choices=FORMATS,
        default=TABLE,
        help="Report format on standard output",
    )


def print_reports(stdout: TextIO, reports: Sequence[dict], fmt: str = TABLE) -> Dict:
    """ Per-sequence rows plus the combined scores. Returns the manifest report. """
    serialized: List[dict] = EvalReportSerializer(
        [EvalReport(**report) for report in reports], many=True
    ).data
    combined = combine([EvalReport(**report) for report in reports])
    payload = {"sequences": serialized, "combined": combined}
    if fmt == JSON:
        stdout.write(
            JSONRenderer().render(payload, renderer_context={"indent": 2}).decode()
        )
        return payload

    width = max(len("Sequence"), *(len(report["sequence"]) for report in serialized))
    header = "Sequence".ljust(width) + "".join(
        column.upper().rjust(9) for column in SEQUENCE_COLUMNS
    )
    stdout.write(header)
    stdout.write("-" * len(header))
    for report in serialized:
        cells = []
        for column in SEQUENCE_COLUMNS:
            value = report[column]
            text = str(value) if isinstance(value, int) else f"{100.0 * value:.1f}"
            cells.append(text.rjust(9))
        stdout.write(report["sequence"].ljust(width) + "".join(cells))
    stdout.write("")
    stdout.write(format_table([("combined", combined)]))
    return payload
