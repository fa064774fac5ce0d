from django.core.management.base import CommandError

from motkit.core.django_q_tasks import dispatch, simulate_task
from motkit.core.exceptions import EXIT_USAGE
from motkit.core.management.base import ToolkitCommand


def parse_seeds(value: str):
    """ "0,3,7" or a range "0-19". """
    seeds = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        first, _, last = part.partition("-")
        try:
            seeds += list(range(int(first), int(last) + 1)) if last else [int(first)]
        except ValueError:
            raise CommandError(f"Bad seed list {value!r}", returncode=EXIT_USAGE)
    return seeds


class Command(ToolkitCommand):
    help = (
        "Write synthetic sequences (seqinfo.ini, det/, gt/, warps.txt) from the "
        "sim.* settings, one per seed"
    )
    takes_sequences = False
    out_required = True
    group = "simulate"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--seeds", default="0", help='Seeds as "0,3,7" or "0-19" (default: 0)'
        )
        parser.add_argument("--name", help="Sequence name prefix (default: sim.name)")
        parser.add_argument(
            "--dynamic",
            action="store_true",
            help="Pan the camera by 4 px per frame (sim.camera_pan=4,0)",
        )

    def flag_overrides(self, options):
        if options["dynamic"]:
            return {"sim.camera_pan": "4,0"}
        return {}

    def run(self, cfg, sequence_dirs, context, options):
        seeds = parse_seeds(options["seeds"])
        if not seeds:
            raise CommandError("--seeds is empty", returncode=EXIT_USAGE)
        prefix = options["name"] or cfg.sim.name
        arguments = [
            (
                str(options["out"] / f"{prefix}-{seed:02d}"),
                seed,
                context["config_path"],
                context["overrides"],
            )
            for seed in seeds
        ]
        return dispatch(simulate_task, arguments, self.group)

    def summarize(self, results, cfg, options):
        for result in results:
            self.stdout.write(f"{result['sequence']} ({result['scene_kind']})")
        return {"sequences": [result["sequence"] for result in results]}
