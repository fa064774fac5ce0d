"""
MOT Challenge text formats.

Files hold 1-based pixel coordinates; in memory boxes are 0-based. Every
parser converts on the way in and every writer on the way out.
"""
import configparser
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import (
    Collection,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

from motkit.core.boxes import BoundingBox, SceneKind, SequenceMeta, Trajectory
from motkit.core.exceptions import DataError
from motkit.core.metrics import AnnotatedBox
from motkit.core.motion import WarpMatrix, WarpTable
from motkit.core.sim import SimulatedSequence

logger = logging.getLogger(__name__)

Text = Union[str, Iterable[str]]
Detections = Dict[int, List[BoundingBox]]

SEQINFO = "seqinfo.ini"
DET_DIR = "det"
DET_FILE = "det.txt"
GT_FILE = "gt/gt.txt"
WARPS_FILE = "warps.txt"
HEIGHTS_FILE = "heights.txt"
SEQUENCE_CONFIG = "motkit.cfg"

INTERPOLATED_SUFFIX = ".interpolated.txt"


def _lines(text: Text, source: str) -> Iterable[Tuple[int, List[str]]]:
    lines = text.splitlines() if isinstance(text, str) else text
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        yield lineno, [value.strip() for value in line.split(",")]


def _numbers(fields: List[str], count: int, source: str, lineno: int) -> List[float]:
    if len(fields) < count:
        raise DataError(
            f"{source}:{lineno}: expected at least {count} fields, got {len(fields)}"
        )
    try:
        return [float(value) for value in fields[:count]]
    except ValueError as exc:
        raise DataError(f"{source}:{lineno}: {exc}")


def _frame_number(value: float, source: str, lineno: int) -> int:
    if value != int(value) or value < 1:
        raise DataError(
            f"{source}:{lineno}: frame must be a positive integer, got {value}"
        )
    return int(value)


class _Counters:
    def __init__(self, source: str) -> None:
        self.source = source
        self.skipped = 0
        self.clamped = 0

    def score(self, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            self.clamped += 1
            return min(max(value, 0.0), 1.0)
        return value

    def report(self) -> None:
        if self.skipped:
            logger.warning(
                "%s: skipped %d boxes with non-positive width or height",
                self.source,
                self.skipped,
            )
        if self.clamped:
            logger.warning(
                "%s: clamped %d scores into [0, 1]", self.source, self.clamped
            )


def _box_rows(text: Text, source: str, columns: int = 7):
    counters = _Counters(source)
    for lineno, fields in _lines(text, source):
        values = _numbers(fields, columns, source, lineno)
        frame = _frame_number(values[0], source, lineno)
        x, y, w, h = values[2:6]
        if w <= 0 or h <= 0:
            counters.skipped += 1
            continue
        box = (x - 1.0, y - 1.0, w, h)
        yield lineno, frame, int(values[1]), box, values[6:], fields, counters
    counters.report()


def parse_detections(text: Text, source: str = "det") -> Detections:
    """ Detections grouped by frame, ascending, file order kept within a frame. """
    grouped: Detections = {}
    for lineno, frame, _, (x, y, w, h), rest, _, counters in _box_rows(text, source):
        box = BoundingBox(x, y, w, h, score=counters.score(rest[0]), frame=frame)
        grouped.setdefault(frame, []).append(box)
    return dict(sorted(grouped.items()))


def parse_tracks(
    text: Text, source: str = "tracks", interpolated: Collection[Tuple[int, int]] = ()
) -> List[Trajectory]:
    """ Tracker output; boxes whose (frame, id) is in `interpolated` are flagged. """
    boxes: Dict[int, Dict[int, BoundingBox]] = {}
    interpolated = set(interpolated)
    rows = _box_rows(text, source)
    for lineno, frame, track_id, (x, y, w, h), rest, _, counters in rows:
        track = boxes.setdefault(track_id, {})
        if frame in track:
            raise DataError(
                f"{source}:{lineno}: track {track_id} has two boxes in frame {frame}"
            )
        score = counters.score(rest[0])
        flagged = (frame, track_id) in interpolated
        track[frame] = BoundingBox(
            x, y, w, h, score=score, frame=frame, interpolated=flagged
        )
    return [Trajectory(track_id, frames) for track_id, frames in sorted(boxes.items())]


def parse_ground_truth(text: Text, source: str = "gt") -> List[AnnotatedBox]:
    """
    Rows `frame,id,x,y,w,h[,flag[,class[,visibility]]]`; missing columns mean
    a visible pedestrian.
    """
    rows = []
    for lineno, frame, track_id, (x, y, w, h), _, fields, _ in _box_rows(
        text, source, columns=6
    ):
        try:
            flag = int(float(fields[6])) if len(fields) > 6 else 1
            cls = int(float(fields[7])) if len(fields) > 7 else 1
            visibility = float(fields[8]) if len(fields) > 8 else 1.0
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: {exc}")
        box = BoundingBox(x, y, w, h, score=1.0, frame=frame)
        rows.append(
            AnnotatedBox(track_id, box, flag=flag, cls=cls, visibility=visibility)
        )
    return rows


def _format_box(frame: int, track_id: int, box: BoundingBox, tail: str) -> str:
    position = f"{box.x + 1:.2f},{box.y + 1:.2f},{box.w:.2f},{box.h:.2f}"
    return f"{frame},{track_id},{position},{tail}"


def _frame_major(tracks: Sequence[Trajectory]) -> List[Tuple[int, int, BoundingBox]]:
    rows = [(box.frame, track.id, box) for track in tracks for box in track]
    return sorted(rows, key=lambda row: row[:2])


def write_tracks(tracks: Sequence[Trajectory]) -> str:
    """ Frame-major, then id order, two decimals. """
    return "".join(
        _format_box(frame, track_id, box, f"{box.score:.2f},-1,-1,-1") + "\n"
        for frame, track_id, box in _frame_major(tracks)
    )


def write_interpolated(tracks: Sequence[Trajectory]) -> str:
    """
    `frame,id` of every interpolated box, frame-major.

    The MOT track format cannot mark these boxes, so they travel in a file of
    their own.
    """
    keys = sorted(
        (box.frame, track.id) for track in tracks for box in track if box.interpolated
    )
    return "".join(f"{frame},{track_id}\n" for frame, track_id in keys)


def parse_interpolated(
    text: Text, source: str = "interpolated"
) -> Set[Tuple[int, int]]:
    keys = set()
    for lineno, fields in _lines(text, source):
        frame, track_id = _numbers(fields, 2, source, lineno)
        keys.add((_frame_number(frame, source, lineno), int(track_id)))
    return keys


def write_detections(dets: Detections) -> str:
    return "".join(
        _format_box(frame, -1, box, f"{box.score:.2f},-1,-1,-1") + "\n"
        for frame in sorted(dets)
        for box in dets[frame]
    )


def write_ground_truth(tracks: Sequence[Trajectory]) -> str:
    return "".join(
        _format_box(frame, track_id, box, "1,1,1.0") + "\n"
        for frame, track_id, box in _frame_major(tracks)
    )


def gt_tracks(rows: Iterable[AnnotatedBox]) -> List[Trajectory]:
    """ Every annotated row as a trajectory, ignoring class and visibility. """
    boxes: Dict[int, Dict[int, BoundingBox]] = {}
    for row in rows:
        boxes.setdefault(row.track_id, {})[row.box.frame] = row.box
    return [Trajectory(track_id, frames) for track_id, frames in sorted(boxes.items())]


SEQINFO_KEYS = {
    "name": str,
    "imwidth": int,
    "imheight": int,
    "framerate": float,
    "seqlength": int,
}
SEQINFO_IGNORED = {"imdir", "imext"}


def parse_seqinfo(
    text: str, scene_kind: SceneKind = SceneKind.STATIC, source: str = SEQINFO
) -> SequenceMeta:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise DataError(f"{source}: {exc}")
    if not parser.has_section("Sequence"):
        raise DataError(f"{source}: missing [Sequence] section")
    section = parser["Sequence"]
    for key in section:
        if key not in SEQINFO_KEYS and key not in SEQINFO_IGNORED:
            logger.warning("%s: ignoring unknown key %s", source, key)
    values = {}
    for key, cast in SEQINFO_KEYS.items():
        if key not in section:
            raise DataError(f"{source}: missing required key {key}")
        try:
            values[key] = cast(section[key])
        except ValueError:
            raise DataError(f"{source}: invalid value {section[key]!r} for key {key}")
    return SequenceMeta(
        name=values["name"],
        width=values["imwidth"],
        height=values["imheight"],
        fps=values["framerate"],
        length=values["seqlength"],
        scene_kind=scene_kind,
    )


def write_seqinfo(meta: SequenceMeta) -> str:
    return (
        "[Sequence]\n"
        f"name={meta.name}\n"
        "imDir=img1\n"
        f"frameRate={meta.fps:g}\n"
        f"seqLength={meta.length}\n"
        f"imWidth={meta.width}\n"
        f"imHeight={meta.height}\n"
        "imExt=.jpg\n"
    )


def parse_warps(text: Text, source: str = WARPS_FILE) -> WarpTable:
    """ `frame a11 a12 a13 a21 a22 a23` per line; missing frames use the identity. """
    warps: WarpTable = {}
    lines = text.splitlines() if isinstance(text, str) else text
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        if len(fields) != 7:
            raise DataError(f"{source}:{lineno}: expected 7 fields, got {len(fields)}")
        try:
            values = [float(value) for value in fields]
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: {exc}")
        frame = _frame_number(values[0], source, lineno)
        if frame in warps:
            raise DataError(f"{source}:{lineno}: duplicate warp for frame {frame}")
        try:
            warps[frame] = WarpMatrix(frame, values[1:])
        except DataError as exc:
            raise DataError(f"{source}:{lineno}: {exc.message}")
    return warps


def parse_height_samples(
    text: Text, source: str = HEIGHTS_FILE
) -> List[Tuple[float, float]]:
    """
    `y h` per line: top edge (1-based, like the det files) and height of a
    full, unclipped person.
    """
    samples = []
    lines = text.splitlines() if isinstance(text, str) else text
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        y, h = _numbers(fields, 2, source, lineno)[:2]
        if h <= 0:
            raise DataError(f"{source}:{lineno}: height must be positive, got {h}")
        samples.append((y - 1.0, h))
    return samples


def write_warps(warps: WarpTable) -> str:
    lines = []
    for frame in sorted(warps):
        values = " ".join(f"{value:.6f}" for value in warps[frame].matrix.ravel())
        lines.append(f"{frame} {values}\n")
    return "".join(lines)


def digest(path: Path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


@dataclass
class SequenceFiles:
    """
    A sequence directory: seqinfo.ini, det/*.txt, optional gt/gt.txt,
    warps.txt, heights.txt and motkit.cfg.
    """

    root: Path
    meta: SequenceMeta
    detections: Dict[str, Detections]
    annotations: Optional[List[AnnotatedBox]] = None
    warps: WarpTable = field(default_factory=dict)
    config_text: str = ""
    inputs: Dict[str, str] = field(default_factory=dict)
    # (top y, h) samples for the height model, from heights.txt
    height_samples: Optional[List[Tuple[float, float]]] = None

    @property
    def name(self) -> str:
        return self.meta.name

    @property
    def primary_detections(self) -> Detections:
        if DET_FILE in self.detections:
            return self.detections[DET_FILE]
        return next(iter(self.detections.values()), {})


def is_sequence_dir(path: Path) -> bool:
    return (Path(path) / SEQINFO).is_file()


def find_sequences(paths: Sequence[Path]) -> List[Path]:
    """ Sequence directories given directly or one level below, sorted by name. """
    found = []
    for path in map(Path, paths):
        if is_sequence_dir(path):
            found.append(path)
        elif path.is_dir():
            found += [child for child in path.iterdir() if is_sequence_dir(child)]
        else:
            raise DataError(f"{path}: not a sequence directory")
    return sorted(found, key=lambda p: p.name)


def load_sequence(
    root: Path, scene_kind: SceneKind = SceneKind.STATIC, det_glob: str = "*.txt"
) -> SequenceFiles:
    root = Path(root)
    inputs = {}

    def read(relative: str) -> str:
        path = root / relative
        inputs[relative] = digest(path)
        return path.read_text()

    meta = parse_seqinfo(read(SEQINFO), scene_kind, source=str(root / SEQINFO))
    detections = {}
    for det_path in sorted((root / DET_DIR).glob(det_glob)):
        relative = f"{DET_DIR}/{det_path.name}"
        detections[det_path.name] = parse_detections(
            read(relative), source=str(det_path)
        )
    if not detections:
        raise DataError(f"{root}: no detection files under {DET_DIR}/")

    annotations = None
    if (root / GT_FILE).is_file():
        annotations = parse_ground_truth(read(GT_FILE), source=str(root / GT_FILE))
    warps = {}
    if (root / WARPS_FILE).is_file():
        warps = parse_warps(read(WARPS_FILE), source=str(root / WARPS_FILE))
    config_text = read(SEQUENCE_CONFIG) if (root / SEQUENCE_CONFIG).is_file() else ""
    height_samples = None
    if (root / HEIGHTS_FILE).is_file():
        height_samples = parse_height_samples(
            read(HEIGHTS_FILE), source=str(root / HEIGHTS_FILE)
        )
    return SequenceFiles(
        root, meta, detections, annotations, warps, config_text, inputs, height_samples
    )


def write_sequence(directory: Path, sequence: SimulatedSequence) -> Path:
    """ Lay out a simulated sequence like a benchmark sequence. Returns its path. """
    root = Path(directory) / sequence.meta.name
    (root / DET_DIR).mkdir(parents=True, exist_ok=True)
    (root / "gt").mkdir(exist_ok=True)
    (root / SEQINFO).write_text(write_seqinfo(sequence.meta))
    (root / DET_DIR / DET_FILE).write_text(write_detections(sequence.dets))
    (root / GT_FILE).write_text(write_ground_truth(sequence.gt))
    if sequence.warps:
        (root / WARPS_FILE).write_text(write_warps(sequence.warps))
    (root / SEQUENCE_CONFIG).write_text(
        f"sequence.{sequence.meta.name}.scene_kind = {sequence.meta.scene_kind.value}\n"
    )
    return root
