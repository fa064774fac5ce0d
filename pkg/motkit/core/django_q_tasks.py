"""
Per-sequence work units run through django-q.

Every task takes plain, picklable arguments, loads its own sequence and
config, and returns either a SequenceResult or a TaskError record. Toolkit
errors never escape a task.
"""
import dataclasses
import functools
import logging
import shutil
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings
from django_q.tasks import async_task, fetch

from motkit.core.boxes import Trajectory
from motkit.core.config import Components, PipelineConfig, resolve_sequence
from motkit.core.exceptions import (
    EXIT_DATA,
    ConfigError,
    DataError,
    MotkitError,
    NumericalFailure,
)
from motkit.core.pipeline import (
    ablation_rows,
    ensemble_detections,
    evaluate_sequence,
    postprocess_sequence,
    prepare_detections,
    run_sequence,
    track_sequence,
)
from motkit.core.search import (
    AveragePrecisionObjective,
    CommandObjective,
    TrackingObjective,
    search,
)
from motkit.core.sim import generate
from motkit.moio.config import load_config_file, parse_entries
from motkit.moio.files import (
    DET_DIR,
    DET_FILE,
    SEQINFO,
    SEQUENCE_CONFIG,
    GT_FILE,
    HEIGHTS_FILE,
    INTERPOLATED_SUFFIX,
    WARPS_FILE,
    SequenceFiles,
    digest,
    gt_tracks,
    load_sequence,
    parse_interpolated,
    parse_tracks,
    write_detections,
    write_interpolated,
    write_sequence,
    write_tracks,
)
from motkit.moio.types import SequenceResult, TaskError

logger = logging.getLogger(__name__)

TaskOutcome = Union[SequenceResult, TaskError]

OBJECTIVE_COMMAND = "command"
OBJECTIVE_AP = "ap"
OBJECTIVE_TRACKING = "tracking"


def load_inputs(
    sequence_dir: str, config_path: Optional[str], overrides: Dict
) -> Tuple[SequenceFiles, PipelineConfig]:
    """
    A sequence and the config it runs with:
    defaults < config file < sequence snippet < overrides.
    """
    files = load_sequence(Path(sequence_dir))
    snippet = str(Path(sequence_dir) / SEQUENCE_CONFIG)
    layers = [parse_entries(files.config_text, source=snippet), overrides]
    cfg = load_config_file(Path(config_path) if config_path else None, layers)
    return files, cfg


def _result(
    files: SequenceFiles, cfg: PipelineConfig, scene_kind: str, **extra
) -> SequenceResult:
    result = SequenceResult(
        sequence=files.name,
        scene_kind=scene_kind,
        config=cfg.resolved,
        inputs={f"{files.name}/{name}": value for name, value in files.inputs.items()},
        outputs={},
        report=None,
    )
    result.update(extra)
    return result


def _scene_kind(files: SequenceFiles, cfg: PipelineConfig) -> str:
    return resolve_sequence(cfg, files.meta).meta.scene_kind.value


def _failure(exc: MotkitError, sequence: str) -> TaskError:
    exc.located(sequence)
    return TaskError(
        error=str(exc),
        exit_code=exc.exit_code,
        sequence=exc.sequence,
        stage=exc.stage,
    )


def guarded(func: Callable[..., TaskOutcome]) -> Callable[..., TaskOutcome]:
    """ Turn toolkit and linear-algebra errors into TaskError records. """

    @functools.wraps(func)
    def wrapper(sequence_dir: str, *args, **kwargs) -> TaskOutcome:
        sequence = Path(sequence_dir).name
        try:
            return func(sequence_dir, *args, **kwargs)
        except MotkitError as exc:
            return _failure(exc, sequence)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            return _failure(NumericalFailure(str(exc)), sequence)

    return wrapper


def _write(path: Path, text: str, outputs: Dict[str, str], out_root: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    outputs[str(path.relative_to(out_root))] = digest(path)


def _write_tracks(
    out_root: Path, name: str, tracks: Sequence[Trajectory], outputs: Dict[str, str]
) -> None:
    """ <name>.txt, plus <name>.interpolated.txt when some boxes were filled in. """
    _write(out_root / f"{name}.txt", write_tracks(tracks), outputs, out_root)
    sidecar = out_root / f"{name}{INTERPOLATED_SUFFIX}"
    keys = write_interpolated(tracks)
    if keys:
        _write(sidecar, keys, outputs, out_root)
    elif sidecar.exists():
        sidecar.unlink()


@guarded
def track_task(
    sequence_dir: str,
    out_dir: str,
    config_path: Optional[str] = None,
    overrides: Dict = None,
    components: Dict = None,
    full: bool = False,
) -> TaskOutcome:
    """
    Detections to tracks for one sequence, written to <out>/<sequence>.txt.

    With full=True the tracks are also post-processed and evaluated when
    ground truth exists.
    """
    files, cfg = load_inputs(sequence_dir, config_path, overrides or {})
    switches = Components(**(components or {}))
    out_root = Path(out_dir)
    outputs: Dict[str, str] = {}
    report = None
    if full:
        run = run_sequence(files, cfg, switches)
        tracks, seq_cfg = run.tracks, run.config
        report = run.report.as_dict() if run.report else None
    else:
        seq_cfg = resolve_sequence(cfg, files.meta, files.warps, switches)
        dets = prepare_detections(
            files.primary_detections, seq_cfg, files.height_samples
        )
        tracks = track_sequence(dets, seq_cfg)
    _write_tracks(out_root, files.name, tracks, outputs)
    return _result(
        files,
        cfg,
        seq_cfg.meta.scene_kind.value,
        outputs=outputs,
        report=report,
        config=seq_cfg.as_dict(),
    )


def _read_tracks(tracks_dir: str, files: SequenceFiles, inputs: Dict[str, str]):
    path = Path(tracks_dir) / f"{files.name}.txt"
    if not path.is_file():
        raise DataError(f"No tracks file {path}")
    inputs[str(path)] = digest(path)
    interpolated = set()
    sidecar = path.with_name(f"{files.name}{INTERPOLATED_SUFFIX}")
    if sidecar.is_file():
        inputs[str(sidecar)] = digest(sidecar)
        interpolated = parse_interpolated(sidecar.read_text(), source=str(sidecar))
    return parse_tracks(path.read_text(), source=str(path), interpolated=interpolated)


@guarded
def postprocess_task(
    sequence_dir: str,
    tracks_dir: str,
    out_dir: str,
    config_path: Optional[str] = None,
    overrides: Dict = None,
    components: Dict = None,
) -> TaskOutcome:
    files, cfg = load_inputs(sequence_dir, config_path, overrides or {})
    switches = Components(**(components or {}))
    seq_cfg = resolve_sequence(cfg, files.meta, files.warps, switches)
    tracks = _read_tracks(tracks_dir, files, files.inputs)
    out_root = Path(out_dir)
    outputs: Dict[str, str] = {}
    final = postprocess_sequence(tracks, seq_cfg)
    _write_tracks(out_root, files.name, final, outputs)
    return _result(
        files,
        cfg,
        seq_cfg.meta.scene_kind.value,
        outputs=outputs,
        config=seq_cfg.as_dict(),
    )


@guarded
def eval_task(
    sequence_dir: str,
    tracks_dir: str,
    config_path: Optional[str] = None,
    overrides: Dict = None,
    with_ap: bool = False,
) -> TaskOutcome:
    files, cfg = load_inputs(sequence_dir, config_path, overrides or {})
    seq_cfg = resolve_sequence(cfg, files.meta, files.warps)
    tracks = _read_tracks(tracks_dir, files, files.inputs)
    report = evaluate_sequence(tracks, files, seq_cfg, with_ap=with_ap)
    return _result(files, cfg, seq_cfg.meta.scene_kind.value, report=report.as_dict())


@guarded
def ensemble_task(
    sequence_dir: str,
    out_dir: str,
    config_path: Optional[str] = None,
    overrides: Dict = None,
) -> TaskOutcome:
    """ Fuse det/*.txt into a copy of the sequence directory under <out>/<sequence>. """
    files, cfg = load_inputs(sequence_dir, config_path, overrides or {})
    fused = ensemble_detections(files, cfg)
    out_root = Path(out_dir)
    target = out_root / files.root.name
    outputs: Dict[str, str] = {}
    for relative in (SEQINFO, GT_FILE, WARPS_FILE, HEIGHTS_FILE, SEQUENCE_CONFIG):
        source = files.root / relative
        if source.is_file():
            (target / relative).parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(source, target / relative)
    _write(target / DET_DIR / DET_FILE, write_detections(fused), outputs, out_root)
    return _result(files, cfg, _scene_kind(files, cfg), outputs=outputs)


def build_objective(objective: Dict, files: SequenceFiles, cfg: PipelineConfig):
    kind = objective.get("kind", OBJECTIVE_COMMAND)
    if kind == OBJECTIVE_COMMAND:
        command = list(objective["command"]) + [files.name]
        return CommandObjective(command, timeout=objective.get("timeout"))
    if files.annotations is None:
        raise DataError(f"The {kind} objective needs ground truth under {files.root}")
    gt = gt_tracks(files.annotations)
    if kind == OBJECTIVE_AP:
        reference = {}
        for track in gt:
            for box in track:
                reference.setdefault(box.frame, []).append(box)
        return AveragePrecisionObjective(
            files.primary_detections, reference, cfg.metrics.iou_thresh
        )
    if kind == OBJECTIVE_TRACKING:
        seq_cfg = resolve_sequence(cfg, files.meta, files.warps)
        dets = prepare_detections(
            files.primary_detections, seq_cfg, files.height_samples
        )
        return TrackingObjective(seq_cfg.meta, dets, gt, seq_cfg.tracker)
    raise ConfigError("search.objective", f"unknown objective {kind!r}")


@guarded
def search_task(
    sequence_dir: str,
    objective: Dict,
    config_path: Optional[str] = None,
    overrides: Dict = None,
) -> TaskOutcome:
    """ Threshold search for one sequence; the report holds the best parameters. """
    files, cfg = load_inputs(sequence_dir, config_path, overrides or {})
    found = search(build_objective(objective, files, cfg), cfg.search)
    report = {
        "sequence": files.name,
        "best_params": [float(value) for value in found.best_params],
        "best_score": float(found.best_score),
        "final_mean": found.final_mean,
        "evaluations": sum(len(step.scores) for step in found.history),
    }
    return _result(files, cfg, _scene_kind(files, cfg), report=report)


@guarded
def ablate_task(
    sequence_dir: str, config_path: Optional[str] = None, overrides: Dict = None
) -> TaskOutcome:
    files, cfg = load_inputs(sequence_dir, config_path, overrides or {})
    rows = ablation_rows(files, cfg)
    report = {"rows": [[label, row.as_dict() if row else None] for label, row in rows]}
    return _result(files, cfg, _scene_kind(files, cfg), report=report)


@guarded
def simulate_task(
    target_dir: str,
    seed: int,
    config_path: Optional[str] = None,
    overrides: Dict = None,
) -> TaskOutcome:
    """ One synthetic sequence from the sim.* settings, written to target_dir. """
    config_file = Path(config_path) if config_path else None
    cfg = load_config_file(config_file, [overrides or {}])
    target = Path(target_dir)
    sequence = generate(dataclasses.replace(cfg.sim, name=target.name, seed=seed))
    root = write_sequence(target.parent, sequence)
    outputs = {
        str(path.relative_to(target.parent)): digest(path)
        for path in sorted(root.rglob("*"))
        if path.is_file()
    }
    logger.info(
        "%s: %d tracks, %d detections",
        target.name,
        len(sequence.gt),
        sequence.detection_count,
    )
    return SequenceResult(
        sequence=target.name,
        scene_kind=sequence.meta.scene_kind.value,
        config={"sim.seed": seed},
        inputs={},
        outputs=outputs,
        report=None,
    )


def dispatch(
    func: Callable[..., TaskOutcome], argument_lists: Sequence[Sequence], group: str
) -> List[TaskOutcome]:
    """
    Queue one task per argument list and collect the outcomes in the same order.

    With DJANGO_Q_SYNC the tasks run inline; otherwise they wait up to
    MOTKIT_TASK_WAIT_MS for a running cluster.
    """
    task_ids = [
        async_task(func, *arguments, group=group, sync=settings.DJANGO_Q_SYNC)
        for arguments in argument_lists
    ]
    outcomes: List[TaskOutcome] = []
    for task_id, arguments in zip(task_ids, argument_lists):
        sequence = Path(str(arguments[0])).name
        task = fetch(task_id, wait=settings.MOTKIT_TASK_WAIT_MS)
        if task is None:
            outcomes.append(
                TaskError(
                    error="Task did not finish in time",
                    exit_code=EXIT_DATA,
                    sequence=sequence,
                    stage=group,
                )
            )
        elif not task.success:
            logger.error("Task %s for %s crashed: %s", task_id, sequence, task.result)
            outcomes.append(
                TaskError(
                    error=str(task.result),
                    exit_code=EXIT_DATA,
                    sequence=sequence,
                    stage=group,
                )
            )
        else:
            outcomes.append(task.result)
    return outcomes


def is_failure(outcome: TaskOutcome) -> bool:
    return "error" in outcome
