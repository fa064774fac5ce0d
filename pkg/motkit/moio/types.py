from typing import Dict, List, Optional, TypedDict


class TaskError(TypedDict):
    """ A failed per-sequence task, as returned by a django-q worker """
    error: str
    exit_code: int
    sequence: str
    stage: Optional[str]


class SequenceResult(TypedDict):
    """ A finished per-sequence task """
    sequence: str
    scene_kind: str
    config: dict
    inputs: Dict[str, str]
    outputs: Dict[str, str]
    report: Optional[dict]


class ManifestPayload(TypedDict):
    """ Everything needed to audit one command run, written as manifest.json """
    command: str
    arguments: List[str]
    config: Dict[str, object]
    defaults_applied: List[str]
    inputs: Dict[str, str]
    outputs: Dict[str, str]
    report: Optional[dict]
