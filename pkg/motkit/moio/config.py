"""
The flat pipeline config file: `section.key = value` lines, `#` comments.
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence

from motkit.core.config import PipelineConfig
from motkit.core.exceptions import ConfigError
from motkit.core.serializers import build_pipeline_config

logger = logging.getLogger(__name__)

NULL_VALUES = {"", "none", "null"}


def parse_entries(text: str, source: str = "config") -> Dict[str, Optional[str]]:
    entries: Dict[str, Optional[str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{lineno}", f"expected `key = value`, got {line!r}"
            )
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}", "empty key")
        entries[key] = None if value.lower() in NULL_VALUES else value
    return entries


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Optional[str]]:
    """ `--set key=value` arguments. """
    return parse_entries("\n".join(pairs), source="--set")


def load_config(
    text: str = "",
    overrides: Sequence[Dict[str, Optional[str]]] = (),
    source: str = "config",
) -> PipelineConfig:
    """ Build the pipeline config from file text, later override mappings winning. """
    entries = parse_entries(text, source)
    for layer in overrides:
        entries.update(layer)
    return build_pipeline_config(entries)


def load_config_file(
    path: Optional[Path], overrides: Sequence[Dict[str, Optional[str]]] = ()
) -> PipelineConfig:
    text = ""
    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError("MOTKIT_CONFIG", f"config file {path} does not exist")
        text = path.read_text()
        logger.debug("Loaded pipeline config from %s", path)
    return load_config(text, overrides, source=str(path or "config"))
