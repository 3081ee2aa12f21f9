"""AnalysisConfig: settings shared by analyze, transform and simulate."""

import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

from pmfence.analysis.lattice import Mode
from pmfence.errors import ConfigError

logger = logging.getLogger(__name__)

REPORT_VERSION = "1"


@dataclass(frozen=True)
class AnalysisConfig:
    # Functions whose results are PM pointers; must include pmalloc
    allocators: frozenset[str] = field(default_factory=lambda: frozenset({"pmalloc"}))

    mode: Mode = Mode.OPT

    # Overrides the program's `lineattr` when set
    lineattr: Optional[int] = None

    # Oracle step bound across all threads, used when the harness gives none
    bound: int = 64

    # Opt/Flit repair loop gives up and falls back to Base insertion after this
    max_repair_rounds: int = 8

    # Functions with more PM parameters than this use one all-bottom context
    max_context_params: int = 8

    # FliT counter table entries
    flit_table_size: int = 1024

    report_version: str = REPORT_VERSION

    def __post_init__(self) -> None:
        if "pmalloc" not in self.allocators:
            raise ConfigError("allocators must include 'pmalloc'")
        if self.lineattr is not None and (self.lineattr < 8 or self.lineattr & (self.lineattr - 1)):
            raise ConfigError(f"lineattr must be a power of two >= 8, got {self.lineattr}")
        for name in ("bound", "max_repair_rounds", "max_context_params", "flit_table_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


def parse_mode(value: str) -> Mode:
    try:
        return Mode(value)
    except ValueError:
        raise ConfigError(f"Unknown mode '{value}' (expected base, opt or flit)") from None


def parse_allocators(value: Union[str, list[str]]) -> frozenset[str]:
    names = value.split(",") if isinstance(value, str) else value
    cleaned = {n.strip() for n in names if n.strip()}
    # pmalloc is the IR's own allocation instruction and always seeds PM-ness
    return frozenset(cleaned | {"pmalloc"})


_INT_KEYS = frozenset({"lineattr", "bound", "max_repair_rounds", "max_context_params", "flit_table_size"})

_CONVERTERS = {
    "allocators": parse_allocators,
    "mode": parse_mode,
}


def load_config(config_path: Optional[Union[str, Path]] = None, **overrides: Any) -> AnalysisConfig:
    """Build an AnalysisConfig from an optional JSON file plus explicit overrides.

    Args:
        config_path: JSON object with AnalysisConfig field names as keys.
            None means defaults only.
        **overrides: Values that win over the file; None values are ignored.

    Returns:
        Validated AnalysisConfig

    Raises:
        FileNotFoundError: If config_path is given but does not exist
        ConfigError: On unknown keys, bad JSON, or invalid values
    """
    data: dict[str, Any] = {}
    if config_path is not None:
        config_file = Path(config_path).expanduser()
        if not config_file.exists():
            raise FileNotFoundError(f"Config not found at {config_file}")
        try:
            with open(config_file) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed config {config_file}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config {config_file} must hold a JSON object")

    data.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in fields(AnalysisConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}")

    values: dict[str, Any] = {}
    for key, value in data.items():
        convert = _CONVERTERS.get(key)
        if convert is not None and not isinstance(value, (Mode, frozenset)):
            value = convert(value)
        elif key in _INT_KEYS:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{key} must be an integer, got {value!r}")
        values[key] = value

    config = replace(AnalysisConfig(), **values)
    logger.debug("Loaded config: mode=%s allocators=%s", config.mode.value, sorted(config.allocators))
    return config
