"""Structured pipeline configuration with strict JSON (de)serialization.

One config file drives every CLI subcommand; command-line flags override
individual values.  Parsing is strict: unknown keys anywhere in the
document are rejected, so typos fail loudly instead of silently keeping
a default.  parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import BadConfig, DataError
from .evaluation import TASKS
from .events import EventDetectorParams
from .windows import WindowSpec

__all__ = [
    "TrainConfig",
    "ScreenConfig",
    "PathsConfig",
    "PipelineConfig",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "save_config",
]

SOURCES = ("camera", "can", "both")
SCHEMES = ("loso", "loso_lodso")


@dataclass
class TrainConfig:
    """Model-fitting knobs passed through to the solver."""

    C: float = 1.0
    class_weight: str = "balanced"
    tol: float = 1e-6
    max_iter: int = 100

    def __post_init__(self):
        if self.C <= 0:
            raise BadConfig("C must be positive")
        if self.class_weight not in ("balanced", "none"):
            raise BadConfig("class_weight must be 'balanced' or 'none'")
        if self.tol <= 0:
            raise BadConfig("tol must be positive")
        if self.max_iter < 1:
            raise BadConfig("max_iter must be >= 1")


@dataclass
class ScreenConfig:
    """Screen geometry for millimetre/visual-degree conversion."""

    viewing_distance_mm: float = 650.0
    width_mm: float = 500.0
    height_mm: float = 300.0

    def __post_init__(self):
        if min(self.viewing_distance_mm, self.width_mm, self.height_mm) <= 0:
            raise BadConfig("screen dimensions must be positive")


@dataclass
class PathsConfig:
    """Default file locations; subcommand arguments override them."""

    manifest: str = "manifest.json"
    features_csv: str = "features.csv"
    features_bin: str = "features.bin"
    report: str = "report.json"
    curve_csv: str = "decision_curve.csv"
    sweep_csv: str = "group_sweep.csv"
    study_dir: str = "study"


@dataclass
class PipelineConfig:
    """Everything the pipeline needs, in one serializable object."""

    window: WindowSpec = field(default_factory=WindowSpec)
    detector: EventDetectorParams = field(default_factory=EventDetectorParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    task: str = "early_warning"
    source: str = "camera"
    scheme: str = "loso"
    paths: PathsConfig = field(default_factory=PathsConfig)
    seed: int = 0
    screen: ScreenConfig = field(default_factory=ScreenConfig)

    def __post_init__(self):
        if self.task not in TASKS:
            raise BadConfig(f"task must be one of {TASKS}, got {self.task!r}")
        if self.source not in SOURCES:
            raise BadConfig(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.scheme not in SCHEMES:
            raise BadConfig(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")


_SECTIONS = {
    "window": WindowSpec,
    "detector": EventDetectorParams,
    "train": TrainConfig,
    "paths": PathsConfig,
    "screen": ScreenConfig,
}


def _build_section(cls, doc: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise BadConfig(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**doc)
    except (TypeError, DataError) as exc:
        # value checks in the section classes raise data errors; a bad
        # value inside a config file is a config error
        raise BadConfig(f"bad {where} section: {exc}") from exc


def config_from_dict(doc: dict) -> PipelineConfig:
    """Build a PipelineConfig from a parsed JSON document, strictly."""
    if not isinstance(doc, dict):
        raise BadConfig("config document must be a JSON object")
    allowed = {f.name for f in fields(PipelineConfig)}
    unknown = set(doc) - allowed
    if unknown:
        raise BadConfig(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in doc:
            section = doc[name]
            if not isinstance(section, dict):
                raise BadConfig(f"section {name!r} must be an object")
            kwargs[name] = _build_section(cls, section, name)
    for name in ("task", "source", "scheme"):
        if name in doc:
            if not isinstance(doc[name], str):
                raise BadConfig(f"{name} must be a string")
            kwargs[name] = doc[name]
    if "seed" in doc:
        if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
            raise BadConfig("seed must be an integer")
        kwargs["seed"] = doc["seed"]
    return PipelineConfig(**kwargs)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return asdict(cfg)


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadConfig(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(doc)


def save_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=1, sort_keys=True)
        fh.write("\n")
