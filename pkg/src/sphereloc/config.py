"""Configuration schema, TOML loading, and runtime knobs.

Configuration is a tree of dataclasses with safe defaults.  A TOML file (or
a parsed table) overrides fields by name; any key that does not name a
field fails loudly with its full dotted path, so typos cannot silently fall
back to defaults.  Numeric fields accept ints where floats are expected.

The worker count honors the SPHERELOC_THREADS environment variable; 0 or an
unset variable means one worker per CPU.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

THREADS_ENV = "SPHERELOC_THREADS"


@dataclass
class GridConfig:
    bandwidth: int = 100


@dataclass
class ProjectionConfig:
    k: int = 1
    max_angle: float = 0.0  # radians; 0 selects two grid steps


@dataclass
class FusionConfig:
    standardize: bool = True


@dataclass
class TaperConfig:
    theta0: float = float(np.pi / 6)
    l_h: int = 20
    n_tapers: int = 0  # 0 selects the Shannon count


@dataclass
class VoteConfig:
    l_eval: int = 15
    k_candidates: int = 15
    carry: str = "previous"
    zscore_mode: str = "described"


@dataclass
class DescriptorConfig:
    l_feat: int = 64
    embed_dim: int = 256
    standardize: bool = True


@dataclass
class TrainConfig:
    epochs: int = 40
    lr: float = 0.0046
    batch_size: int = 13
    margin: float = 2.0
    spread: float = 0.2
    seed: int = 0


@dataclass
class MineConfig:
    min_spacing: float = 0.10
    positive_radius: float = 5.0
    negative_min: float = 6.0
    negative_max: float = 20.0


@dataclass
class SynthConfig:
    seed: int = 0
    n_boxes: int = 24
    extent: float = 28.0
    clear_radius: float = 3.0
    n_beams: int = 128
    n_azimuths: int = 256
    n_cameras: int = 4
    # 0.4 MP grayscale, matching the modeled sensor.
    image_width: int = 768
    image_height: int = 512
    max_range: float = 80.0
    n_places: int = 32
    min_spacing: float = 1.0


@dataclass
class EvalConfig:
    seed: int = 7
    # Harness bandwidth; the library default stays at the full pipeline's
    # resolution, experiments run at desk scale.
    bandwidth: int = 64
    map_size: int = 1000
    n_queries: int = 150
    map_spacing: float = 2.4
    query_offset: float = 2.0
    success_radius: float = 5.0
    recall_at: tuple = (1, 5, 10, 15)
    rotation_map_size: int = 500
    rotation_queries: int = 120
    rotation_angles_deg: tuple = (0.0, 45.0, 90.0, 135.0, 180.0)
    rotation_recall_at: int = 10
    extent: float = 62.0
    n_boxes: int = 200
    # Training world mirrors the evaluation world's box statistics so the
    # learned metric transfers; only the seed differs.
    train_extent: float = 62.0
    train_boxes: int = 200
    train_places: int = 200
    train_spacing: float = 1.2
    timing_bandwidth: int = 100
    timing_samples: int = 16
    timing_knn_entries: int = 3000
    profiles: tuple = ("full", "lite")
    # Desk-scale camera resolution for the harness; dataset emission keeps
    # the full 0.4 MP model from the synth section.
    image_width: int = 128
    image_height: int = 96


@dataclass
class Config:
    grid: GridConfig = field(default_factory=GridConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    taper: TaperConfig = field(default_factory=TaperConfig)
    vote: VoteConfig = field(default_factory=VoteConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mine: MineConfig = field(default_factory=MineConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _coerce(value, target_type, dotted: str):
    if target_type is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if target_type is int and isinstance(value, int) and not isinstance(value, bool):
        return int(value)
    if target_type is bool and isinstance(value, bool):
        return value
    if target_type is str and isinstance(value, str):
        return value
    if target_type is tuple and isinstance(value, (list, tuple)):
        return tuple(value)
    raise InvalidParameterError(
        f"configuration key '{dotted}' expects {target_type.__name__}, "
        f"got {type(value).__name__}"
    )


def apply_table(config, table: dict, prefix: str = "") -> None:
    """Overlay a parsed TOML table onto a config dataclass, in place."""
    names = {f.name: f for f in dataclasses.fields(config)}
    for key, value in table.items():
        dotted = f"{prefix}{key}"
        if key not in names:
            raise InvalidParameterError(f"unknown configuration key '{dotted}'")
        current = getattr(config, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise InvalidParameterError(
                    f"configuration key '{dotted}' expects a table"
                )
            apply_table(current, value, prefix=f"{dotted}.")
        else:
            setattr(config, key, _coerce(value, type(current), dotted))


def load_config(path: str | Path | None = None) -> Config:
    """Config with defaults, overridden by an optional TOML file."""
    config = Config()
    if path is not None:
        with open(path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise InvalidParameterError(f"invalid configuration TOML: {e}") from None
        apply_table(config, doc)
    return config


def resolved(config: Config) -> dict:
    """Plain-dict view of every setting, for logging and summaries."""
    return dataclasses.asdict(config)


def worker_count() -> int:
    """Worker threads to use; SPHERELOC_THREADS=0 or unset means one per CPU."""
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidParameterError(
            f"{THREADS_ENV} must be an integer, got {raw!r}"
        ) from None
    if n < 0:
        raise InvalidParameterError(f"{THREADS_ENV} must be >= 0, got {n}")
    if n == 0:
        return os.cpu_count() or 1
    return n
