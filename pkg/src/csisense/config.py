"""Experiment configuration: flat typed key=value files with includes.

A config file is lines of `key = value` (# comments allowed). Values parse
as bool/int/float, comma-separated numeric lists, or strings. `include =
<path-or-preset>` merges another file (or a named scenario preset) first,
so presets are ordinary key sets that later lines override. Every run
snapshot is written back in the same format, which makes any run directory
reproducible from its own files.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import ScenarioMeta
from .synth import MotionConfig

PIPELINES = ("positioning", "chart_triplet", "chart_real_world", "classify", "twin_classify")

# Scenario presets: measurement-area geometry and cadence follow the three
# real campaigns (3.5 m / 10 m / 4 m squares; 20 ms / 20 ms / 10 ms). The
# synthetic subcarrier grids are coarser than the 3276-carrier full scale but
# span the same ~100 MHz bandwidth via wider spacing, which keeps desk-scale
# runs cheap without changing the delay-domain physics. ORUs sit 0.5 m
# outside the area corners so trajectories cannot collide with an antenna.
PRESETS = {
    "indoor": {
        "area": 3.5,
        "sample_period": 0.02,
        "subcarriers": 408,
        "spacing": 240e3,
        "duration": 60.0,
        "speed": 0.8,
        "motion": "random_waypoint",
        "grid_pitch": 0.10,
        "devices": 1,
    },
    "outdoor": {
        "area": 10.0,
        "sample_period": 0.02,
        "subcarriers": 408,
        "spacing": 240e3,
        "duration": 100.0,
        "speed": 1.0,
        "motion": "random_waypoint",
        "grid_pitch": 0.25,
        "devices": 1,
    },
    "devclass": {
        "area": 4.0,
        "sample_period": 0.01,
        "subcarriers": 96,
        "spacing": 240e3,
        "duration": 120.0,
        "speed": 1.0,
        "motion": "rotation_then_walk",
        "dwell": 30.0,
        "devices": 6,
        "labels": "device",
    },
}


@dataclass
class ExperimentConfig:
    """Flat, fully-typed experiment description; every field has a default."""

    pipeline: str = "positioning"
    preset: str = ""
    seed: int = 0

    # scenario
    area: float = 3.5
    sample_period: float = 0.02
    subcarriers: int = 408
    spacing: float = 240e3
    carrier: float = 3.45e9
    num_orus: int = 4
    antennas_per_oru: int = 4
    num_dmrs: int = 3
    oru_margin: float = 0.5
    duration: float = 60.0
    motion: str = "random_waypoint"
    speed: float = 0.8
    dwell: float = 0.0
    devices: int = 1
    scatterers: int = 15
    snr_db: float = 28.0
    labels: str = "position"

    # data
    dataset: str = ""
    next_day_dataset: str = ""
    train_frac: float = 0.8
    holdout_tail: int = 500

    # features
    chart_taps: int = 25

    # networks
    hidden: tuple = (512, 512, 512)
    chart_hidden: tuple = (256, 256)
    channels: int = 16
    blocks: int = 3

    # positioning
    grid_pitch: float = 0.10
    gt_sigma: float = 0.0  # 0 -> one grid pitch

    # charting
    t_close: float = 1.0
    t_far: float = 30.0
    triplet_margin: float = 1.0
    power_margin_db: float = 13.0
    weight_triplet: float = 1.0
    weight_bilateration: float = 1.0
    weight_bbox: float = 10.0
    k_fraction: float = 0.05

    # classification
    twin_device: int = -1
    max_epochs: int = 0  # 0 -> pipeline default
    batch_size: int = 0  # 0 -> pipeline default
    early_stop_patience: int = 30
    plateau_patience: int = 10

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}; expected one of {PIPELINES}")
        if self.preset and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {tuple(PRESETS)}")
        if isinstance(self.hidden, list):
            self.hidden = tuple(int(h) for h in self.hidden)
        if isinstance(self.chart_hidden, list):
            self.chart_hidden = tuple(int(h) for h in self.chart_hidden)

    def scenario_meta(self) -> ScenarioMeta:
        a, m = self.area, self.oru_margin
        return ScenarioMeta(
            num_orus=self.num_orus,
            antennas_per_oru=self.antennas_per_oru,
            num_dmrs=self.num_dmrs,
            num_subcarriers=self.subcarriers,
            subcarrier_spacing=self.spacing,
            carrier_frequency=self.carrier,
            sample_period=self.sample_period,
            area_min=(0.0, 0.0),
            area_max=(a, a),
            oru_positions=((-m, -m), (a + m, -m), (-m, a + m), (a + m, a + m)),
        )

    def motion_config(self, seed_offset: int = 0) -> MotionConfig:
        return MotionConfig(
            kind=self.motion, speed=self.speed, dwell=self.dwell, seed=self.seed + seed_offset
        )


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",") if part.strip()]
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str, base_dir: Path = Path(".")) -> dict:
    """Parse flat key=value lines into a dict, resolving includes first."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        value = _parse_value(raw)
        if key == "include":
            if value in PRESETS:
                merged = dict(PRESETS[value])
            else:
                merged = load_config_file(base_dir / str(value))
            for k, v in merged.items():
                pairs.setdefault_update = None
                pairs[k] = v
        elif key == "preset":
            if value not in PRESETS:
                raise ConfigError(f"line {lineno}: unknown preset {value!r}")
            for k, v in PRESETS[value].items():
                pairs[k] = v
            pairs["preset"] = value
        else:
            pairs[key] = value
    return pairs


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text, base_dir=path.parent)


def build_config(pairs: dict) -> ExperimentConfig:
    """Validate keys and coerce values into an ExperimentConfig."""
    unknown = set(pairs) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    coerced = {}
    for key, value in pairs.items():
        want = _FIELD_TYPES[key]
        if want in ("int", int) and isinstance(value, float) and value.is_integer():
            value = int(value)
        if want in ("float", float) and isinstance(value, int):
            value = float(value)
        coerced[key] = value
    try:
        return ExperimentConfig(**coerced)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def config_from_file(path) -> ExperimentConfig:
    return build_config(load_config_file(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Resolved config as parseable flat text, keys sorted."""
    lines = []
    for f in sorted(fields(cfg), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, (tuple, list)):
            rendered = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        elif isinstance(value, str):
            rendered = f'"{value}"'
        else:
            rendered = str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"
