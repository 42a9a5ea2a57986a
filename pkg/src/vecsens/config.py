"""Experiment configuration and its flat ``key = value`` file format.

Example::

    # two sources on a 4-element tripole array
    sensor = tripole
    layout = linear
    elements = 4
    sources = 10,20,15,30; 60,70,60,80
    snr_start = 0
    snr_stop = 30
    snr_step = 5
    snapshots = 1000
    trials = 50
    methods = det, music4d

Angles are in degrees, SNR in dB. Sources are ``theta,phi,gamma,eta``
4-tuples separated by ``;``. Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .array_model import ArrayGeometry, SensorKind, SourceParams
from .subspace_music import Method

REFERENCE_SOURCES = [(10.0, 20.0, 15.0, 30.0), (60.0, 70.0, 60.0, 80.0)]
AMBIGUITY_SOURCE = (30.0, 80.0, 20.0, 50.0)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    sensor: SensorKind = SensorKind.TRIPOLE
    layout: str = "linear"
    elements: int = 4
    rows: int = 2
    cols: int = 3
    spacing: float = 0.5
    sources: list[tuple[float, float, float, float]] = field(default_factory=lambda: list(REFERENCE_SOURCES))
    snr_start: float = 0.0
    snr_stop: float = 30.0
    snr_step: float = 5.0
    snapshots: int = 1000
    trials: int = 50
    grid_step_doa: float = 1.0
    grid_step_pol: float = 1.0
    refine: bool = True
    polish: bool = True
    window: float = 5.0
    noise_free: bool = False
    methods: list[Method] = field(default_factory=lambda: [Method.DET, Method.MUSIC_4D])
    seed: int = 0
    workers: int = 1
    theta2: list[float] = field(default_factory=lambda: [20.0, 40.0, 60.0, 80.0])
    out: str = ""

    def validate(self) -> "ExperimentConfig":
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.snapshots < 1:
            raise ConfigError("snapshots must be >= 1")
        if self.snr_step <= 0 or self.snr_stop < self.snr_start:
            raise ConfigError("SNR sweep is empty (need snr_step > 0 and snr_stop >= snr_start)")
        if self.layout not in ("linear", "planar"):
            raise ConfigError(f"layout must be linear or planar, got {self.layout!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for s in self.sources:
            if not SourceParams.from_degrees(*s).in_range():
                raise ConfigError(f"source {s} outside theta,gamma in [0,90], phi in [0,360), eta in [-180,180)")
        if not self.methods:
            raise ConfigError("no estimation method selected")
        self.geometry()
        return self

    def geometry(self) -> ArrayGeometry:
        try:
            if self.layout == "linear":
                return ArrayGeometry.linear(self.sensor, self.elements, self.spacing)
            return ArrayGeometry.planar(self.sensor, self.rows, self.cols, self.spacing)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def source_params(self) -> list[SourceParams]:
        return [SourceParams.from_degrees(*s) for s in self.sources]

    def snr_points(self) -> list[float]:
        n = int(np.floor((self.snr_stop - self.snr_start) / self.snr_step + 1e-9)) + 1
        return [float(self.snr_start + i * self.snr_step) for i in range(n)]


def defaults_for(command: str) -> ExperimentConfig:
    """Scenario defaults of each CLI subcommand."""
    if command in ("spectrum", "ambiguity"):
        return ExperimentConfig(elements=5, sources=[AMBIGUITY_SOURCE], noise_free=True, methods=[Method.DET])
    if command == "compare-estimators":
        return ExperimentConfig(sources=[REFERENCE_SOURCES[0]], methods=[Method.DET, Method.EIG])
    if command == "compare-geometry":
        return ExperimentConfig(methods=[Method.DET])
    return ExperimentConfig()


def _parse_sources(text: str):
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        parts = [p for p in chunk.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ConfigError(f"source {chunk.strip()!r} needs 4 comma-separated angles")
        out.append(tuple(float(p) for p in parts))
    return out


def _parse_value(name: str, kind, text: str):
    text = text.strip()
    if name == "sources":
        return _parse_sources(text)
    if name == "methods":
        return [Method(m.strip()) for m in text.split(",") if m.strip()]
    if name == "theta2":
        return [float(x) for x in text.split(",") if x.strip()]
    if name == "sensor":
        return SensorKind(text)
    if kind is bool:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    return kind(text)


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def apply_overrides(config: ExperimentConfig, pairs: dict[str, str]) -> ExperimentConfig:
    known = {f.name: f for f in fields(ExperimentConfig)}
    updates = {}
    for key, raw in pairs.items():
        name = key.strip().replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        kind = _TYPES.get(str(known[name].type), str)
        try:
            updates[name] = _parse_value(name, kind, raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return dataclasses.replace(config, **updates)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value
    return apply_overrides(base or ExperimentConfig(), pairs)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text, base)
