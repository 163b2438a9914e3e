"""Pipeline configuration shared by the feature extractors and the CLI."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

MODES = ("mc-mar", "bf-mb", "fbank")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "mc-mar"
    bands: int = 40
    order: int = 107
    low_hz: float = 200.0
    high_hz: float = 6500.0
    segment_seconds: float = 2.0
    frame_ms: float = 25.0
    shift_ms: float = 10.0
    env_rate: float = 1000.0
    gain_normalize: bool = True
    group_size: int = 4
    context: int = 21
    max_delay_ms: float = 10.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("bands", "order", "group_size", "context"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in (
            "low_hz", "high_hz", "segment_seconds", "frame_ms", "shift_ms",
            "env_rate", "max_delay_ms",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.low_hz >= self.high_hz:
            raise ConfigError("low_hz must be below high_hz")
        if self.shift_ms > self.frame_ms:
            raise ConfigError("shift_ms must not exceed frame_ms")
        if self.context % 2 == 0:
            raise ConfigError("context must be odd")
        if not isinstance(self.gain_normalize, bool):
            raise ConfigError("gain_normalize must be a boolean")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path, **overrides) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)
