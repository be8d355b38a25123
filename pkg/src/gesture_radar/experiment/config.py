"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected so a
typo cannot silently fall back to a default.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..dsp import DEFAULT_START_BIN, Mode
from ..nn import TrainConfig
from ..radar_model import RadarConfig
from ..scene_synth import ClutterSpec, DatasetSpec, Reflectance, VariantSpec


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


class Mix(enum.Enum):
    HUMAN_ONLY = "human"
    COMBINED = "combined"

    @classmethod
    def parse(cls, text: str) -> "Mix":
        t = text.strip().lower()
        for m in cls:
            if t == m.value:
                return m
        raise ConfigError(f"unknown training mix {text!r} (expected human or combined)")

    @property
    def label(self) -> str:
        return "HumanOnly" if self is Mix.HUMAN_ONLY else "Combined"


def _parse_modes(text):
    try:
        return tuple(Mode.parse(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _parse_mixes(text):
    return tuple(Mix.parse(t) for t in text.split(",") if t.strip())


def _parse_ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset
    master_seed: int = 0
    samples_per_class_human: int = 1000
    samples_per_class_sterile: int = 1000
    val_per_class: int = 200
    human_gain: float = 1.0
    sterile_gain: float = 10.0
    human_noise_power: float = 1000.0
    sterile_noise_power: float = 1000.0
    reflectivity_jitter: float = 0.5
    clutter: bool = True
    torso_gain: float = 3.0
    hand_offset_std: float = 0.02
    hand_depth_std: float = 0.01
    hand_tilt_std: float = 0.0
    reflectance_floor: float = 0.15
    z0_ref: float = 0.4
    n_k: int = 256
    start_bin: int = DEFAULT_START_BIN
    # training
    modes: tuple = (Mode.RANGE, Mode.RANGE_ANGLE)
    mixes: tuple = (Mix.HUMAN_ONLY, Mix.COMBINED)
    seeds: tuple = (0, 1, 2)
    learning_rate: float = 0.03
    batch_size: int = 64
    epochs: int = 8
    # imaging
    sar_positions: int = 64
    sar_pixels: int = 64
    sar_n_k: int = 64
    sar_sway_std: float = 0.0005
    # output
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.val_per_class < 1 or self.val_per_class >= self.samples_per_class_human:
            raise ConfigError("val_per_class must be in [1, samples_per_class_human)")
        if not self.seeds:
            raise ConfigError("at least one training seed is required")
        if not self.modes or not self.mixes:
            raise ConfigError("modes and mixes must be non-empty")
        if self.sar_positions < 2 or self.sar_pixels < 2:
            raise ConfigError("SAR raster and image need at least 2 samples per axis")
        try:
            self.train_config(self.seeds[0])
            self.dataset_spec()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def dataset_spec(self) -> DatasetSpec:
        radar = RadarConfig.from_bandwidth(n_k=self.n_k)
        return DatasetSpec(
            samples_per_class_human=self.samples_per_class_human,
            samples_per_class_sterile=self.samples_per_class_sterile,
            radar=radar, master_seed=self.master_seed,
            human=VariantSpec.human(self.human_gain, self.human_noise_power, self.clutter,
                                    self.reflectivity_jitter),
            sterile=VariantSpec.sterile(self.sterile_gain, self.sterile_noise_power),
            clutter=replace(ClutterSpec(), torso_gain=self.torso_gain),
            reflectance=Reflectance(floor=self.reflectance_floor),
            z0_ref=self.z0_ref, hand_offset_std=self.hand_offset_std,
            hand_depth_std=self.hand_depth_std, hand_tilt_std=self.hand_tilt_std)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           epochs=self.epochs, seed=int(seed))

    def to_text(self, include_out_dir: bool = True) -> str:
        """Canonical key = value rendering; parsing it gives back an equal config.

        Without ``out_dir`` the text depends only on what determines results,
        so two runs in different directories record identical bytes.
        """
        lines = []
        for f in fields(self):
            if f.name == "out_dir" and not include_out_dir:
                continue
            v = getattr(self, f.name)
            if f.name == "modes":
                v = ",".join(m.label for m in v)
            elif f.name == "mixes":
                v = ",".join(m.value for m in v)
            elif f.name == "seeds":
                v = ",".join(str(s) for s in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_PARSERS = {"modes": _parse_modes, "mixes": _parse_mixes, "seeds": _parse_ints}


def parse_config(text: str, **overrides) -> ExperimentConfig:
    types = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        default = types[key].default
        try:
            if key in _PARSERS:
                values[key] = _PARSERS[key](value)
            elif isinstance(default, bool):
                values[key] = _parse_bool(value)
            elif isinstance(default, int):
                values[key] = int(value)
            elif isinstance(default, float):
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, **overrides)
