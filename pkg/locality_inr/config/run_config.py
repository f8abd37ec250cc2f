"""
Run configuration: the typed RunConfig and its flat key-value file form.

A config file is read with python-dotenv, one `section.field = value` per
line, plus the top-level keys `experiment`, `preset`, `dataset_path` and
`output_dir`. Values start from the preset (default: the experiment kind)
and every key in the file overrides one field.

    experiment = image
    preset = desk_image
    dataset_path = synthetic
    decoder.sigma_levels = 32,8
    train.steps = 10
"""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple, Union

from dotenv import dotenv_values

from locality_inr.config.presets import EXPERIMENT_KINDS, get_preset
from locality_inr.data_store import DatasetConfig
from locality_inr.errors import ConfigError
from locality_inr.inr_model import resolve_latent_dim
from locality_inr.layers.decoder import DecoderConfig
from locality_inr.layers.encoder import EncoderConfig, patch_grid
from locality_inr.training import TrainConfig

OUTPUT_ROOT_ENV = 'LINR_OUTPUT_ROOT'
TOP_LEVEL_KEYS = ('experiment', 'preset', 'dataset_path', 'output_dir')
SECTIONS = {
    'encoder': EncoderConfig,
    'decoder': DecoderConfig,
    'train': TrainConfig,
    'dataset': DatasetConfig,
}
# Filled from the dataset when the model is built
DERIVED_FIELDS = {
    'encoder.image_height', 'encoder.image_width', 'encoder.in_channels', 'encoder.max_views',
    'decoder.d_in', 'decoder.d_out',
}
_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


@dataclass
class RunConfig:
    experiment: str = 'image'
    dataset_path: str = ''
    output_dir: str = 'runs/default'
    preset: str = ''
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    @property
    def d_in(self) -> int:
        return 2 if self.experiment == 'image' else 6

    def validate(self) -> None:
        """Every cross-field check that can fail before step 0."""
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigError("experiment", f"unknown experiment kind {self.experiment!r}; use {EXPERIMENT_KINDS}")
        if not self.dataset_path:
            raise ConfigError("dataset_path", "missing dataset path (a directory, a .npz scene file or 'synthetic')")
        if not self.output_dir:
            raise ConfigError("output_dir", "missing output directory")
        self.encoder.validate()
        self.train.validate()
        self.dataset.validate()
        decoder = replace(self.decoder, d_in=self.d_in)
        decoder.validate()
        resolve_latent_dim(self.encoder, decoder)
        if self.encoder.embed_dim % self.encoder.num_heads:
            raise ConfigError("encoder.num_heads", "must divide the token width")
        if self.dataset_path == 'synthetic':
            if self.encoder.patch_size > min(self.dataset.height, self.dataset.width):
                raise ConfigError(
                    "encoder.patch_size",
                    f"patch {self.encoder.patch_size} larger than the {self.dataset.height}x{self.dataset.width} "
                    f"images (grid {patch_grid(self.dataset.height, self.dataset.width, self.encoder.patch_size)})",
                )

    def resolved_output_dir(self) -> str:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not os.path.isabs(self.output_dir):
            return os.path.join(root, self.output_dir)
        return self.output_dir

    def to_flat(self) -> Dict[str, str]:
        flat = {key: str(getattr(self, key)) for key in TOP_LEVEL_KEYS}
        for section in SECTIONS:
            for f in dataclasses.fields(getattr(self, section)):
                key = f"{section}.{f.name}"
                if key not in DERIVED_FIELDS:
                    flat[key] = _format_value(getattr(getattr(self, section), f.name))
        return flat


# ─────────────────────────────────────────────────────────────────────────────
# VALUE COERCION
# ─────────────────────────────────────────────────────────────────────────────
def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ','.join(_format_value(v) for v in value)
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if value is None:
        return 'none'
    return str(value)


def _coerce(key: str, hint, raw: str):
    text = raw.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    try:
        if origin is Union:
            if type(None) in args:
                if text.lower() in ('', 'none'):
                    return None
                inner = [a for a in args if a is not type(None)]
                return _coerce(key, inner[0], text)
            if text == 'auto' and str in args:
                return 'auto'
            return _coerce(key, args[0], text)
        if origin in (tuple, Tuple):
            if not text:
                raise ValueError("empty list")
            return tuple(_coerce(key, args[0], part) for part in text.split(','))
        if hint is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
    except ValueError as e:
        raise ConfigError(key, f"cannot parse {raw!r} ({e})") from None
    raise ConfigError(key, f"unsupported field type {hint}")


def apply_overrides(config: RunConfig, values: Dict[str, Optional[str]]) -> RunConfig:
    """Return a copy of `config` with each `key -> raw string` applied; unknown keys are errors."""
    sections = {name: replace(getattr(config, name)) for name in SECTIONS}
    top = {key: getattr(config, key) for key in TOP_LEVEL_KEYS}
    for key, raw in values.items():
        if raw is None:
            raise ConfigError(key, "key has no value")
        if key in TOP_LEVEL_KEYS:
            top[key] = raw.strip()
            continue
        section, _, name = key.partition('.')
        if section not in SECTIONS or not name:
            raise ConfigError(key, "unknown key")
        if key in DERIVED_FIELDS:
            raise ConfigError(key, "set from the dataset, not the config file")
        hints = typing.get_type_hints(SECTIONS[section])
        if name not in hints or name not in {f.name for f in dataclasses.fields(SECTIONS[section])}:
            raise ConfigError(key, "unknown key")
        setattr(sections[section], name, _coerce(key, hints[name], raw))
    return RunConfig(**top, **sections)


def config_from_preset(name: str) -> RunConfig:
    preset = get_preset(name)
    sections = {
        section: SECTIONS[section](**preset.get(section, {}))
        for section in SECTIONS
    }
    return RunConfig(experiment=preset['experiment'], preset=name, **sections)


def build_run_config(values: Dict[str, Optional[str]]) -> RunConfig:
    """Preset (explicit `preset`, else the experiment kind) plus overrides, validated."""
    experiment = (values.get('experiment') or 'image').strip()
    preset = (values.get('preset') or experiment).strip()
    config = apply_overrides(config_from_preset(preset), values)
    config.validate()
    return config


def parse_config_file(path: str) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError("config", f"config file not found: {path}")
    values = dotenv_values(path, interpolate=False)
    return build_run_config(dict(values))


def write_config_file(path: str, config: RunConfig) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as f:
        for key, value in config.to_flat().items():
            f.write(f"{key} = {value}\n")


def run_config_from_flat(flat: Dict[str, str]) -> RunConfig:
    """Inverse of RunConfig.to_flat (checkpoint headers store the flat form)."""
    return build_run_config(dict(flat))
