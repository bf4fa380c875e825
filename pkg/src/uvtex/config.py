"""Run configuration: JSON file with sections, flag overrides, defaults.

Precedence is flags > file > defaults. Unknown keys anywhere are errors;
the parse -> echo roundtrip is lossless.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .codec import CodecConfig
from .diffusion import ModelConfig, TrainConfig
from .sampler import SampleConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "data": {
        "n": 512,
        "seed": 0,
        "resolution": 64,
        "include_distractor": True,
        "previews": True,
        "threads": 1,
    },
    "codec": {
        "variant": "learned",
        "channels": 4,
        "factor": 8,
        "mix_channels": False,
        "width": 16,
        "steps": 1200,
        "batch_size": 16,
        "learning_rate": 2e-3,
        "seed": 0,
        "holdout_fraction": 0.1,
    },
    "model": {
        "latent_channels": 4,
        "base_width": 64,
        "level_mults": [1, 2, 3],
        "emb_dim": 256,
        "attention_levels": [1, 2],
        "heads": 4,
        "freq_count": 8,
        "use_position_map": True,
        "use_type_module": True,
    },
    "train": {
        "learning_rate": 1e-5,
        "steps": 2000,
        "batch_size": 16,
        "seed": 0,
        "timesteps": 1000,
        "beta_start": 1e-4,
        "beta_end": 2e-2,
        "grad_clip": 1.0,
        "checkpoint_every": 0,
        "log_every": 25,
        "threads": 1,
        "holdout": 32,
    },
    "sample": {
        "steps": 50,
        "eta": 0.0,
        "seed": 0,
        "background_fill": 0.0,
        "ancestral": False,
    },
    "eval": {
        "n_eval": 32,
        "seed": 0,
        "figures": True,
        "sample_steps": 50,
        "attention_t": 700,
    },
}


def _check_keys(cfg: dict, defaults: dict, prefix: str = "") -> None:
    for key, value in cfg.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {prefix}{key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {prefix}{key!r} must be an object")
            _check_keys(value, defaults[key], prefix=f"{prefix}{key}.")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None) -> dict:
    """Defaults merged with an optional JSON config file."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    try:
        file_cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(file_cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _check_keys(file_cfg, DEFAULTS)
    return _merge(cfg, file_cfg)


def _coerce(raw: str, like):
    if isinstance(like, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {raw!r}")
    if isinstance(like, int) and not isinstance(like, bool):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, list):
        return json.loads(raw)
    return raw


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (the --set flag) onto a config."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        node, ref = cfg, DEFAULTS
        for p in parts[:-1]:
            if p not in ref or not isinstance(ref[p], dict):
                raise ConfigError(f"unknown config section {dotted!r}")
            node, ref = node[p], ref[p]
        leaf = parts[-1]
        if leaf not in ref or isinstance(ref[leaf], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node[leaf] = _coerce(raw, ref[leaf])
    return cfg


def echo(cfg: dict) -> str:
    """Canonical JSON form; load_config of the echoed text reproduces cfg."""
    return json.dumps(cfg, sort_keys=True, indent=1) + "\n"


# builders into the typed configs


def codec_config(cfg: dict) -> CodecConfig:
    return CodecConfig(**cfg["codec"])


def model_config(cfg: dict) -> ModelConfig:
    section = dict(cfg["model"])
    section["level_mults"] = tuple(section["level_mults"])
    section["attention_levels"] = tuple(section["attention_levels"])
    return ModelConfig(**section)


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"])


def sample_config(cfg: dict) -> SampleConfig:
    return SampleConfig(**cfg["sample"])
