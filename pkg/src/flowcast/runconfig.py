"""Run configuration: presets, file loading, deep merge, typed validation.

A run config is a nested mapping with sections data / model / rollout /
train / eval. Config files are YAML (JSON is valid YAML) and may name a
preset to inherit from via the top-level "preset" key; explicit keys win.
"""

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .data.moving_mnist import GeneratorConfig
from .model.config import ModelConfig
from .rollout import RolloutConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


PRESETS = {
    # small enough to train on a laptop CPU in minutes
    "smmnist-desk": {
        "data": {
            "canvas": 32, "digits": 1, "frames": 15,
            "speed_min": 1.0, "speed_max": 2.0,
            "clips": 320, "glyph_size": 12, "format": "f32",
            "ratios": [0.8, 0.1, 0.1],
        },
        "model": {
            "variant": "slamp", "image_size": 32, "channels": 1,
            "feature_dim": 64, "latent_pixel": 8, "latent_flow": 8,
            "hidden_dim": 128, "posterior_layers": 1, "prior_layers": 1,
            "predictor_layers": 2, "encoder_channels": [8, 16, 32],
            "mask_channels": 16, "se_reduction": 4,
            "logvar_min": -10.0, "logvar_max": 10.0, "max_flow": None,
        },
        "rollout": {"t_cond": 5, "t_pred": 5, "first_pred_index": 2},
        "train": {
            "lr": 3.0e-4, "beta1": 0.9, "beta2": 0.999, "batch_size": 8,
            "kl_beta": 1.0e-4, "epochs": 10, "updates_per_epoch": 500,
            "grad_clip": 10.0, "scheduled_sampling": True, "ss_k": 500.0,
            "recon_weights": [1.0, 1.0, 1.0],
        },
        "eval": {"n_samples": 10, "t_pred": 5},
    },
    # the full benchmark protocol: 64x64, two digits, best-of-100
    "smmnist-paper": {
        "data": {
            "canvas": 64, "digits": 2, "frames": 25,
            "speed_min": 2.0, "speed_max": 4.0,
            "clips": 8000, "glyph_size": 28, "format": "f32",
            "ratios": [0.9, 0.05, 0.05],
        },
        "model": {
            "variant": "slamp", "image_size": 64, "channels": 1,
            "feature_dim": 128, "latent_pixel": 20, "latent_flow": 20,
            "hidden_dim": 256, "posterior_layers": 1, "prior_layers": 1,
            "predictor_layers": 2, "encoder_channels": [32, 64, 128, 256],
            "mask_channels": 64, "se_reduction": 4,
            "logvar_min": -10.0, "logvar_max": 10.0, "max_flow": None,
        },
        "rollout": {"t_cond": 5, "t_pred": 10, "first_pred_index": 2},
        "train": {
            "lr": 3.0e-4, "beta1": 0.9, "beta2": 0.999, "batch_size": 32,
            "kl_beta": 1.0e-4, "epochs": 300, "updates_per_epoch": 1000,
            "grad_clip": 10.0, "scheduled_sampling": True, "ss_k": 3000.0,
            "recon_weights": [1.0, 1.0, 1.0],
        },
        "eval": {"n_samples": 100, "t_pred": 20},
    },
}

DEFAULT_PRESET = "smmnist-desk"


def deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, preset=None, overrides=None):
    """Assemble a full config dict from preset, optional file, and overrides."""
    file_cfg = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_cfg = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config root must be a mapping, got {type(file_cfg).__name__}")

    preset = preset or file_cfg.pop("preset", None) or DEFAULT_PRESET
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}, have {sorted(PRESETS)}")
    cfg = deep_merge(PRESETS[preset], file_cfg)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    cfg["preset"] = preset
    return cfg


def config_fingerprint(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _section(cfg, name):
    sec = cfg.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(f"config is missing the {name!r} section")
    return sec


def build_generator_config(cfg):
    d = _section(cfg, "data")
    try:
        gen = GeneratorConfig(
            canvas_size=d.get("canvas", 32),
            num_digits=d.get("digits", 1),
            num_frames=d.get("frames", 15),
            speed_min=d.get("speed_min", 1.0),
            speed_max=d.get("speed_max", 2.0),
        )
        gen.validate()
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad data config: {e}") from e
    return gen


def build_model_config(cfg, variant=None):
    m = dict(_section(cfg, "model"))
    if variant is not None:
        m["variant"] = variant
    try:
        return ModelConfig.from_dict(m)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad model config: {e}") from e


def build_rollout_config(cfg, variant=None, t_pred=None):
    r = _section(cfg, "rollout")
    first = r.get("first_pred_index", 2)
    if first != 2:
        raise ConfigError(
            f"first_pred_index {first} unsupported; predictions start at the "
            f"second frame"
        )
    try:
        return RolloutConfig(
            t_cond=r.get("t_cond", 5),
            t_pred=t_pred if t_pred is not None else r.get("t_pred", 10),
            variant=variant or _section(cfg, "model").get("variant", "slamp"),
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad rollout config: {e}") from e


def build_train_config(cfg, seed=0):
    t = _section(cfg, "train")
    known = {"lr", "beta1", "beta2", "batch_size", "kl_beta", "epochs",
             "updates_per_epoch", "grad_clip", "scheduled_sampling", "ss_k",
             "recon_weights"}
    extra = set(t) - known
    if extra:
        raise ConfigError(f"unknown train config keys: {sorted(extra)}")
    try:
        tc = TrainConfig(seed=seed, **{k: v for k, v in t.items()})
        tc.recon_weights = tuple(float(w) for w in tc.recon_weights)
        tc.validate()
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad train config: {e}") from e
    return tc
