"""Flat run configuration: JSON file merged with command-line overrides.

Keys (all optional, defaults in ``DEFAULTS``)::

    normal_label, seed, epochs, batch_size, lr_start, lr_end, beta1, beta2,
    eps, flow_layers, flow_init_slope, holdout_fraction,
    M, L, hidden, d_out, fuse_dim, streams,
    K, scheme,
    data, test_data, model, out
"""
from __future__ import annotations

import json
from pathlib import Path

from .encoder import STREAMS, EncoderConfig
from .scoring import DEFAULT_K, SCHEMES
from .trainer import TrainConfig

_TRAIN_KEYS = ("normal_label", "seed", "epochs", "batch_size", "lr_start", "lr_end", "beta1", "beta2",
               "eps", "flow_layers", "flow_init_slope", "holdout_fraction")
_ENCODER_KEYS = ("M", "L", "hidden", "d_out", "fuse_dim", "streams")

DEFAULTS: dict = {
    **{k: getattr(TrainConfig(), k) for k in _TRAIN_KEYS},
    **{k: getattr(EncoderConfig(), k) for k in _ENCODER_KEYS},
    "K": DEFAULT_K,
    "scheme": "knn",
    "data": None,
    "test_data": None,
    "model": None,
    "out": None,
}
DEFAULTS["streams"] = list(STREAMS)


class ConfigError(ValueError):
    pass


def parse_streams(value) -> list[str]:
    if isinstance(value, str):
        value = [s for s in value.replace("+", ",").split(",") if s]
    return list(value)


def load_run_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults <- JSON file <- overrides (``None`` override values are ignored)."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path}: top level must be an object")
        unknown = sorted(set(raw) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(raw)
    for k, v in (overrides or {}).items():
        if k not in DEFAULTS:
            raise ConfigError(f"unknown config key: {k}")
        if v is not None:
            cfg[k] = v
    cfg["streams"] = parse_streams(cfg["streams"])
    if cfg["scheme"] not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {cfg['scheme']!r}")
    return cfg


def train_config(cfg: dict) -> TrainConfig:
    try:
        enc = EncoderConfig(**{k: cfg[k] for k in _ENCODER_KEYS})
        return TrainConfig(encoder=enc, **{k: cfg[k] for k in _TRAIN_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
