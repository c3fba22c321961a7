"""Layered run configuration.

Configurations are plain INI files whose sections mirror the pipeline
stages.  Any value can be overridden on the command line with
``--section.key value``.  Unknown sections or keys are configuration
errors that name the offending key.  The fully resolved configuration is
echoed into every artifact a command writes, and its hash names the run
directory, so any artifact can be reproduced from what it embeds.
"""

from __future__ import annotations

import configparser
import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigError

DEFAULTS: dict[str, dict] = {
    "world": {
        "kind": "random",  # random | crossing
        "n_scenes": 100,
        "n_agents_min": 1,
        "n_agents_max": 3,
        "speed_min": 0.9,
        "speed_max": 1.5,
        "turn_prob": 0.15,
        "turn_angle_min": 0.7,
        "turn_angle_max": 2.0,
        "bounds_min": -12.0,
        "bounds_max": 12.0,
        "frame_rate": 2.5,
        "turn_rate": 1.6,
        "t_obs": 9,
        "t_pred": 12,
        "project_2d": False,
        "camera_x": 0.0,
        "camera_y": -20.0,
        "camera_z": 16.0,
        "look_x": 0.0,
        "look_y": 0.0,
        "look_z": 1.0,
        "focal": 1.0,
    },
    "gait": {
        "step_frequency": 1.8,
        "stride_amplitude": 0.5,
        "lead_time": 0.8,
        "noise_std": 0.0,
    },
    "backbone": {
        "family": "recurrent",
        "embed_dim": 64,
        "hidden_dim": 128,
        "interaction": "distance-pool",
        "interaction_dim": 0,  # 0: twice the fused feature width
        "noise_dim": 0,
    },
    "pose": {
        "enabled": True,
        "dim": 128,
        "layers": 2,
        "heads": 16,
        "tokenization": "per-frame-joint",
        "pooling": "mean",
        "fusion": "concat",
    },
    "train": {
        "epochs": 20,
        "batch_size": 64,
        "lr": 0.0,  # 0: family default
        "lr_decay": 0.5,
        "lr_step": 10,
        "noise_frac": 0.0,
        "noise_std": 0.2,
        "early_stop_patience": 0,  # 0: disabled
        "val_fraction": 0.1,
        "epoch_checkpoints": False,
    },
    "eval": {
        "k": 1,
        "static_eps": 1.0,
        "linear_eps": 0.5,
        "interaction_radius": 3.0,
        "perturb_kind": "",  # "" | noise | occlusion | strip | restrict
        "perturb_std": 0.2,
        "perturb_scheme": "random_limb_50",
        "keep_joints": "",  # comma-separated names or indices, for restrict
        "examples": 4,  # scenes embedded in eval reports for plotting
        "top_joints": 8,
    },
    "navsim": {
        "predictor": "none",
        "relaxation_time": 0.5,
        "repulsion_strength": 2.0,
        "repulsion_range": 0.8,
        "agent_radius": 0.3,
        "desired_speed": 1.2,
        "dt": 0.1,
        "prediction_force_scale": 0.6,
        "prediction_horizon": 12,
        "exclude_timeouts": False,
        "max_episodes": 0,  # 0: every scene in the corpus
    },
    "paths": {
        "runs": "runs",
        "corpus": "",
        "model": "",
        "out": "",
    },
    "seed": {
        "value": 0,
    },
}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _coerce(section: str, key: str, raw: str):
    default = DEFAULTS[section][key]
    text = str(raw).strip()
    if isinstance(default, bool):
        lowered = text.lower()
        if lowered in _TRUE_WORDS:
            return True
        if lowered in _FALSE_WORDS:
            return False
        raise ConfigError(f"{section}.{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: expected a number, got {raw!r}") from exc
    return text


def load_config(path=None) -> dict:
    """Defaults, optionally overlaid with an INI file."""
    config = copy.deepcopy(DEFAULTS)
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            config[section][key] = _coerce(section, key, raw)
    return config


def apply_overrides(config: dict, tokens: list[str]) -> dict:
    """Apply ``--section.key value`` (or ``--section.key=value``) tokens."""
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or "." not in token:
            raise ConfigError(f"unrecognized argument {token!r}")
        body = token[2:]
        if "=" in body:
            address, value = body.split("=", 1)
            i += 1
        else:
            address = body
            if i + 1 >= len(tokens):
                raise ConfigError(f"override {token} is missing a value")
            value = tokens[i + 1]
            i += 2
        section, _, key = address.partition(".")
        if section not in config:
            raise ConfigError(f"unknown config section in --{address}")
        if key not in config[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        config[section][key] = _coerce(section, key, value)
    return config


def config_hash(config: dict) -> str:
    """Short stable digest of the resolved configuration."""
    payload = json.dumps(config, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def echo_config(config: dict, path) -> None:
    """Write the resolved configuration next to the artifacts it produced."""
    Path(path).write_text(json.dumps(config, sort_keys=True, indent=2) + "\n")
