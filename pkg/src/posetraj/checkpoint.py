"""Model checkpoints as self-describing JSON.

A checkpoint stores the model configuration, every parameter tensor as
base64-encoded little-endian bytes, and a sha256 over that content.  Loading
rebuilds the model from the stored configuration, so a checkpoint restores
predictions bit-for-bit without any pickle machinery.
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .backbones import Model, ModelConfig, build_model
from .errors import DataError

CHECKPOINT_VERSION = 1


def _state_record(model: Model) -> dict:
    state = {}
    for name, tensor in model.state_dict().items():
        array = tensor.detach().cpu().numpy()
        state[name] = {
            "dtype": str(array.dtype),
            "shape": list(array.shape),
            "data": base64.b64encode(np.ascontiguousarray(array).tobytes()).decode(),
        }
    return state


def _content_hash(config: dict, state: dict) -> str:
    payload = json.dumps({"config": config, "state": state}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def save_checkpoint(model: Model, path, extra: dict | None = None) -> str:
    """Write a checkpoint; returns the content hash."""
    config = model.cfg.to_dict()
    state = _state_record(model)
    record = {
        "version": CHECKPOINT_VERSION,
        "config": config,
        "state": state,
        "sha256": _content_hash(config, state),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(record))
    return record["sha256"]


def load_checkpoint(path) -> tuple[Model, dict]:
    """Rebuild the model from a checkpoint; returns (model, extra).

    Raises DataError on version mismatch or if the stored hash does not
    match the content (truncated or edited file).
    """
    path = Path(path)
    try:
        record = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read checkpoint {path.name}: {exc}") from exc
    if record.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {record.get('version')!r}")
    if _content_hash(record["config"], record["state"]) != record.get("sha256"):
        raise DataError(f"checkpoint {path.name} failed its integrity check")

    model = build_model(ModelConfig.from_dict(record["config"]))
    state = {}
    for name, entry in record["state"].items():
        raw = base64.b64decode(entry["data"])
        array = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"])
        state[name] = torch.from_numpy(array.copy())
    model.load_state_dict(state)
    model.eval()
    return model, record.get("extra", {})
