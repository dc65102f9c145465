"""Versioned checkpoint container.

Serialization is a pickle of nested dicts whose leaves are numpy arrays and
plain scalars, so save -> load -> save is a byte-identical fixed point
(torch's own zip container is not). Loads reject version mismatches.
"""

from __future__ import annotations

import hashlib
import pickle
from pathlib import Path

import numpy as np
import torch

CHECKPOINT_VERSION = 1
_MAGIC = "tgan-checkpoint"


class CheckpointError(Exception):
    pass


def _to_plain(obj):
    if isinstance(obj, torch.Tensor):
        return {"__tensor__": True, "dtype": str(obj.dtype), "data": obj.detach().cpu().numpy()}
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        converted = [_to_plain(v) for v in obj]
        return converted if isinstance(obj, list) else tuple(converted)
    return obj


def _from_plain(obj):
    if isinstance(obj, dict):
        if obj.get("__tensor__"):
            dtype = getattr(torch, obj["dtype"].removeprefix("torch."))
            return torch.from_numpy(np.array(obj["data"])).to(dtype)
        return {k: _from_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        converted = [_from_plain(v) for v in obj]
        return converted if isinstance(obj, list) else tuple(converted)
    return obj


def serialize(payload: dict) -> bytes:
    """Encode a checkpoint payload deterministically."""
    record = {
        "magic": _MAGIC,
        "version": CHECKPOINT_VERSION,
        "payload": _to_plain(payload),
    }
    return pickle.dumps(record, protocol=4)


def deserialize(blob: bytes) -> dict:
    record = pickle.loads(blob)
    if not isinstance(record, dict) or record.get("magic") != _MAGIC:
        raise CheckpointError("not a recognized checkpoint file")
    if record.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {record.get('version')} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    return _from_plain(record["payload"])


def save(path: str | Path, payload: dict) -> str:
    """Write a checkpoint; returns its content hash (checkpoint id)."""
    blob = serialize(payload)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()[:16]


def load(path: str | Path) -> dict:
    return deserialize(Path(path).read_bytes())


def content_id(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
