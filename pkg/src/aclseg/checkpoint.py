"""Bit-exact model persistence.

A checkpoint is a directory holding manifest.json (architecture kind,
construction config, and a parameter-name -> byte-offset/shape table) and
weights.bin (one contiguous little-endian f32 blob). Loading rebuilds the
architecture from the config and copies values back in, so a save/load
round trip reproduces every parameter bit-for-bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContractError, CorruptionError

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"


def _builder(kind: str):
    # local imports keep this module free of circular dependencies
    if kind == "aclseg":
        from .model import ACLSegModel

        return ACLSegModel.from_archive
    if kind == "unet":
        from .baselines import MultiHeadUNet

        return MultiHeadUNet.from_archive
    raise CorruptionError(f"unknown checkpoint kind {kind!r}")


def save_model(model, dir_path) -> Path:
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    doc = model.archive_config()
    table: dict[str, dict] = {}
    blob = bytearray()
    for name, p in model.named_parameters():
        if p.data.dtype != np.float32:
            raise ContractError(f"checkpoints store f32 only; parameter {name} is {p.data.dtype}")
        data = np.ascontiguousarray(p.data, dtype="<f4")
        table[name] = {"offset": len(blob), "shape": list(data.shape)}
        blob += data.tobytes()
    doc["params"] = table
    doc["blob_bytes"] = len(blob)
    (dir_path / WEIGHTS_NAME).write_bytes(bytes(blob))
    (dir_path / MANIFEST_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return dir_path


def load_model(dir_path):
    dir_path = Path(dir_path)
    try:
        doc = json.loads((dir_path / MANIFEST_NAME).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"cannot read checkpoint manifest in {dir_path}: {exc}") from exc
    try:
        blob = (dir_path / WEIGHTS_NAME).read_bytes()
    except OSError as exc:
        raise CorruptionError(f"cannot read checkpoint weights in {dir_path}: {exc}") from exc
    if len(blob) != doc.get("blob_bytes"):
        raise CorruptionError(
            f"{dir_path}: weights blob is {len(blob)} bytes, manifest says {doc.get('blob_bytes')}"
        )
    model = _builder(doc["kind"])(doc)
    state: dict[str, np.ndarray] = {}
    for name, meta in doc["params"].items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = meta["offset"] + 4 * count
        if end > len(blob):
            raise CorruptionError(f"{dir_path}: parameter {name} extends past end of blob")
        state[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=meta["offset"]).reshape(shape)
    model.load_state_dict(state)
    return model


def clone_model(model):
    """In-memory deep copy via the archive path (used for LwF snapshots)."""
    rebuilt = _builder(model.archive_config()["kind"])(model.archive_config())
    rebuilt.load_state_dict(model.state_dict())
    return rebuilt
