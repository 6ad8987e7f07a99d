"""Versioned on-disk container for model snapshots.

Layout: 8-byte magic, little-endian uint32 format version, uint32 header
length, a canonical JSON header (config, vocabulary, array manifest), then the
raw float64 little-endian blocks in manifest order. Serialization is
deterministic, so snapshots are content-addressable.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FLSNAP\x00\x01"
VERSION = 1


class SnapshotError(RuntimeError):
    """Unreadable, truncated or incompatible snapshot file."""


def _canonical_json(data: dict) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _payload(model) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    from . import bilstm, cnn  # late import; both model modules depend on this one

    if isinstance(model, cnn.ModelSnapshot):
        arrays = []
        for k, size in enumerate(model.config.filter_sizes):
            arrays.append((f"conv_w_{size}", model.conv_w[k]))
            arrays.append((f"conv_b_{size}", model.conv_b[k]))
        arrays += [
            ("dense_w", model.dense_w),
            ("dense_b", model.dense_b),
            ("mask", model.mask),
            ("embeddings", model.embeddings),
        ]
        header = {"arch": "cnn", "config": model.config.to_json()}
    elif isinstance(model, bilstm.BilstmModel):
        arrays = []
        for direction in ("fw", "bw"):
            p = model.direction(direction)
            arrays += [
                (f"{direction}_w_input", p.w_input),
                (f"{direction}_w_hidden", p.w_hidden),
                (f"{direction}_bias", p.bias),
            ]
        arrays += [
            ("dense_w", model.dense_w),
            ("dense_b", model.dense_b),
            ("mask", model.mask),
            ("embeddings", model.embeddings),
        ]
        header = {"arch": "bilstm", "config": model.config.to_json()}
    else:
        raise SnapshotError(f"cannot serialize object of type {type(model).__name__}")

    header["vocab"] = model.vocab.to_json()
    header["embedding_ref"] = model.embedding_ref
    header["arrays"] = [{"name": name, "shape": list(arr.shape)} for name, arr in arrays]
    return header, arrays


def snapshot_bytes(model) -> bytes:
    header, arrays = _payload(model)
    header_bytes = _canonical_json(header)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(header_bytes)), header_bytes]
    for _, arr in arrays:
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(chunks)


def model_id(model) -> str:
    return hashlib.sha256(snapshot_bytes(model)).hexdigest()[:16]


def save_snapshot(model, path: str | Path) -> str:
    """Write the snapshot and return its content id."""
    data = snapshot_bytes(model)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return hashlib.sha256(data).hexdigest()[:16]


def _read_exact(buffer: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    if offset + count > len(buffer):
        raise SnapshotError(f"truncated snapshot file while reading {what}")
    return buffer[offset : offset + count], offset + count


def load_snapshot(path: str | Path):
    from . import bilstm, cnn
    from .corpus import Vocabulary

    buffer = Path(path).read_bytes()
    magic, offset = _read_exact(buffer, 0, len(MAGIC), "magic")
    if magic != MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    raw, offset = _read_exact(buffer, offset, 8, "version")
    version, header_len = struct.unpack("<II", raw)
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version} (expected {VERSION})")
    header_bytes, offset = _read_exact(buffer, offset, header_len, "header")
    try:
        header = json.loads(header_bytes)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"{path}: corrupt header") from exc

    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        raw, offset = _read_exact(buffer, offset, nbytes, f"array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if offset != len(buffer):
        raise SnapshotError(f"{path}: {len(buffer) - offset} trailing bytes")

    vocab = Vocabulary.from_json(header["vocab"])
    arch = header.get("arch")
    if arch == "cnn":
        config = cnn.CnnConfig.from_json(header["config"])
        return cnn.ModelSnapshot(
            config=config,
            vocab=vocab,
            embeddings=arrays["embeddings"],
            embedding_ref=header["embedding_ref"],
            conv_w=[arrays[f"conv_w_{s}"] for s in config.filter_sizes],
            conv_b=[arrays[f"conv_b_{s}"] for s in config.filter_sizes],
            dense_w=arrays["dense_w"],
            dense_b=arrays["dense_b"],
            mask=arrays["mask"],
        )
    if arch == "bilstm":
        config = bilstm.BilstmConfig.from_json(header["config"])
        directions = {
            name: bilstm.LstmParams(
                w_input=arrays[f"{name}_w_input"],
                w_hidden=arrays[f"{name}_w_hidden"],
                bias=arrays[f"{name}_bias"],
            )
            for name in ("fw", "bw")
        }
        return bilstm.BilstmModel(
            config=config,
            vocab=vocab,
            embeddings=arrays["embeddings"],
            embedding_ref=header["embedding_ref"],
            forward_params=directions["fw"],
            backward_params=directions["bw"],
            dense_w=arrays["dense_w"],
            dense_b=arrays["dense_b"],
            mask=arrays["mask"],
        )
    raise SnapshotError(f"{path}: unknown architecture {arch!r}")
