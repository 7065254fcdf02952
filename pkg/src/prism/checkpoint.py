"""Binary checkpoint container.

Layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"PRISMCKP"
    8       2     uint16 format version (currently 1)
    10      4     uint32 header length H
    14      H     UTF-8 JSON header: {"config": {...}, "params": [{"name", "shape",
                  "offset", "size"}, ...], "meta": {...}}
    14+H    8     uint64 value count N
    22+H    8*N   float64 parameter values, concatenated in header order
    22+H+8N 4     uint32 CRC-32 of every preceding byte

``offset`` and ``size`` in the header count float64 elements from the start
of the value block.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .config import model_from_dict, model_to_dict
from .errors import CheckpointError, PrismError
from .model import PrismConfig, init_params

MAGIC = b"PRISMCKP"
VERSION = 1


def dumps(config: PrismConfig, params: dict, meta: dict | None = None) -> bytes:
    entries, blocks, offset = [], [], 0
    for name, arr in params.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "size": int(a.size)})
        blocks.append(a.ravel())
        offset += a.size
    header = json.dumps({"config": model_to_dict(config), "params": entries, "meta": meta or {}},
                        sort_keys=True).encode("utf-8")
    values = np.concatenate(blocks) if blocks else np.zeros(0, dtype="<f8")
    body = (MAGIC + struct.pack("<HI", VERSION, len(header)) + header
            + struct.pack("<Q", offset) + values.astype("<f8").tobytes())
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def loads(blob: bytes):
    """Return ``(config, params, meta)``; raise :class:`CheckpointError` on any corruption."""
    if len(blob) < 26 or blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic or too short)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint checksum mismatch (truncated or corrupted)")
    version, hlen = struct.unpack("<HI", body[8:14])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(body[14:14 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
    (count,) = struct.unpack("<Q", body[14 + hlen:22 + hlen])
    raw = body[22 + hlen:]
    if len(raw) != 8 * count:
        raise CheckpointError(f"checkpoint holds {len(raw)} value bytes, header announces {8 * count}")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    params = {}
    try:
        for e in header["params"]:
            if e["offset"] + e["size"] > count:
                raise CheckpointError(f"parameter {e['name']!r} runs past the value block")
            params[e["name"]] = values[e["offset"]:e["offset"] + e["size"]].reshape(e["shape"]).copy()
        config = model_from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc!r}") from None
    except CheckpointError:
        raise
    except PrismError as exc:
        raise CheckpointError(f"checkpoint config is invalid: {exc}") from None
    expected = {k: v.shape for k, v in init_params(config, 0).items()}
    got = {k: v.shape for k, v in params.items()}
    if expected != got:
        bad = sorted(set(expected) ^ set(got)) or sorted(k for k in expected if expected[k] != got[k])
        raise CheckpointError(f"checkpoint parameters do not fit its config: {', '.join(bad[:5])}")
    return config, params, header.get("meta", {})


def save(path, config: PrismConfig, params: dict, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(config, params, meta))


def load(path):
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"checkpoint not found: {p}")
    return loads(p.read_bytes())


def config_mismatches(a: PrismConfig, b: PrismConfig) -> list:
    """Dotted field names whose values differ between two model configs."""
    out = []

    def walk(x, y, prefix):
        if isinstance(x, dict) and isinstance(y, dict):
            for key in sorted(set(x) | set(y)):
                walk(x.get(key), y.get(key), f"{prefix}.{key}" if prefix else key)
        elif x != y:
            out.append(f"{prefix} (checkpoint {x!r} vs spec {y!r})")

    walk(model_to_dict(a), model_to_dict(b), "model")
    return out
