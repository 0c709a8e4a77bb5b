"""Model checkpoint container.

Layout::

    b"FCNTCKPT"                    8-byte magic
    uint64 (little-endian)         header length in bytes
    header                         UTF-8 JSON: format version, model kind, spec,
                                   seed, scaler, and per-param id/shape/length
    payload                        little-endian float64 arrays, header order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import ScaleParams

MAGIC = b"FCNTCKPT"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _header(m) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": m.kind,
        "spec": m.spec.to_dict(),
        "seed": m.spec.seed,
        "scaler": m.scaler.to_dict() if m.scaler is not None else None,
        "params": [{"id": p.name, "shape": list(p.shape), "length": int(p.size)} for p in m.params()],
    }


def dumps(m) -> bytes:
    header = json.dumps(_header(m), sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p.value, dtype="<f8").tobytes() for p in m.params())
    return MAGIC + struct.pack("<Q", len(header)) + header + payload


def save_model(m, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(m))
    return path


def _rebuild(header: dict):
    kind = header.get("kind")
    if kind == "forecastnet":
        from .model import ModelSpec, build_model

        return build_model(ModelSpec.from_dict(header["spec"]))
    if kind == "mlp":
        from .baselines import MLP, MLPSpec

        return MLP(MLPSpec.from_dict(header["spec"]))
    raise FormatError(f"unknown model kind {kind!r}")


def loads(blob: bytes):
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise FormatError("not a forecastnet checkpoint (bad magic)")
    (hlen,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    if len(blob) < start + hlen:
        raise FormatError("checkpoint truncated inside header")
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})")
    entries = header["params"]
    payload = memoryview(blob)[start + hlen :]
    expected = 8 * sum(e["length"] for e in entries)
    if len(payload) != expected:
        raise FormatError(f"checkpoint payload has {len(payload)} bytes, header declares {expected}")
    try:
        m = _rebuild(header)
    except (TypeError, KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint spec cannot be rebuilt: {exc}") from exc
    params = m.params()
    if [p.name for p in params] != [e["id"] for e in entries]:
        raise FormatError("checkpoint parameter ids do not match the rebuilt model")
    offset = 0
    for p, e in zip(params, entries):
        n = e["length"]
        if list(p.shape) != e["shape"] or p.size != n:
            raise FormatError(f"shape mismatch for {e['id']}")
        arr = np.frombuffer(payload[offset : offset + 8 * n], dtype="<f8").reshape(p.shape)
        p.value[...] = arr
        offset += 8 * n
    if header.get("scaler") is not None:
        m.scaler = ScaleParams(**header["scaler"])
    return m


def load_model(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(blob)
