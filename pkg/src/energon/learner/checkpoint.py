"""Model checkpoint files.

Layout: one JSON header line, the parameters as little-endian float64 in
declaration order, then the 32-byte SHA-256 of those parameter bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .model import CnnModel, CnnSpec, _is_buffer, parameter_shapes

FORMAT = "energon-cnn/1"
DIGEST_BYTES = 32


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: CnnModel, path, classes=(), meta: dict | None = None) -> Path:
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in model.state())
    header = {
        "format": FORMAT,
        "spec": model.spec.to_dict(),
        "classes": list(classes),
        "meta": meta or {},
        "params": [[n, list(s)] for n, s in parameter_shapes(model.spec)],
        "nbytes": len(body),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple[CnnModel, list[str], dict]:
    """Returns (eval-mode model, class names, free-form metadata)."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing header")
    try:
        header = json.loads(raw[:nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from None
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not an {FORMAT} checkpoint")
    spec = CnnSpec.from_dict(header["spec"])
    shapes = parameter_shapes(spec)
    if [[n, list(s)] for n, s in shapes] != header["params"]:
        raise CheckpointError(f"{path}: parameter table disagrees with spec")
    body = raw[nl + 1:len(raw) - DIGEST_BYTES]
    if len(body) != header["nbytes"] or len(raw) - nl - 1 < DIGEST_BYTES:
        raise CheckpointError(f"{path}: truncated parameter block")
    if hashlib.sha256(body).digest() != raw[len(raw) - DIGEST_BYTES:]:
        raise CheckpointError(f"{path}: checksum mismatch")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    params, buffers, pos = {}, {}, 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        (buffers if _is_buffer(name) else params)[name] = flat[pos:pos + size].reshape(shape).copy()
        pos += size
    return CnnModel(spec, params, buffers), list(header["classes"]), header["meta"]
