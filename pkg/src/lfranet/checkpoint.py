"""Checkpoint serialization: a text manifest plus one little-endian blob.

Layout of a ``lfra-ckpt-v1`` file::

    lfra-ckpt-v1
    config {...json...}
    tensor <name> <param|buffer> <float32|float64> <d0xd1x...> <offset> <nbytes>
    ...
    blob <total-bytes> <sha256-hex>
    ---
    <raw little-endian array bytes>

Offsets are relative to the first byte after the ``---`` separator line.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import CheckpointVersionError, CorruptCheckpointError
from .model import LFRANet, ModelConfig, build_model

FORMAT_TAG = "lfra-ckpt-v1"
_SEPARATOR = b"\n---\n"

_DTYPE_CODES = {"float32": "<f4", "float64": "<f8"}


def _entries(net: LFRANet):
    for name, p in net.named_parameters():
        yield name, "param", p.data
    for name, buf in net.named_buffers():
        yield name, "buffer", buf


def serialize(net: LFRANet) -> bytes:
    """Serialize parameters, BN statistics and the config into one byte string."""
    lines = [FORMAT_TAG, "config " + net.config.canonical_json()]
    chunks = []
    offset = 0
    for name, kind, arr in _entries(net):
        dtype_name = str(arr.dtype)
        raw = np.ascontiguousarray(arr).astype(_DTYPE_CODES[dtype_name], copy=False).tobytes()
        shape = "x".join(str(d) for d in arr.shape) or "1"
        lines.append(f"tensor {name} {kind} {dtype_name} {shape} {offset} {len(raw)}")
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    lines.append(f"blob {len(blob)} {hashlib.sha256(blob).hexdigest()}")
    return "\n".join(lines).encode() + _SEPARATOR + blob


def save_checkpoint(net: LFRANet, path) -> None:
    Path(path).write_bytes(serialize(net))


def deserialize(payload: bytes) -> LFRANet:
    head, sep, blob = payload.partition(_SEPARATOR)
    if not sep:
        raise CorruptCheckpointError("missing manifest/blob separator")
    lines = head.decode(errors="replace").split("\n")
    if not lines or lines[0] != FORMAT_TAG:
        raise CheckpointVersionError(
            f"unsupported checkpoint tag {lines[0]!r}; expected {FORMAT_TAG!r}"
        )
    config = None
    tensors = []
    blob_spec = None
    for line in lines[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "config":
            try:
                config = ModelConfig.from_dict(json.loads(rest))
            except (json.JSONDecodeError, TypeError, KeyError) as e:
                raise CorruptCheckpointError(f"unreadable embedded config: {e}") from None
        elif kind == "tensor":
            try:
                name, tkind, dtype_name, shape_s, off_s, nbytes_s = rest.split(" ")
                shape = tuple(int(d) for d in shape_s.split("x"))
                tensors.append((name, tkind, dtype_name, shape, int(off_s), int(nbytes_s)))
            except ValueError:
                raise CorruptCheckpointError(f"malformed tensor line: {line!r}") from None
        elif kind == "blob":
            try:
                size_s, digest = rest.split(" ")
                blob_spec = (int(size_s), digest)
            except ValueError:
                raise CorruptCheckpointError(f"malformed blob line: {line!r}") from None
    if config is None or blob_spec is None:
        raise CorruptCheckpointError("manifest is missing config or blob line")
    size, digest = blob_spec
    if len(blob) != size:
        raise CorruptCheckpointError(f"blob is {len(blob)} bytes, manifest says {size}")
    if hashlib.sha256(blob).hexdigest() != digest:
        raise CorruptCheckpointError("blob checksum mismatch")

    net = build_model(config)
    params = dict(net.named_parameters())
    buffers = dict(net.named_buffers())
    seen = set()
    for name, tkind, dtype_name, shape, off, nbytes in tensors:
        if dtype_name not in _DTYPE_CODES:
            raise CorruptCheckpointError(f"unknown tensor dtype {dtype_name!r}")
        arr = np.frombuffer(blob[off : off + nbytes], dtype=_DTYPE_CODES[dtype_name])
        expected = int(np.prod(shape))
        if arr.size != expected:
            raise CorruptCheckpointError(f"tensor {name}: payload has {arr.size} values, shape needs {expected}")
        arr = arr.reshape(shape).astype(dtype_name)
        if tkind == "param":
            if name not in params:
                raise CorruptCheckpointError(f"checkpoint parameter {name!r} not present in model")
            if params[name].shape != arr.shape:
                raise CorruptCheckpointError(
                    f"tensor {name}: shape {arr.shape} does not match model shape {params[name].shape}"
                )
            params[name].data = np.ascontiguousarray(arr)
        elif tkind == "buffer":
            if name not in buffers:
                raise CorruptCheckpointError(f"checkpoint buffer {name!r} not present in model")
            if buffers[name].shape != arr.shape:
                raise CorruptCheckpointError(
                    f"tensor {name}: shape {arr.shape} does not match model shape {buffers[name].shape}"
                )
            buffers[name][...] = arr
        else:
            raise CorruptCheckpointError(f"unknown tensor kind {tkind!r}")
        seen.add((tkind, name))
    missing = ({("param", n) for n in params} | {("buffer", n) for n in buffers}) - seen
    if missing:
        raise CorruptCheckpointError(f"checkpoint is missing tensors: {sorted(missing)[:5]}")
    return net


def load_checkpoint(path) -> LFRANet:
    """Rebuild a model from a checkpoint; restores every tensor bit-exactly."""
    return deserialize(Path(path).read_bytes())
