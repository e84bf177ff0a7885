"""Checkpoint files.

Layout::

    SIGNBART-CKPT\\n
    <header byte length>\\n
    <UTF-8 JSON header>
    <tensor data: little-endian float64, in header directory order>

The header holds the format version, the model config, free-form metadata
and the tensor directory (name, shape, byte offset into the data section).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from signbart.errors import FormatError
from signbart.model.config import ModelConfig, parameter_shapes
from signbart.numerics import Tensor

MAGIC = b"SIGNBART-CKPT\n"
FORMAT_VERSION = 1


def save_checkpoint(path, config: ModelConfig, params: dict[str, Tensor], metadata: dict | None = None) -> None:
    directory = []
    offset = 0
    for name, p in params.items():
        directory.append({"name": name, "shape": list(p.shape), "offset": offset})
        offset += p.data.size * 8
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "metadata": metadata or {},
        "tensors": directory,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(b"%d\n" % len(header))
        fh.write(header)
        for p in params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, Tensor], dict]:
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise FormatError("not a checkpoint file (bad magic at offset 0)")
    pos = len(MAGIC)
    newline = blob.find(b"\n", pos)
    if newline < 0:
        raise FormatError(f"missing header length at offset {pos}")
    try:
        header_len = int(blob[pos:newline])
    except ValueError:
        raise FormatError(f"unreadable header length at offset {pos}") from None
    start = newline + 1
    if len(blob) < start + header_len:
        raise FormatError(f"header truncated at offset {len(blob)} (expected {header_len} bytes from {start})")
    try:
        header = json.loads(blob[start:start + header_len])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header at offset {start}: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {header.get('format_version')!r} at offset {start}")
    config = ModelConfig.from_dict(header["config"])
    expected = parameter_shapes(config)
    listed = {e["name"]: tuple(e["shape"]) for e in header["tensors"]}
    if listed != dict(expected):
        raise FormatError(f"tensor directory at offset {start} does not match the stored config")
    data_start = start + header_len
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n_bytes = int(np.prod(shape, dtype=np.int64)) * 8
        lo = data_start + entry["offset"]
        hi = lo + n_bytes
        if hi > len(blob):
            raise FormatError(f"tensor {entry['name']} truncated: needs bytes {lo}..{hi}, file ends at offset {len(blob)}")
        data = np.frombuffer(blob, dtype="<f8", count=n_bytes // 8, offset=lo).astype(np.float64).reshape(shape)
        params[entry["name"]] = Tensor(data, requires_grad=True)
    expected_end = data_start + sum(int(np.prod(e["shape"], dtype=np.int64)) * 8 for e in header["tensors"])
    if len(blob) != expected_end:
        raise FormatError(f"trailing bytes after offset {expected_end}")
    return config, params, header.get("metadata", {})
