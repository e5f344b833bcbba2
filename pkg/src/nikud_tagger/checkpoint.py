"""Binary checkpoint format.

Layout, all integers little-endian::

    magic          8 bytes   b"NIKUDCK\\0"
    version        uint32
    config digest  32 bytes  sha256 of the shape-relevant config fields
    vocab digest   32 bytes  sha256 of the vocabulary symbol list
    header length  uint64
    header         JSON (UTF-8): config, vocab symbols, array table, state
    blob           arrays in array-table order, IEEE-754 little-endian
    checksum       32 bytes  sha256 of every preceding byte

The array table lists model parameters first (in ``model.param_shapes``
order), then any extra arrays such as optimizer moments.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelParams, TrainingConfig
from .vocab import CharVocab

MAGIC = b"NIKUDCK\x00"
VERSION = 1
_PREFIX = struct.Struct("<8sI32s32sQ")


class ChecksumMismatch(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


@dataclass
class Checkpoint:
    params: ModelParams
    vocab: CharVocab
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    state: dict = field(default_factory=dict)


def _blob_dtype(arr: np.ndarray) -> str:
    if arr.dtype == np.float64:
        return "<f8"
    if arr.dtype == np.float32:
        return "<f4"
    raise TypeError(f"unsupported dtype {arr.dtype}")


def save(params: ModelParams, path: str | Path, vocab: CharVocab | None = None,
         extra: dict[str, np.ndarray] | None = None, state: dict | None = None) -> None:
    vocab = vocab or CharVocab.default()
    extra = extra or {}
    arrays = [("param", k, v) for k, v in params.weights.items()]
    arrays += [("extra", k, v) for k, v in extra.items()]
    header = {
        "config": params.config.to_dict(),
        "vocab": list(vocab.symbols),
        "arrays": [[kind, name, list(a.shape), _blob_dtype(a)] for kind, name, a in arrays],
        "state": state or {},
    }
    header_bytes = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    body = bytearray(_PREFIX.pack(
        MAGIC, VERSION,
        bytes.fromhex(params.config.shape_digest()),
        bytes.fromhex(vocab.digest()),
        len(header_bytes),
    ))
    body += header_bytes
    for _, _, a in arrays:
        body += np.ascontiguousarray(a, dtype=_blob_dtype(a)).tobytes()
    body += hashlib.sha256(body).digest()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(body))
    tmp.replace(path)


def load(path: str | Path, vocab: CharVocab | None = None) -> Checkpoint:
    """Read a checkpoint; ``vocab`` (default vocabulary if None) must match it."""
    vocab = vocab or CharVocab.default()
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size + 32 or data[:8] != MAGIC:
        raise ChecksumMismatch(f"{path}: not a checkpoint or truncated")
    body, checksum = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise ChecksumMismatch(f"{path}: checksum mismatch (corrupt or truncated file)")
    _, version, config_digest, vocab_digest, header_len = _PREFIX.unpack_from(body)
    if version != VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {VERSION}")
    if vocab_digest.hex() != vocab.digest():
        raise VersionMismatch(f"{path}: checkpoint vocabulary differs from the expected one")
    offset = _PREFIX.size
    header = json.loads(body[offset:offset + header_len].decode("utf-8"))
    offset += header_len
    config = TrainingConfig.from_dict(header["config"])
    if config.shape_digest() != config_digest.hex():
        raise VersionMismatch(f"{path}: config digest does not match header")

    weights, extra = {}, {}
    for kind, name, shape, dtype in header["arrays"]:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset += arr.nbytes
        arr = arr.astype(np.dtype(dtype).newbyteorder("="), copy=True)
        (weights if kind == "param" else extra)[name] = arr
    if offset != len(body):
        raise ChecksumMismatch(f"{path}: trailing bytes after array blob")
    return Checkpoint(ModelParams(weights, config), vocab, extra, header.get("state", {}))
