"""Binary checkpoint format.

Layout (all integers little-endian)::

    8 bytes   magic  b"TAGSEQ\\x00\\x01"
    4 bytes   format version (uint32)
    8 bytes   header length N (uint64)
    N bytes   UTF-8 JSON header, keys sorted: config, params (name + shape,
              sorted by name), src_vocab, tgt_vocab, freq
    ...       float32 parameter values, row-major, in header order
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, fields

import numpy as np

from . import autograd as ag
from .config import TrainConfig
from .corpus import FrequencyTable, Vocab
from .errors import CheckpointError
from .model import TagModel

MAGIC = b"TAGSEQ\x00\x01"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def to_bytes(model: TagModel) -> bytes:
    names = sorted(model.params)
    header = {
        "config": asdict(model.config),
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "src_vocab": model.src_vocab.to_dict(),
        "tgt_vocab": model.tgt_vocab.to_dict(),
        "freq": dict(sorted(model.freq.items())),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    chunks = [_PREFIX.pack(MAGIC, VERSION, len(blob)), blob]
    for n in names:
        chunks.append(np.ascontiguousarray(model.params[n].data, dtype="<f4").tobytes())
    return b"".join(chunks)


def from_bytes(raw: bytes) -> TagModel:
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"file too short for a checkpoint header ({len(raw)} bytes)")
    magic, version, n = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic: expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported version: expected {VERSION}, found {version}")
    start = _PREFIX.size
    if len(raw) < start + n:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(raw[start : start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    offset = start + n
    expected = offset + sum(4 * int(np.prod(p["shape"], dtype=np.int64)) for p in header["params"])
    if len(raw) != expected:
        raise CheckpointError(f"checkpoint size mismatch: expected {expected} bytes, found {len(raw)}")
    params = {}
    for p in header["params"]:
        count = int(np.prod(p["shape"], dtype=np.int64))
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).astype(np.float64)
        params[p["name"]] = ag.parameter(values.reshape(p["shape"]), p["name"])
        offset += 4 * count
    known = {f.name for f in fields(TrainConfig)}
    config = TrainConfig(**{k: v for k, v in header["config"].items() if k in known})
    return TagModel(
        config,
        Vocab.from_dict(header["src_vocab"]),
        Vocab.from_dict(header["tgt_vocab"]),
        FrequencyTable(header["freq"]),
        params,
    )


def save_checkpoint(model: TagModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load_checkpoint(path) -> TagModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
