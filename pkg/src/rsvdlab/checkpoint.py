"""Binary checkpoint of per-block moment accumulators (little-endian).

Layout::

    magic        8s   b"RSVDCKPT"
    version      u32
    master_seed  u64
    trials       u64  total N of the run
    trials_done  u64
    dist         u8   SketchDistribution tag
    m            u32
    ell          u32
    q            u32
    matrix_hash  32s  SHA-256 of the input matrix (see matrix_digest)
    block_count  u32
    then per block:
        rank_deficient  u64
        first moment    m*m f64 (row-major)
        second moment   m*m f64 (row-major)
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointMismatch
from .randgen import SketchDistribution

MAGIC = b"RSVDCKPT"
VERSION = 1
_HEADER = struct.Struct("<8sIQQQBIII32sI")
_COUNT = struct.Struct("<Q")


@dataclass
class BlockMoments:
    """Sums of P and P*P (elementwise) over one block of trials."""

    first: np.ndarray
    second: np.ndarray
    rank_deficient: int


@dataclass
class Checkpoint:
    master_seed: int
    trials: int
    trials_done: int
    dist: SketchDistribution
    m: int
    ell: int
    q: int
    matrix_hash: bytes
    blocks: list[BlockMoments] = field(default_factory=list)


def matrix_digest(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    h = hashlib.sha256()
    h.update(struct.pack("<II", *a.shape))
    h.update(a.tobytes())
    return h.digest()


def write_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    """Write atomically: a partial file never replaces a good one."""
    path = Path(path)
    parts = [
        _HEADER.pack(
            MAGIC, VERSION, ckpt.master_seed, ckpt.trials, ckpt.trials_done, ckpt.dist.tag,
            ckpt.m, ckpt.ell, ckpt.q, ckpt.matrix_hash, len(ckpt.blocks),
        )
    ]
    for block in ckpt.blocks:
        parts.append(_COUNT.pack(block.rank_deficient))
        parts.append(np.ascontiguousarray(block.first, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(block.second, dtype="<f8").tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)


def read_checkpoint(path: str | os.PathLike) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointMismatch(f"{path}: file too short for a checkpoint header")
    (magic, version, seed, trials, done, tag, m, ell, q, digest, count) = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointMismatch(f"{path}: not a checkpoint file (bad magic)")
    if version != VERSION:
        raise CheckpointMismatch(f"{path}: unsupported checkpoint version {version}")
    try:
        dist = SketchDistribution.from_tag(tag)
    except ValueError as exc:
        raise CheckpointMismatch(f"{path}: {exc}") from None
    per_block = _COUNT.size + 2 * 8 * m * m
    if len(data) != _HEADER.size + count * per_block:
        raise CheckpointMismatch(f"{path}: truncated or oversized block section")
    blocks = []
    offset = _HEADER.size
    for _ in range(count):
        (deficient,) = _COUNT.unpack_from(data, offset)
        offset += _COUNT.size
        first = np.frombuffer(data, dtype="<f8", count=m * m, offset=offset).reshape(m, m).astype(float)
        offset += 8 * m * m
        second = np.frombuffer(data, dtype="<f8", count=m * m, offset=offset).reshape(m, m).astype(float)
        offset += 8 * m * m
        blocks.append(BlockMoments(first=first, second=second, rank_deficient=int(deficient)))
    return Checkpoint(
        master_seed=seed, trials=trials, trials_done=done, dist=dist, m=m, ell=ell, q=q,
        matrix_hash=digest, blocks=blocks,
    )
