"""Binary snapshots of engine state.

Layout (all little-endian): a 4-byte magic and u32 version, a fixed
header carrying dimensions, counters, and the full configuration, then
the row-major key means, value means, and counts for all n_max rows.
"""

from __future__ import annotations

import struct

import numpy as np

from .engine import ABLATIONS, DTYPES, OvqConfig, OvqState
from .errors import ParseError

MAGIC = b"OVQS"
VERSION = 1

_HEADER = struct.Struct("<4sI III QQ d I BBBB d q q")
_ABLATION_CODE = {name: i for i, name in enumerate(ABLATIONS)}
_DTYPE_CODE = {name: i for i, name in enumerate(sorted(DTYPES))}
_CODE_ABLATION = {i: name for name, i in _ABLATION_CODE.items()}
_CODE_DTYPE = {i: name for name, i in _DTYPE_CODE.items()}


def save_state(state: OvqState, path) -> None:
    cfg = state.config
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        state.d,
        cfg.n_max,
        state.n_active,
        state.tokens_seen,
        state.chunks_seen,
        cfg.beta,
        cfg.chunk_len,
        int(cfg.normalize_centroids),
        int(cfg.sequential_merge),
        int(cfg.joint_assignment),
        _ABLATION_CODE[cfg.ablation] | (_DTYPE_CODE[cfg.dtype] << 4),
        cfg.constant_lr_rate,
        cfg.seed,
        -1 if cfg.planned_chunks is None else cfg.planned_chunks,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(state.means_k).tobytes())
        f.write(np.ascontiguousarray(state.means_v).tobytes())
        f.write(np.ascontiguousarray(state.counts, dtype="<i8").tobytes())


def load_state(path) -> OvqState:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ParseError("state file truncated before header")
    (
        magic,
        version,
        d,
        n_max,
        n_active,
        tokens_seen,
        chunks_seen,
        beta,
        chunk_len,
        normalize,
        sequential_merge,
        joint,
        packed_codes,
        const_rate,
        seed,
        planned,
    ) = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ParseError(f"unsupported state version {version}")
    ablation_code = packed_codes & 0x0F
    dtype_code = packed_codes >> 4
    if ablation_code not in _CODE_ABLATION or dtype_code not in _CODE_DTYPE:
        raise ParseError("unknown ablation or dtype code")
    dtype = _CODE_DTYPE[dtype_code]
    itemsize = np.dtype(DTYPES[dtype]).itemsize

    mat_bytes = n_max * d * itemsize
    expected = _HEADER.size + 2 * mat_bytes + n_max * 8
    if len(raw) != expected:
        raise ParseError(f"state file has {len(raw)} bytes, expected {expected}")

    cfg = OvqConfig(
        n_max=n_max,
        chunk_len=chunk_len,
        beta=beta,
        normalize_centroids=bool(normalize),
        ablation=_CODE_ABLATION[ablation_code],
        constant_lr_rate=const_rate,
        sequential_merge=bool(sequential_merge),
        joint_assignment=bool(joint),
        seed=seed,
        planned_chunks=None if planned < 0 else planned,
        dtype=dtype,
    )
    off = _HEADER.size
    means_k = np.frombuffer(raw, dtype=f"<f{itemsize}", count=n_max * d, offset=off)
    off += mat_bytes
    means_v = np.frombuffer(raw, dtype=f"<f{itemsize}", count=n_max * d, offset=off)
    off += mat_bytes
    counts = np.frombuffer(raw, dtype="<i8", count=n_max, offset=off)
    return OvqState(
        config=cfg,
        d=d,
        means_k=means_k.reshape(n_max, d).copy(),
        means_v=means_v.reshape(n_max, d).copy(),
        counts=counts.copy(),
        n_active=n_active,
        tokens_seen=tokens_seen,
        chunks_seen=chunks_seen,
    )
