"""Binary checkpoint format.

Layout (little-endian)::

    8s   magic  b"MMGNNCKP"
    u32  version
    u32  N, P, d, c, L, L_s, n_modalities
    n_modalities x (3s tag, u32 feature dim)
    f64  emotion weight
    u32  flags (1 = no_social, 2 = no_mutual, 4 = no_emotion)
    f32  arrays in ``param_names`` order, row-major

Parameters are stored as float32; models produced by ``fit`` are already
float32-valued, so save -> load reproduces them exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dataset import MODALITIES
from .errors import CheckpointError
from .model import ModelParams, param_names

MAGIC = b"MMGNNCKP"
VERSION = 1
_FLAG_BITS = {"no_social": 1, "no_mutual": 2, "no_emotion": 4}


def _shapes(modalities, dims, n_users, d, use_social):
    shapes = {}
    for m in modalities:
        shapes[f"user_{m}"] = (n_users, d)
        shapes[f"proj_{m}"] = (dims[m], d)
        shapes[f"bias_{m}"] = (d,)
    if use_social:
        shapes["social"] = (n_users, d)
    c = len(modalities) + int(use_social)
    shapes["W_u"] = (c * d, d)
    shapes["item_logits"] = (len(modalities),)
    return shapes


def to_bytes(params: ModelParams, n_songs: int) -> bytes:
    mods = params.modalities
    flags = sum(bit for name, bit in _FLAG_BITS.items() if params.flags.get(name))
    parts = [
        struct.pack("<8sI", MAGIC, VERSION),
        struct.pack(
            "<7I", params.n_users, n_songs, params.d, params.n_blocks,
            params.n_layers, params.n_social_layers, len(mods),
        ),
    ]
    dims = params.feature_dims()
    for m in mods:
        parts.append(struct.pack("<3sI", m.encode("ascii"), dims[m]))
    parts.append(struct.pack("<dI", params.emotion_weight, flags))
    for name in param_names(mods, params.use_social):
        parts.append(np.ascontiguousarray(params[name], dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(path, params: ModelParams, n_songs: int):
    Path(path).write_bytes(to_bytes(params, n_songs))


def from_bytes(buf: bytes):
    """Decode a checkpoint; returns ``(params, n_songs)``."""
    try:
        magic, version = struct.unpack_from("<8sI", buf, 0)
    except struct.error:
        raise CheckpointError("truncated checkpoint header") from None
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 12
    try:
        n_users, n_songs, d, c, n_layers, n_social, n_mod = struct.unpack_from("<7I", buf, off)
        off += 28
        mods, dims = [], {}
        for _ in range(n_mod):
            tag, dim = struct.unpack_from("<3sI", buf, off)
            off += 7
            tag = tag.decode("ascii")
            if tag not in MODALITIES or tag in dims:
                raise CheckpointError(f"bad modality tag {tag!r}")
            mods.append(tag)
            dims[tag] = dim
        emotion_weight, flag_bits = struct.unpack_from("<dI", buf, off)
        off += 12
    except struct.error:
        raise CheckpointError("truncated checkpoint header") from None
    use_social = c == n_mod + 1
    if c not in (n_mod, n_mod + 1):
        raise CheckpointError(f"block count {c} inconsistent with {n_mod} modalities")
    flags = {name: bool(flag_bits & bit) for name, bit in _FLAG_BITS.items()}
    if flags["no_social"] == use_social:
        raise CheckpointError("no_social flag disagrees with the stored W_u shape")
    mods = tuple(mods)
    arrays = {}
    for name, shape in _shapes(mods, dims, n_users, d, use_social).items():
        count = int(np.prod(shape))
        if off + 4 * count > len(buf):
            raise CheckpointError(f"truncated array {name}")
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(shape)
        arrays[name] = arr.astype(np.float64)
        off += 4 * count
    if off != len(buf):
        raise CheckpointError(f"{len(buf) - off} trailing bytes after last array")
    params = ModelParams(mods, arrays, emotion_weight, n_layers, n_social, flags)
    return params, n_songs


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())
