import struct

import numpy as np
import pytest

from mmgnn.checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from mmgnn.errors import CheckpointError
from mmgnn.model import init_params
from mmgnn.training import TrainConfig


def params_for(**kw):
    cfg = TrainConfig(d=3, **kw)
    return init_params(cfg, 5, {"lyr": 4, "fre": 2, "vis": 3}, seed=1)


@pytest.mark.parametrize("flags", [{}, {"no_social": True}, {"no_mutual": True, "no_emotion": True}, {"L": 4, "L_s": 1}])
def test_round_trip_exact(tmp_path, flags):
    p = params_for(**flags)
    save_checkpoint(tmp_path / "m.ckpt", p, 11)
    q, n_songs = load_checkpoint(tmp_path / "m.ckpt")
    assert n_songs == 11
    assert q.modalities == p.modalities
    assert q.n_layers == p.n_layers and q.n_social_layers == p.n_social_layers
    assert q.emotion_weight == p.emotion_weight
    assert q.flags == p.flags
    assert list(q.arrays) == list(p.arrays)
    for k in p.arrays:
        np.testing.assert_array_equal(q[k], p[k])


def test_two_modality_round_trip():
    p = init_params(TrainConfig(d=2), 3, {"lyr": 2, "fre": 1})
    q, _ = from_bytes(to_bytes(p, 4))
    assert q.modalities == ("lyr", "fre")
    assert q["W_u"].shape == (6, 2)


def test_header_layout():
    p = params_for()
    buf = to_bytes(p, 7)
    assert buf[:8] == b"MMGNNCKP"
    assert struct.unpack_from("<I7I", buf, 8) == (1, 5, 7, 3, 4, 2, 2, 3)
    n_floats = sum(a.size for a in p.arrays.values())
    assert len(buf) == 12 + 28 + 3 * 7 + 12 + 4 * n_floats


def test_float32_values_survive():
    p = params_for()
    p.arrays["W_u"][0, 0] = 0.1  # not float32-representable
    q, _ = from_bytes(to_bytes(p, 7))
    assert q["W_u"][0, 0] == np.float32(0.1)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"XXXXXXXX" + b[8:],
        lambda b: b[:8] + struct.pack("<I", 99) + b[12:],
        lambda b: b[:-4],
        lambda b: b + b"\0",
        lambda b: b[:20],
    ],
)
def test_corrupt_checkpoints_rejected(mutate):
    with pytest.raises(CheckpointError):
        from_bytes(mutate(to_bytes(params_for(), 7)))
