import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmgnn.errors import ConfigError
from mmgnn.graph import build_bipartite
from mmgnn.model import init_params
from mmgnn.training import (
    AdamState,
    Batch,
    TrainConfig,
    adam_step,
    bpr_loss,
    fit,
    l2_penalty,
    mutual_loss,
    sample_batch,
    softened_distribution,
    total_loss,
    write_loss_log,
)


def dims_of(ds):
    return {m: t.dim for m, t in ds.features.items()}


def randomized_params(cfg, ds, seed, scale=0.5):
    p = init_params(cfg, ds.n_users, dims_of(ds), seed=seed)
    rng = np.random.default_rng(seed)
    for k, a in p.arrays.items():
        p.arrays[k] = rng.normal(0, scale, a.shape)
    return p


def central_difference(batch, params, inputs, cfg, name, idx, h=1e-4):
    arr = params.arrays[name]
    old = arr[idx]
    arr[idx] = old + h
    lp = total_loss(batch, params, inputs, cfg)[0].loss
    arr[idx] = old - h
    lm = total_loss(batch, params, inputs, cfg)[0].loss
    arr[idx] = old
    return (lp - lm) / (2 * h)


# -- sampler ----------------------------------------------------------------


def test_sampler_forced_negative():
    g = build_bipartite([(0, 0), (0, 1), (0, 2)], 1, 4)
    b = sample_batch(g, 50, np.random.default_rng(0))
    assert set(b.neg.tolist()) == {3}
    assert np.all(b.candidates[:, 1:] == 3)
    assert set(b.pos.tolist()) <= {0, 1, 2}


def test_sampler_never_returns_positive(small_inputs):
    g = small_inputs.bipartite
    b = sample_batch(g, 10_000, np.random.default_rng(1))
    dense = g.user_to_song.toarray() > 0
    assert dense[b.users, b.pos].all()
    assert not dense[b.users, b.neg].any()
    assert not dense[b.users[:, None], b.candidates[:, 1:]].any()
    np.testing.assert_array_equal(b.candidates[:, 0], b.pos)


def test_sampler_deterministic(small_inputs):
    a = sample_batch(small_inputs.bipartite, 64, np.random.default_rng(9))
    b = sample_batch(small_inputs.bipartite, 64, np.random.default_rng(9))
    for name in ("users", "pos", "neg", "candidates"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_sampler_multiple_negatives(small_inputs):
    b = sample_batch(small_inputs.bipartite, 10, np.random.default_rng(2), negatives_per_positive=3)
    assert len(b) == 30
    np.testing.assert_array_equal(b.users[0::3], b.users[1::3])


def test_sampler_skips_saturated_user():
    g = build_bipartite([(0, 0), (0, 1), (1, 0)], 2, 2)
    b = sample_batch(g, 20, np.random.default_rng(0))
    assert set(b.users.tolist()) == {1}


# -- BPR --------------------------------------------------------------------


def test_bpr_equal_scores():
    assert bpr_loss([0.7], [0.7]) == pytest.approx(math.log(2), abs=1e-15)


def test_bpr_margin_two():
    assert bpr_loss([3.0], [1.0]) == pytest.approx(math.log1p(math.exp(-2)), abs=1e-15)
    assert bpr_loss([3.0], [1.0]) == pytest.approx(0.126928, abs=1e-6)


def test_bpr_large_margins():
    assert 0 <= bpr_loss([50.0], [0.0]) < 1e-20
    assert bpr_loss([0.0], [800.0]) == pytest.approx(800.0)


# -- softened distributions and mutual loss -----------------------------------


def test_softened_distribution_example():
    p = softened_distribution([math.log(2), 0.0], 1.0)
    np.testing.assert_allclose(p, [2 / 3, 1 / 3], rtol=0, atol=1e-15)


def test_softened_distribution_bad_tau():
    with pytest.raises(ConfigError):
        softened_distribution([1.0, 2.0], 0.0)


@settings(max_examples=50, deadline=None)
@given(
    scores=st.lists(st.floats(-50, 50), min_size=2, max_size=6),
    shift=st.floats(-100, 100),
    tau=st.floats(0.1, 10),
)
def test_softened_distribution_shift_invariant(scores, shift, tau):
    a = softened_distribution(scores, tau)
    b = softened_distribution(np.asarray(scores) + shift, tau)
    assert a.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_mutual_identical_is_zero():
    p = np.array([0.1, 0.2, 0.7])
    assert mutual_loss([p, p, p]) == 0.0


def test_mutual_two_modality_example():
    got = mutual_loss([[0.75, 0.25], [0.25, 0.75]])
    assert got == pytest.approx(math.log(3), abs=1e-12)


def test_mutual_three_modality_example():
    got = mutual_loss([[0.75, 0.25], [0.25, 0.75], [0.25, 0.75]])
    assert got == pytest.approx(2 * math.log(3), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_mod=st.integers(1, 4), c=st.integers(2, 6))
def test_mutual_nonnegative(seed, n_mod, c):
    rng = np.random.default_rng(seed)
    dists = [softened_distribution(rng.normal(0, 3, size=(4, c)), 2.0) for _ in range(n_mod)]
    assert mutual_loss(dists) >= 0.0


def test_mutual_handles_zero_probability():
    assert math.isfinite(mutual_loss([[1.0, 0.0], [0.5, 0.5]]))


# -- total loss -------------------------------------------------------------


def test_loss_reduces_to_bpr(small_data, small_inputs):
    cfg = TrainConfig(d=5, lambda1=0.0, lambda2=0.0)
    p = randomized_params(cfg, small_data, 1)
    b = sample_batch(small_inputs.bipartite, 32, np.random.default_rng(0))
    parts, _ = total_loss(b, p, small_inputs, cfg)
    assert parts.loss == parts.bpr


def test_l2_zero_params(small_data):
    p = init_params(TrainConfig(d=3), small_data.n_users, dims_of(small_data))
    for a in p.arrays.values():
        a[...] = 0
    assert l2_penalty(p) == 0.0


def test_l2_hand_value():
    p = init_params(TrainConfig(d=2, no_social=True), 1, {"lyr": 1})
    for a in p.arrays.values():
        a[...] = 0
    p.arrays["user_lyr"][0] = [1.0, 2.0]
    p.arrays["W_u"][0, 0] = 3.0
    assert l2_penalty(p) == 14.0


@pytest.mark.parametrize(
    "flags",
    [{}, {"no_social": True}, {"no_emotion": True}, {"L": 0, "L_s": 0}, {"L": 3, "L_s": 1}],
)
def test_gradient_matches_finite_difference(small_data, small_inputs, flags):
    cfg = TrainConfig(d=4, lambda1=0.5, lambda2=1e-2, lambda_emo=0.1, **flags)
    p = randomized_params(cfg, small_data, 7)
    b = sample_batch(small_inputs.bipartite, 12, np.random.default_rng(3))
    _, grads = total_loss(b, p, small_inputs, cfg)
    assert set(grads) == set(p.arrays)
    rng = np.random.default_rng(0)
    for name, arr in p.arrays.items():
        assert grads[name].shape == arr.shape
        for _ in range(6):
            idx = tuple(int(rng.integers(0, s)) for s in arr.shape)
            num = central_difference(b, p, small_inputs, cfg, name, idx)
            ana = grads[name][idx]
            assert abs(num - ana) <= 1e-4 * max(abs(num), abs(ana), 1e-6), (name, idx, num, ana)


# -- Adam -------------------------------------------------------------------


def test_adam_zero_gradient_no_change(small_data):
    p = init_params(TrainConfig(d=3), small_data.n_users, dims_of(small_data))
    before = p.copy()
    adam_step(p, {k: np.zeros_like(a) for k, a in p.arrays.items()}, AdamState.like(p), 0.01)
    for k in p.arrays:
        np.testing.assert_array_equal(p[k], before[k])


def test_adam_first_step_sign(small_data, rng):
    p = init_params(TrainConfig(d=3), small_data.n_users, dims_of(small_data))
    before = p.copy()
    grads = {k: rng.normal(size=a.shape) for k, a in p.arrays.items()}
    adam_step(p, grads, AdamState.like(p), 0.01)
    for k in p.arrays:
        g = grads[k]
        # bias-corrected first step is lr * g / (|g| + eps), about lr * sign(g)
        np.testing.assert_allclose(p[k] - before[k], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-9, atol=1e-15)
        assert np.all(np.sign(p[k] - before[k]) == -np.sign(g))


# -- fit --------------------------------------------------------------------


def test_fit_zero_epochs_equals_init(small_data):
    cfg = TrainConfig(d=4, epochs=0, seed=5)
    res = fit(small_data, cfg)
    init = init_params(cfg, small_data.n_users, dims_of(small_data))
    assert res.log == []
    for k in init.arrays:
        np.testing.assert_array_equal(res.params[k], init[k])


def test_fit_deterministic(small_data):
    cfg = TrainConfig(d=4, epochs=3, batch_size=16, learning_rate=0.01, seed=2)
    a, b = fit(small_data, cfg), fit(small_data, cfg)
    assert [r.loss for r in a.log] == [r.loss for r in b.log]
    for k in a.params.arrays:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_no_mutual_equals_zero_lambda1(small_data):
    base = dict(d=4, epochs=2, batch_size=16, learning_rate=0.01, seed=1)
    a = fit(small_data, TrainConfig(no_mutual=True, **base))
    b = fit(small_data, TrainConfig(lambda1=0.0, **base))
    for k in a.params.arrays:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_fit_loss_decreases(small_data):
    cfg = TrainConfig(d=8, epochs=20, batch_size=16, learning_rate=0.01, seed=0)
    means = fit(small_data, cfg).epoch_means()
    assert len(means) == 20
    assert means[-1] < means[0]


def test_loss_log_csv(tmp_path, small_data):
    res = fit(small_data, TrainConfig(d=3, epochs=1, batch_size=32))
    path = tmp_path / "log.csv"
    write_loss_log(path, res.log)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,step,loss,bpr,mutual,l2"
    assert len(lines) == 1 + len(res.log)


@pytest.mark.parametrize("field,value", [("tau", 0.0), ("batch_size", 0), ("lambda1", -1.0), ("d", 0)])
def test_config_validation(field, value):
    with pytest.raises(ConfigError):
        TrainConfig(**{field: value}).validate()


def test_batch_len():
    b = Batch(np.zeros(3, int), np.zeros(3, int), np.zeros(3, int), np.zeros((3, 5), int))
    assert len(b) == 3
