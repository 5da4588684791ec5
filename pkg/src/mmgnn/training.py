"""BPR + mutual-learning training with exact analytic gradients and Adam.

The objective on a batch of ``(user, positive, negative)`` triples is::

    L = mean softplus(-(y_pos - y_neg))
        + lambda1 * mean_t sum_{a<b} [KL(P_a || P_b) + KL(P_b || P_a)]
        + lambda2 * sum_theta ||theta||^2

where ``P_m`` is the temperature-softened softmax of modality ``m``'s
inner-product scores over the triple's candidate set (positive first, then
sampled negatives). Propagation is linear, so its backward pass is the same
normalized adjacency applied in the reverse direction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .dataset import Dataset
from .errors import ConfigError, TrainingDiverged
from .graph import BipartiteGraph
from .model import (
    GraphInputs,
    ModelParams,
    forward,
    init_params,
    pair_scores,
    prepare_inputs,
    propagate_bipartite_grad,
    propagate_social_grad,
)

KL_EPS = 1e-12


@dataclass
class TrainConfig:
    d: int = 64
    learning_rate: float = 0.001
    batch_size: int = 1024
    lambda1: float = 0.5
    lambda2: float = 1e-5
    L: int = 2
    L_s: int = 2
    tau: float = 2.0
    negatives_per_positive: int = 1
    candidate_negatives: int = 4
    epochs: int = 30
    seed: int = 0
    no_social: bool = False
    no_mutual: bool = False
    no_emotion: bool = False
    lambda_emo: float = 0.1

    def validate(self):
        for name in ("lambda1", "lambda2", "tau", "lambda_emo", "learning_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.tau == 0:
            raise ConfigError("tau must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.L < 0 or self.L_s < 0 or self.epochs < 0:
            raise ConfigError("L, L_s and epochs must be >= 0")
        if self.negatives_per_positive < 1 or self.candidate_negatives < 1:
            raise ConfigError("negatives_per_positive and candidate_negatives must be >= 1")
        return self

    @property
    def effective_lambda1(self):
        return 0.0 if self.no_mutual else self.lambda1

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


# --------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True, eq=False)
class Batch:
    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    candidates: np.ndarray  # [T, 1 + candidate_negatives], column 0 is the positive

    def __len__(self):
        return len(self.users)


class _Sampler:
    """Uniform positive-edge / rejection negative sampler over a train graph."""

    max_attempts = 100

    def __init__(self, graph: BipartiteGraph):
        m = graph.user_to_song
        self.n_songs = graph.n_songs
        users = np.repeat(np.arange(graph.n_users), np.diff(m.indptr))
        songs = m.indices.astype(np.int64)
        self.keys = np.sort(users * self.n_songs + songs)
        eligible = graph.user_degrees[users] < self.n_songs
        self.users, self.songs = users[eligible], songs[eligible]
        if self.users.size == 0:
            raise ValueError("no user has both a train interaction and a non-interacted song")

    def is_positive(self, users, songs):
        keys = users * self.n_songs + songs
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        return self.keys[pos] == keys

    def draw(self, rng, size, n_neg):
        edge = rng.integers(0, self.users.size, size=size)
        u, p = self.users[edge], self.songs[edge]
        neg = rng.integers(0, self.n_songs, size=(size, n_neg))
        bad = self.is_positive(u[:, None], neg)
        attempts = 0
        while bad.any():
            if attempts == self.max_attempts:
                rows = np.flatnonzero(bad.any(axis=1))
                edge = rng.integers(0, self.users.size, size=rows.size)
                u[rows], p[rows] = self.users[edge], self.songs[edge]
                bad[rows] = True
                attempts = 0
            neg[bad] = rng.integers(0, self.n_songs, size=int(bad.sum()))
            bad = self.is_positive(u[:, None], neg)
            attempts += 1
        return u, p, neg


def sample_batch(train_graph: BipartiteGraph, batch_size, rng, negatives_per_positive=1, candidate_negatives=4, sampler=None) -> Batch:
    """Draw ``batch_size`` positives uniformly from the train edges.

    Each positive gets ``negatives_per_positive`` BPR negatives and a
    separate candidate set of ``candidate_negatives`` negatives for the
    mutual-learning distributions. Users who interacted with every song are
    never drawn.
    """
    sampler = sampler or _Sampler(train_graph)
    k = negatives_per_positive
    u, p, neg = sampler.draw(rng, batch_size, k + candidate_negatives)
    cands = np.column_stack([p, neg[:, k:]])
    return Batch(
        users=np.repeat(u, k),
        pos=np.repeat(p, k),
        neg=neg[:, :k].reshape(-1),
        candidates=np.repeat(cands, k, axis=0),
    )


# --------------------------------------------------------------------------
# Loss pieces


def _scatter_rows(index, values, n_rows):
    """``out[index[k]] += values[k]`` (a faster ``np.add.at`` for row blocks)."""
    index = np.asarray(index).reshape(-1)
    sel = sp.csr_matrix((np.ones(index.size), (index, np.arange(index.size))), shape=(n_rows, index.size))
    return np.asarray(sel @ values)


def bpr_loss(pos_scores, neg_scores) -> float:
    pos_scores, neg_scores = np.asarray(pos_scores, float), np.asarray(neg_scores, float)
    if pos_scores.shape != neg_scores.shape:
        raise ValueError("score arrays must have equal length")
    return float(np.mean(np.logaddexp(0.0, -(pos_scores - neg_scores))))


def softened_distribution(scores, tau):
    if tau <= 0:
        raise ConfigError("temperature must be > 0")
    z = np.asarray(scores, dtype=np.float64) / tau
    if z.shape[-1] < 2:
        raise ValueError("candidate set needs at least 2 entries")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _sym_kl(p, q):
    lp, lq = np.log(np.maximum(p, KL_EPS)), np.log(np.maximum(q, KL_EPS))
    return np.sum((p - q) * (lp - lq), axis=-1)


def mutual_loss(dists) -> float:
    """Batch mean of symmetric KL summed over every unordered modality pair.

    ``dists`` is a sequence of ``[T, C]`` (or ``[C]``) probability arrays, one
    per modality. Fewer than two modalities gives 0.
    """
    dists = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in dists]
    if len(dists) < 2:
        return 0.0
    total = np.zeros(dists[0].shape[0])
    for a in range(len(dists)):
        for b in range(a + 1, len(dists)):
            total += _sym_kl(dists[a], dists[b])
    return float(total.mean())


def mutual_loss_grad(dists):
    """Gradient of :func:`mutual_loss` with respect to each distribution."""
    dists = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in dists]
    t = dists[0].shape[0]
    logs = [np.log(np.maximum(p, KL_EPS)) for p in dists]
    dlogs = [np.where(p > KL_EPS, 1.0 / np.maximum(p, KL_EPS), 0.0) for p in dists]
    grads = []
    for a, p in enumerate(dists):
        g = np.zeros_like(p)
        for b, q in enumerate(dists):
            if a != b:
                g += (logs[a] - logs[b]) + (p - q) * dlogs[a]
        grads.append(g / t)
    return grads


@dataclass
class LossParts:
    loss: float
    bpr: float
    mutual: float
    l2: float


def l2_penalty(params: ModelParams) -> float:
    return float(sum(np.sum(a * a) for a in params.arrays.values()))


def total_loss(batch: Batch, params: ModelParams, inputs: GraphInputs, config: TrainConfig, state=None):
    """Loss on ``batch`` and its exact gradient for every parameter array.

    Returns ``(LossParts, grads)`` with ``grads`` keyed like ``params.arrays``.
    """
    if state is None:
        state = forward(params, inputs)
    lam1 = config.effective_lambda1
    lam2 = config.lambda2
    mods = params.modalities
    n_users, n_songs = inputs.n_users, inputs.n_songs
    d = params.d
    eu, ei = state.user_final, state.item_final
    u, ip, ineg = batch.users, batch.pos, batch.neg
    t = len(u)

    margin = pair_scores(state, u, ip) - pair_scores(state, u, ineg)
    bpr = float(np.mean(np.logaddexp(0.0, -margin)))
    dmargin = -expit(-margin) / t
    g_eu = _scatter_rows(u, dmargin[:, None] * (ei[ip] - ei[ineg]), n_users)
    w_eu = dmargin[:, None] * eu[u]
    g_ei = _scatter_rows(np.concatenate([ip, ineg]), np.vstack([w_eu, -w_eu]), n_songs)

    g_um = {m: np.zeros((n_users, d)) for m in mods}
    g_im = {m: np.zeros((n_songs, d)) for m in mods}
    ml = 0.0
    if len(mods) >= 2:
        cand = batch.candidates
        u_rows = {m: state.user_modal[m][u] for m in mods}
        i_rows = {m: state.item_modal[m][cand] for m in mods}
        dists = [
            softened_distribution(np.einsum("tk,tck->tc", u_rows[m], i_rows[m]), config.tau) for m in mods
        ]
        ml = mutual_loss(dists)
        if lam1 != 0:
            for m, p, gp in zip(mods, dists, mutual_loss_grad(dists)):
                gs = lam1 * p * (gp - np.sum(p * gp, axis=1, keepdims=True)) / config.tau
                g_um[m] += _scatter_rows(u, np.einsum("tc,tck->tk", gs, i_rows[m]), n_users)
                g_im[m] += _scatter_rows(cand, (gs[:, :, None] * u_rows[m][:, None, :]).reshape(-1, d), n_songs)

    l2 = l2_penalty(params)
    loss = bpr + lam1 * ml + lam2 * l2
    if not math.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss (bpr={bpr}, mutual={ml}, l2={l2})")

    # user fusion: eu = sigmoid(concat @ W_u)
    g_pre = g_eu * eu * (1.0 - eu)
    grads = {"W_u": state.concat.T @ g_pre}
    g_concat = g_pre @ params["W_u"].T
    for k, m in enumerate(mods):
        g_um[m] += g_concat[:, k * d:(k + 1) * d]

    # item fusion: ei = sum_m softmax(logits)_m * item_modal[m]
    w = state.item_weights
    g_w = np.empty(len(mods))
    for k, m in enumerate(mods):
        g_im[m] += w[k] * g_ei
        g_w[k] = np.sum(g_ei * state.item_modal[m])
    grads["item_logits"] = w * (g_w - np.dot(w, g_w))

    for m in mods:
        g_u0, g_i0 = propagate_bipartite_grad(inputs.bipartite, g_um[m], g_im[m], params.n_layers)
        grads[f"user_{m}"] = g_u0
        grads[f"proj_{m}"] = inputs.features[m].T @ g_i0
        grads[f"bias_{m}"] = g_i0.sum(axis=0)
    if params.use_social:
        grads["social"] = propagate_social_grad(
            inputs.social, g_concat[:, len(mods) * d:], params.n_social_layers
        )

    if lam2:
        for name, arr in params.arrays.items():
            grads[name] = grads[name] + 2.0 * lam2 * arr
    grads = {name: grads[name] for name in params.arrays}
    return LossParts(loss, bpr, ml, l2), grads


# --------------------------------------------------------------------------
# Optimizer


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: ModelParams):
        return cls(
            {k: np.zeros_like(a) for k, a in params.arrays.items()},
            {k: np.zeros_like(a) for k, a in params.arrays.items()},
        )


def adam_step(params: ModelParams, grads: dict, state: AdamState, lr: float) -> ModelParams:
    """One bias-corrected Adam update, applied in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, arr in params.arrays.items():
        g = grads[name]
        if g.shape != arr.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {arr.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# --------------------------------------------------------------------------
# Training loop


@dataclass
class StepRecord:
    epoch: int
    step: int
    loss: float
    bpr: float
    mutual: float
    l2: float


@dataclass
class FitResult:
    params: ModelParams
    log: list = field(default_factory=list)

    def epoch_means(self):
        """Mean total loss per epoch, in epoch order."""
        sums = {}
        for rec in self.log:
            s, n = sums.get(rec.epoch, (0.0, 0))
            sums[rec.epoch] = (s + rec.loss, n + 1)
        return [sums[e][0] / sums[e][1] for e in sorted(sums)]


def fit(dataset: Dataset, config: TrainConfig, inputs: GraphInputs | None = None, progress=None) -> FitResult:
    """Train from a fresh initialization for ``config.epochs`` epochs.

    Every step recomputes the full-graph forward pass. The returned
    parameters are rounded to float32, the checkpoint precision.
    """
    config.validate()
    if inputs is None:
        inputs = prepare_inputs(dataset)
    dims = {m: t.dim for m, t in dataset.features.items()}
    params = init_params(config, dataset.n_users, dims)
    adam = AdamState.like(params)
    rng = np.random.default_rng([config.seed, 1])
    result = FitResult(params)
    if config.epochs == 0:
        return result
    sampler = _Sampler(inputs.bipartite)
    steps = max(1, math.ceil(len(dataset.train) / config.batch_size))
    step = 0
    for epoch in range(1, config.epochs + 1):
        for _ in range(steps):
            batch = sample_batch(
                inputs.bipartite, config.batch_size, rng,
                config.negatives_per_positive, config.candidate_negatives, sampler,
            )
            parts, grads = total_loss(batch, params, inputs, config)
            adam_step(params, grads, adam, config.learning_rate)
            step += 1
            result.log.append(StepRecord(epoch, step, parts.loss, parts.bpr, parts.mutual, parts.l2))
        for name, arr in params.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise TrainingDiverged(f"parameter {name} became non-finite in epoch {epoch}")
        if progress is not None:
            progress(epoch, result)
    for name in params.arrays:
        params.arrays[name] = params.arrays[name].astype(np.float32).astype(np.float64)
    return result


def write_loss_log(path, log):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "step", "loss", "bpr", "mutual", "l2"])
        for r in log:
            w.writerow([r.epoch, r.step, repr(r.loss), repr(r.bpr), repr(r.mutual), repr(r.l2)])
