"""Parameters and forward pass of the multi-modal recommender.

Per modality, users start from a free embedding table and songs from a
learned affine projection of their content features. Both are propagated
over the shared normalized bipartite graph and the layers are averaged. A
separate table is propagated over the social graph. User views are
concatenated and fused by ``sigmoid(Z @ W_u)``. Song views are mixed by
softmax weights. The score is the inner product plus an emotion term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, softmax

from .dataset import MODALITIES, Dataset
from .errors import ShapeError
from .graph import BipartiteGraph, SocialGraph, build_bipartite, build_social, spmv


@dataclass(eq=False)
class ModelParams:
    """All learnable arrays plus the fixed settings needed to run the forward pass.

    ``arrays`` is ordered; the order is the checkpoint order.
    """

    modalities: tuple
    arrays: dict
    emotion_weight: float = 0.1
    n_layers: int = 2
    n_social_layers: int = 2
    flags: dict = field(default_factory=lambda: {"no_social": False, "no_mutual": False, "no_emotion": False})

    @property
    def use_social(self) -> bool:
        return "social" in self.arrays

    @property
    def d(self) -> int:
        return self.arrays["W_u"].shape[1]

    @property
    def n_users(self) -> int:
        return self.arrays[f"user_{self.modalities[0]}"].shape[0]

    @property
    def n_blocks(self) -> int:
        return len(self.modalities) + int(self.use_social)

    def feature_dims(self) -> dict:
        return {m: self.arrays[f"proj_{m}"].shape[0] for m in self.modalities}

    def item_weights(self) -> np.ndarray:
        return softmax(self.arrays["item_logits"])

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.modalities,
            {k: v.copy() for k, v in self.arrays.items()},
            self.emotion_weight,
            self.n_layers,
            self.n_social_layers,
            dict(self.flags),
        )

    def __getitem__(self, name):
        return self.arrays[name]


def param_names(modalities, use_social):
    names = []
    for m in modalities:
        names += [f"user_{m}", f"proj_{m}", f"bias_{m}"]
    if use_social:
        names.append("social")
    return names + ["W_u", "item_logits"]


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config, n_users: int, feature_dims: dict, seed=None) -> ModelParams:
    """Initialize parameters for the modalities in ``feature_dims``.

    Values are rounded to float32 so a freshly initialized model survives a
    checkpoint round trip unchanged.
    """
    d = config.d
    if d <= 0:
        raise ValueError("embedding dimension must be positive")
    modalities = tuple(m for m in MODALITIES if m in feature_dims)
    if not modalities:
        raise ValueError("at least one modality is required")
    rng = np.random.default_rng([config.seed if seed is None else seed, 0])
    use_social = not config.no_social
    arrays = {}
    for m in modalities:
        arrays[f"user_{m}"] = rng.normal(0.0, 0.01, size=(n_users, d))
        arrays[f"proj_{m}"] = _glorot(rng, feature_dims[m], d)
        arrays[f"bias_{m}"] = np.zeros(d)
    if use_social:
        arrays["social"] = rng.normal(0.0, 0.01, size=(n_users, d))
    c = len(modalities) + int(use_social)
    arrays["W_u"] = _glorot(rng, c * d, d)
    arrays["item_logits"] = np.zeros(len(modalities))
    arrays = {k: v.astype(np.float32).astype(np.float64) for k, v in arrays.items()}
    return ModelParams(
        modalities=modalities,
        arrays=arrays,
        emotion_weight=0.0 if config.no_emotion else float(config.lambda_emo),
        n_layers=config.L,
        n_social_layers=config.L_s,
        flags={
            "no_social": bool(config.no_social),
            "no_mutual": bool(config.no_mutual or config.lambda1 == 0),
            "no_emotion": bool(config.no_emotion or config.lambda_emo == 0),
        },
    )


@dataclass(frozen=True, eq=False)
class GraphInputs:
    """Everything the forward pass reads besides the parameters."""

    bipartite: BipartiteGraph
    social: SocialGraph
    features: dict
    emotion: np.ndarray | None
    profiles: np.ndarray

    @property
    def n_users(self):
        return self.bipartite.n_users

    @property
    def n_songs(self):
        return self.bipartite.n_songs


def prepare_inputs(dataset: Dataset) -> GraphInputs:
    """Build graphs and emotion profiles from the train split of ``dataset``."""
    bip = build_bipartite(dataset.train, dataset.n_users, dataset.n_songs)
    soc = build_social(dataset.social_edges, dataset.n_users)
    emo = dataset.emotion.rows if dataset.emotion is not None else None
    profiles = emotion_profile(bip, emo) if emo is not None else np.zeros((dataset.n_users, 2))
    return GraphInputs(bip, soc, {m: t.rows for m, t in dataset.features.items()}, emo, profiles)


# --------------------------------------------------------------------------
# Building blocks


def item_layer0(features: np.ndarray, proj: np.ndarray, bias=None) -> np.ndarray:
    if features.ndim != 2 or proj.ndim != 2 or features.shape[1] != proj.shape[0]:
        raise ShapeError(f"features {features.shape} do not match projection {proj.shape}")
    out = features @ proj
    if bias is not None:
        if bias.shape != (proj.shape[1],):
            raise ShapeError(f"bias {bias.shape} does not match projection {proj.shape}")
        out = out + bias
    return out


def propagate_bipartite(graph: BipartiteGraph, user0, item0, n_layers: int):
    """Alternate user<-song and song<-user messages; return layer averages."""
    if n_layers < 0:
        raise ValueError("n_layers must be >= 0")
    u, i = user0, item0
    su, si = user0.copy(), item0.copy()
    for _ in range(n_layers):
        u, i = spmv(graph.user_to_song, i), spmv(graph.song_to_user, u)
        su += u
        si += i
    return su / (n_layers + 1), si / (n_layers + 1)


def propagate_bipartite_grad(graph: BipartiteGraph, grad_user, grad_item, n_layers: int):
    """Adjoint of :func:`propagate_bipartite`: gradients w.r.t. ``user0, item0``."""
    scale = 1.0 / (n_layers + 1)
    gu_next = gi_next = None
    for level in range(n_layers, -1, -1):
        gu = grad_user * scale
        gi = grad_item * scale
        if level < n_layers:
            # u^{l+1} = A i^l and i^{l+1} = A^T u^l
            gi = gi + spmv(graph.song_to_user, gu_next)
            gu = gu + spmv(graph.user_to_song, gi_next)
        gu_next, gi_next = gu, gi
    return gu_next, gi_next


def propagate_social(graph: SocialGraph, table, n_layers: int):
    if n_layers < 0:
        raise ValueError("n_layers must be >= 0")
    h = table
    total = table.copy()
    for _ in range(n_layers):
        h = spmv(graph.adjacency, h)
        total += h
    return total / (n_layers + 1)


def propagate_social_grad(graph: SocialGraph, grad, n_layers: int):
    scale = 1.0 / (n_layers + 1)
    g = grad * scale
    for _ in range(n_layers):
        g = grad * scale + spmv(graph.adjacency, g)  # adjacency is symmetric
    return g


def fuse_user(modality_users, social_users, W_u):
    blocks = list(modality_users) + ([social_users] if social_users is not None else [])
    z = np.concatenate(blocks, axis=1)
    if W_u.shape[0] != z.shape[1]:
        raise ShapeError(f"W_u has {W_u.shape[0]} rows but concatenation width is {z.shape[1]}")
    return expit(z @ W_u)


def fuse_item(modality_items, weights):
    weights = np.asarray(weights, dtype=np.float64)
    if len(modality_items) != len(weights):
        raise ShapeError("one weight per modality is required")
    out = weights[0] * modality_items[0]
    for w, e in zip(weights[1:], modality_items[1:]):
        out = out + w * e
    return out


def emotion_profile(graph: BipartiteGraph, emotion) -> np.ndarray:
    """Mean (valence, arousal) over each user's train songs; zero when none."""
    emotion = np.asarray(emotion, dtype=np.float64)
    if emotion.ndim != 2 or emotion.shape[1] != 2:
        raise ShapeError("emotion table must have dim 2")
    m = graph.user_to_song
    binary = m.copy()
    binary.data = np.ones_like(binary.data)
    sums = np.asarray(binary @ emotion)
    deg = graph.user_degrees.astype(np.float64)
    out = np.zeros_like(sums)
    nz = deg > 0
    out[nz] = sums[nz] / deg[nz, None]
    return out


def _unit_rows(x):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def emotion_cosine(profiles, emotion, users=None, songs=None):
    """Cosine between user profiles and song emotions, 0 where either is zero.

    With ``users``/``songs`` index arrays returns the paired values, otherwise
    the full ``[N x P]`` matrix.
    """
    pu, es = _unit_rows(profiles), _unit_rows(emotion)
    if users is None:
        return pu @ es.T
    return np.einsum("...k,...k->...", pu[users], es[songs])


# --------------------------------------------------------------------------
# Full forward pass


@dataclass(frozen=True, eq=False)
class ForwardState:
    modalities: tuple
    user_modal: dict
    item_modal: dict
    social: np.ndarray | None
    concat: np.ndarray
    user_final: np.ndarray
    item_final: np.ndarray
    item_weights: np.ndarray
    profiles: np.ndarray
    emotion: np.ndarray | None
    emotion_weight: float

    def emotion_term(self, users, songs):
        if self.emotion is None or self.emotion_weight == 0:
            return np.zeros(np.broadcast(np.asarray(users), np.asarray(songs)).shape)
        return self.emotion_weight * emotion_cosine(self.profiles, self.emotion, users, songs)


def forward(params: ModelParams, inputs: GraphInputs) -> ForwardState:
    user_modal, item_modal = {}, {}
    for m in params.modalities:
        if m not in inputs.features:
            raise ShapeError(f"model expects modality {m!r} but no features were provided")
        item0 = item_layer0(inputs.features[m], params[f"proj_{m}"], params[f"bias_{m}"])
        user_modal[m], item_modal[m] = propagate_bipartite(
            inputs.bipartite, params[f"user_{m}"], item0, params.n_layers
        )
    social = None
    if params.use_social:
        social = propagate_social(inputs.social, params["social"], params.n_social_layers)
    blocks = [user_modal[m] for m in params.modalities] + ([social] if social is not None else [])
    concat = np.concatenate(blocks, axis=1)
    weights = params.item_weights()
    return ForwardState(
        modalities=params.modalities,
        user_modal=user_modal,
        item_modal=item_modal,
        social=social,
        concat=concat,
        user_final=expit(concat @ params["W_u"]),
        item_final=fuse_item([item_modal[m] for m in params.modalities], weights),
        item_weights=weights,
        profiles=inputs.profiles,
        emotion=inputs.emotion,
        emotion_weight=params.emotion_weight,
    )


def score(u, i, state: ForwardState, emotion_weight=None) -> float:
    lam = state.emotion_weight if emotion_weight is None else emotion_weight
    dot = float(state.user_final[u] @ state.item_final[i])
    if state.emotion is None or lam == 0:
        return dot
    return dot + lam * float(emotion_cosine(state.profiles, state.emotion, np.array(u), np.array(i)))


def pair_scores(state: ForwardState, users, songs) -> np.ndarray:
    """Vectorized :func:`score` over broadcastable index arrays."""
    users, songs = np.asarray(users), np.asarray(songs)
    dot = np.einsum("...k,...k->...", state.user_final[users], state.item_final[songs])
    return dot + state.emotion_term(users, songs)


def modality_score(u, i, state: ForwardState, modality) -> float:
    return float(state.user_modal[modality][u] @ state.item_modal[modality][i])


def score_matrix(state: ForwardState) -> np.ndarray:
    out = state.user_final @ state.item_final.T
    if state.emotion is not None and state.emotion_weight != 0:
        out += state.emotion_weight * emotion_cosine(state.profiles, state.emotion)
    return out


def rank(scores, exclude=()):
    """Song indices by descending score, ties by ascending index."""
    scores = np.asarray(scores)
    order = np.argsort(-scores, kind="stable")
    if len(exclude):
        mask = np.ones(scores.shape[0], dtype=bool)
        mask[np.asarray(list(exclude), dtype=np.int64)] = False
        order = order[mask[order]]
    return order


def score_all(u, state: ForwardState, exclude=()):
    row = state.user_final[u] @ state.item_final.T
    if state.emotion is not None and state.emotion_weight != 0:
        row = row + state.emotion_term(np.full(row.shape[0], u), np.arange(row.shape[0]))
    order = rank(row, exclude)
    return [(int(i), float(row[i])) for i in order]
