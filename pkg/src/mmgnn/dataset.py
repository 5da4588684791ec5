"""Interaction/social/feature ingestion, deterministic splits and synthetic data.

All interactions are binary: duplicate ``(user, song)`` rows collapse to one
pair and an optional third weight column is parsed but otherwise ignored.
Raw string IDs are interned to contiguous integer indices in sorted order, and
the mapping is written to ``id_map.tsv`` so a dataset directory reloads to the
same indices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, MissingFeature, NoInteractions, ParseError

MODALITIES = ("lyr", "fre", "vis")
EMOTION = "emo"

_EMPTY_PAIRS = np.zeros((0, 2), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Per-song feature matrix for one modality, rows in interned song order."""

    modality: str
    rows: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITIES + (EMOTION,):
            raise ValueError(f"unknown modality {self.modality!r}")
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] < 1:
            raise ValueError("feature rows must be a 2-D matrix with dim >= 1")
        if not np.all(np.isfinite(rows)):
            raise ValueError(f"non-finite value in {self.modality} features")
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Interned users/songs with train/test/cold-start splits.

    ``train`` and ``test`` are ``int64`` arrays of shape ``(n, 2)`` holding
    ``(user, song)`` rows, sorted and duplicate free. ``social_edges`` holds each
    undirected friendship once as ``(a, b)`` with ``a < b``.
    """

    user_ids: tuple
    song_ids: tuple
    train: np.ndarray
    test: np.ndarray = field(default_factory=lambda: _EMPTY_PAIRS.copy())
    cold_songs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    social_edges: np.ndarray = field(default_factory=lambda: _EMPTY_PAIRS.copy())
    features: dict = field(default_factory=dict)
    emotion: FeatureTable | None = None

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_songs(self) -> int:
        return len(self.song_ids)

    @property
    def modalities(self) -> tuple:
        return tuple(m for m in MODALITIES if m in self.features)

    @property
    def interactions(self) -> np.ndarray:
        return _sorted_pairs(np.vstack([self.train, self.test]))

    def train_degree_users(self) -> np.ndarray:
        return np.bincount(self.train[:, 0], minlength=self.n_users)

    def train_degree_songs(self) -> np.ndarray:
        return np.bincount(self.train[:, 1], minlength=self.n_songs)

    @property
    def dropped_users(self) -> np.ndarray:
        """Users holding test interactions but no train interaction."""
        has_test = np.bincount(self.test[:, 0], minlength=self.n_users) > 0
        return np.flatnonzero(has_test & (self.train_degree_users() == 0))

    def user_index(self) -> dict:
        return {raw: i for i, raw in enumerate(self.user_ids)}

    def song_index(self) -> dict:
        return {raw: i for i, raw in enumerate(self.song_ids)}

    def check(self):
        """Assert the structural invariants; raises ``ValueError`` on violation."""
        for name in ("train", "test", "social_edges"):
            arr = getattr(self, name)
            if len(arr) and len(np.unique(arr, axis=0)) != len(arr):
                raise ValueError(f"duplicate rows in {name}")
        both = _pair_keys(self.train, self.n_songs)
        if np.intersect1d(both, _pair_keys(self.test, self.n_songs)).size:
            raise ValueError("train and test overlap")
        if self.cold_songs.size:
            if np.any(self.train_degree_songs()[self.cold_songs] > 0):
                raise ValueError("cold song present in train")
            test_deg = np.bincount(self.test[:, 1], minlength=self.n_songs)
            if np.any(test_deg[self.cold_songs] == 0):
                raise ValueError("cold song without test interactions")
        e = self.social_edges
        if len(e) and (np.any(e[:, 0] >= e[:, 1]) or e.max() >= self.n_users or e.min() < 0):
            raise ValueError("invalid social edge")
        for table in list(self.features.values()) + ([self.emotion] if self.emotion else []):
            if len(table) != self.n_songs:
                raise ValueError(f"{table.modality} table has {len(table)} rows, expected {self.n_songs}")


def _pair_keys(pairs, n_songs):
    return pairs[:, 0].astype(np.int64) * max(n_songs, 1) + pairs[:, 1]


def _sorted_pairs(pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        return _EMPTY_PAIRS.copy()
    return np.unique(pairs, axis=0)


# --------------------------------------------------------------------------
# Parsing


def _content_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def _read_pair_file(path, kind):
    pairs = set()
    for lineno, line in _content_lines(path):
        parts = line.split("\t")
        if len(parts) not in (2, 3) or not parts[0] or not parts[1]:
            raise ParseError(f"expected '{kind}' with 2 tab-separated fields", path, lineno)
        if len(parts) == 3:
            try:
                float(parts[2])
            except ValueError:
                raise ParseError(f"bad weight {parts[2]!r}", path, lineno) from None
        pairs.add((parts[0], parts[1]))
    return pairs


def load_interactions(path) -> set:
    """Read ``user<TAB>song`` lines into a set of raw-ID pairs."""
    pairs = _read_pair_file(path, "user<TAB>song")
    if not pairs:
        raise NoInteractions(f"{path}: no interactions")
    return pairs


def load_social(path) -> set:
    return _read_pair_file(path, "user<TAB>user")


def load_feature_table(path, expected_songs, modality=None) -> FeatureTable:
    """Parse a ``n dim`` headed feature file and align it to ``expected_songs``.

    Rows for songs outside ``expected_songs`` are ignored.
    """
    path = Path(path)
    if modality is None:
        modality = path.stem.split("_")[-1]
    lines = _content_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError("missing header", path) from None
    try:
        n_rows, dim = (int(x) for x in header.split())
    except ValueError:
        raise ParseError(f"bad header {header!r}, expected '<n_rows> <dim>'", path, lineno) from None
    if n_rows < 0 or dim < 1:
        raise ParseError(f"bad header {header!r}", path, lineno)

    found = {}
    count = 0
    for lineno, line in lines:
        count += 1
        parts = line.split()
        if len(parts) != dim + 1:
            raise ParseError(f"expected song id and {dim} values, got {len(parts)} fields", path, lineno)
        try:
            values = [float(v) for v in parts[1:]]
        except ValueError:
            raise ParseError("non-numeric value", path, lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", path, lineno)
        if parts[0] in found:
            raise ParseError(f"duplicate row for song {parts[0]!r}", path, lineno)
        found[parts[0]] = values
    if count != n_rows:
        raise ParseError(f"header declares {n_rows} rows but file has {count}", path)

    rows = np.empty((len(expected_songs), dim))
    for i, song in enumerate(expected_songs):
        if song not in found:
            raise MissingFeature(song)
        rows[i] = found[song]
    return FeatureTable(modality, rows)


def load_id_map(path):
    users, songs = {}, {}
    for lineno, line in _content_lines(path):
        parts = line.split("\t")
        if len(parts) != 3 or parts[0] not in ("user", "song"):
            raise ParseError("expected 'user|song<TAB>raw<TAB>index'", path, lineno)
        try:
            idx = int(parts[2])
        except ValueError:
            raise ParseError(f"bad index {parts[2]!r}", path, lineno) from None
        (users if parts[0] == "user" else songs)[parts[1]] = idx
    user_ids = _ordered(users, path, "user")
    song_ids = _ordered(songs, path, "song")
    return user_ids, song_ids


def _ordered(mapping, path, kind):
    out = [None] * len(mapping)
    for raw, idx in mapping.items():
        if not 0 <= idx < len(out) or out[idx] is not None:
            raise ParseError(f"{kind} indices are not a bijection onto 0..{len(out) - 1}", path)
        out[idx] = raw
    return tuple(out)


def _intern_pairs(pairs, user_index, song_index, path=None):
    out = np.empty((len(pairs), 2), dtype=np.int64)
    for k, (u, s) in enumerate(sorted(pairs)):
        try:
            out[k] = user_index[u], song_index[s]
        except KeyError as exc:
            raise ParseError(f"unknown id {exc.args[0]!r}", path) from None
    return _sorted_pairs(out)


def _social_array(social_pairs, user_index, path=None):
    edges = set()
    self_loops = 0
    for a, b in social_pairs:
        try:
            ia, ib = user_index[a], user_index[b]
        except KeyError as exc:
            raise ParseError(f"unknown user {exc.args[0]!r} in social edges", path) from None
        if ia == ib:
            self_loops += 1
            continue
        edges.add((min(ia, ib), max(ia, ib)))
    if self_loops:
        warnings.warn(f"dropped {self_loops} self-loop social edge(s)")
    return _sorted_pairs(list(edges))


def build_dataset(pairs, social_pairs=(), features=None, emotion=None, user_ids=None, song_ids=None):
    """Intern raw-ID pairs into an unsplit :class:`Dataset` (everything in train).

    ``features`` maps modality to a raw ``{song_id: vector}`` dict or a
    :class:`FeatureTable` already in interned order.
    """
    if not pairs:
        raise NoInteractions("no interactions")
    if user_ids is None:
        users = {u for u, _ in pairs} | {x for e in social_pairs for x in e}
        user_ids = tuple(sorted(users))
    if song_ids is None:
        song_ids = tuple(sorted({s for _, s in pairs}))
    user_index = {u: i for i, u in enumerate(user_ids)}
    song_index = {s: i for i, s in enumerate(song_ids)}
    tables = {}
    for m, table in (features or {}).items():
        tables[m] = table if isinstance(table, FeatureTable) else _table_from_dict(m, table, song_ids)
    if emotion is not None and not isinstance(emotion, FeatureTable):
        emotion = _table_from_dict(EMOTION, emotion, song_ids)
    ds = Dataset(
        user_ids=tuple(user_ids),
        song_ids=tuple(song_ids),
        train=_intern_pairs(pairs, user_index, song_index),
        social_edges=_social_array(social_pairs, user_index),
        features=tables,
        emotion=emotion,
    )
    ds.check()
    return ds


def _table_from_dict(modality, rows, song_ids):
    missing = [s for s in song_ids if s not in rows]
    if missing:
        raise MissingFeature(missing[0])
    return FeatureTable(modality, np.array([rows[s] for s in song_ids], dtype=np.float64))


# --------------------------------------------------------------------------
# Splitting


def split(dataset: Dataset, test_fraction: float, cold_fraction: float = 0.0, seed: int = 0) -> Dataset:
    """Re-split all interactions of ``dataset`` into train/test/cold-start.

    Cold songs are drawn uniformly among songs with at least one interaction
    and all their interactions go to test. Each user's remaining interactions
    are shuffled and ``round(test_fraction * n)`` of them go to test, capped so
    that a user with two or more warm interactions keeps one in train.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if not 0.0 <= cold_fraction < 1.0:
        raise ValueError(f"cold_fraction must be in [0, 1), got {cold_fraction}")
    rng = np.random.default_rng(seed)
    pairs = dataset.interactions
    n_users, n_songs = dataset.n_users, dataset.n_songs

    active_songs = np.flatnonzero(np.bincount(pairs[:, 1], minlength=n_songs) > 0)
    n_cold = min(int(round(cold_fraction * n_songs)), active_songs.size)
    cold = np.sort(rng.choice(active_songs, size=n_cold, replace=False)) if n_cold else np.zeros(0, np.int64)
    is_cold = np.zeros(n_songs, dtype=bool)
    is_cold[cold] = True

    cold_rows = pairs[is_cold[pairs[:, 1]]]
    warm = pairs[~is_cold[pairs[:, 1]]]
    # warm is sorted by (user, song); slice per user
    starts = np.searchsorted(warm[:, 0], np.arange(n_users + 1))
    train_parts, test_parts = [], [cold_rows]
    for u in range(n_users):
        rows = warm[starts[u]:starts[u + 1]]
        n = len(rows)
        if n == 0:
            continue
        n_test = min(int(math.floor(test_fraction * n + 0.5)), n - 1) if n >= 2 else 0
        order = rng.permutation(n)
        test_parts.append(rows[order[:n_test]])
        train_parts.append(rows[order[n_test:]])

    out = replace(
        dataset,
        train=_sorted_pairs(np.vstack(train_parts) if train_parts else _EMPTY_PAIRS),
        test=_sorted_pairs(np.vstack(test_parts)),
        cold_songs=cold.astype(np.int64),
    )
    n_dropped = out.dropped_users.size
    if n_dropped:
        warnings.warn(f"{n_dropped} user(s) have no train interactions and are excluded from evaluation")
    return out


# --------------------------------------------------------------------------
# Synthetic data


@dataclass
class SyntheticSpec:
    """Planted-community generator settings.

    Users and songs are assigned round-robin to ``n_groups`` groups; in-group
    pairs interact with probability ``p_in`` and out-group pairs with
    ``p_out``. Social edges use ``q_in``/``q_out`` the same way.
    """

    n_users: int = 200
    n_songs: int = 500
    n_groups: int = 5
    p_in: float = 0.5
    p_out: float = 0.05
    q_in: float = 0.3
    q_out: float = 0.01
    feature_dims: dict = field(default_factory=lambda: {"lyr": 32, "fre": 24, "vis": 16})
    noise_sigma: float = 0.5
    cold_fraction: float = 0.0
    test_fraction: float = 0.2
    seed: int = 0

    def validate(self):
        if self.n_users <= 0 or self.n_songs <= 0:
            raise InvalidSpec("n_users and n_songs must be positive")
        if self.n_groups <= 0 or self.n_groups > min(self.n_users, self.n_songs):
            raise InvalidSpec("n_groups must be in 1..min(n_users, n_songs)")
        for name in ("p_in", "p_out", "q_in", "q_out"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidSpec(f"{name} must be a probability, got {v}")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be nonnegative")
        if not 0.0 <= self.cold_fraction < 1.0:
            raise InvalidSpec("cold_fraction must be in [0, 1)")
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidSpec("test_fraction must be in (0, 1)")
        for m, dim in self.feature_dims.items():
            if m not in MODALITIES or dim < 1:
                raise InvalidSpec(f"bad feature dim entry {m}={dim}")


def user_groups(n_users, n_groups):
    return np.arange(n_users) % n_groups


def song_groups(n_songs, n_groups):
    return np.arange(n_songs) % n_groups


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    spec.validate()
    if spec.n_groups == 1:
        warnings.warn("n_groups=1: there is no community structure to recover")
    if spec.p_in <= spec.p_out or spec.q_in <= spec.q_out:
        warnings.warn("p_in <= p_out or q_in <= q_out: data is not homophilous")
    rng = np.random.default_rng(spec.seed)
    ug = user_groups(spec.n_users, spec.n_groups)
    sg = song_groups(spec.n_songs, spec.n_groups)

    same = ug[:, None] == sg[None, :]
    prob = np.where(same, spec.p_in, spec.p_out)
    users, songs = np.nonzero(rng.random(prob.shape) < prob)
    if users.size == 0:
        raise InvalidSpec("generator produced no interactions; raise p_in/p_out")

    same_u = ug[:, None] == ug[None, :]
    qprob = np.where(same_u, spec.q_in, spec.q_out)
    draw = rng.random(qprob.shape) < qprob
    a, b = np.nonzero(np.triu(draw, k=1))

    features = {}
    for m in MODALITIES:
        if m not in spec.feature_dims:
            continue
        dim = spec.feature_dims[m]
        centroids = rng.standard_normal((spec.n_groups, dim))
        rows = centroids[sg] + spec.noise_sigma * rng.standard_normal((spec.n_songs, dim))
        features[m] = FeatureTable(m, rows)
    emo_centroids = rng.uniform(-1.0, 1.0, size=(spec.n_groups, 2))
    emo = np.clip(emo_centroids[sg] + spec.noise_sigma * rng.standard_normal((spec.n_songs, 2)), -1.0, 1.0)

    width_u = len(str(spec.n_users - 1))
    width_s = len(str(spec.n_songs - 1))
    ds = Dataset(
        user_ids=tuple(f"u{i:0{width_u}d}" for i in range(spec.n_users)),
        song_ids=tuple(f"s{i:0{width_s}d}" for i in range(spec.n_songs)),
        train=_sorted_pairs(np.column_stack([users, songs])),
        social_edges=_sorted_pairs(np.column_stack([a, b])),
        features=features,
        emotion=FeatureTable(EMOTION, emo),
    )
    return split(ds, spec.test_fraction, spec.cold_fraction, spec.seed)


# --------------------------------------------------------------------------
# Directory format


def _fmt(x):
    return repr(float(x))


def _write_pairs(path, pairs, left, right, header):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {header}\n")
        for a, b in pairs:
            fh.write(f"{left[a]}\t{right[b]}\n")


def write_feature_table(path, table: FeatureTable, song_ids):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for sid, row in zip(song_ids, table.rows):
            fh.write(sid + " " + " ".join(_fmt(v) for v in row) + "\n")


def write_dataset(dataset: Dataset, directory):
    """Write the dataset file family into ``directory`` (created if needed)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    U, S = dataset.user_ids, dataset.song_ids
    _write_pairs(d / "interactions.tsv", dataset.interactions, U, S, "user\tsong")
    _write_pairs(d / "train.tsv", dataset.train, U, S, "user\tsong")
    _write_pairs(d / "test.tsv", dataset.test, U, S, "user\tsong")
    _write_pairs(d / "social.tsv", dataset.social_edges, U, U, "user\tuser")
    with open(d / "cold_songs.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# song\n")
        for s in dataset.cold_songs:
            fh.write(f"{S[s]}\n")
    with open(d / "id_map.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# kind\traw\tindex\n")
        for i, raw in enumerate(U):
            fh.write(f"user\t{raw}\t{i}\n")
        for i, raw in enumerate(S):
            fh.write(f"song\t{raw}\t{i}\n")
    for m, table in dataset.features.items():
        write_feature_table(d / f"features_{m}.txt", table, S)
    if dataset.emotion is not None:
        write_feature_table(d / f"features_{EMOTION}.txt", dataset.emotion, S)


def read_dataset(directory, test_fraction=0.2, cold_fraction=0.0, seed=0) -> Dataset:
    """Load a dataset directory.

    When ``train.tsv``/``test.tsv`` are present they define the split;
    otherwise ``interactions.tsv`` is split with the given fractions. Missing
    modality files are tolerated with a warning.
    """
    d = Path(directory)
    if not (d / "interactions.tsv").exists() and not (d / "train.tsv").exists():
        raise FileNotFoundError(f"{d}: no interactions.tsv")
    social = load_social(d / "social.tsv") if (d / "social.tsv").exists() else set()
    presplit = (d / "train.tsv").exists() and (d / "test.tsv").exists()
    if presplit:
        train_raw = _read_pair_file(d / "train.tsv", "user<TAB>song")
        test_raw = _read_pair_file(d / "test.tsv", "user<TAB>song")
        all_raw = train_raw | test_raw
        if not all_raw:
            raise NoInteractions(f"{d}: no interactions")
    else:
        all_raw = load_interactions(d / "interactions.tsv")

    if (d / "id_map.tsv").exists():
        user_ids, song_ids = load_id_map(d / "id_map.tsv")
    else:
        user_ids = tuple(sorted({u for u, _ in all_raw} | {x for e in social for x in e}))
        song_ids = tuple(sorted({s for _, s in all_raw}))
    ui = {u: i for i, u in enumerate(user_ids)}
    si = {s: i for i, s in enumerate(song_ids)}

    features = {}
    for m in MODALITIES:
        p = d / f"features_{m}.txt"
        if p.exists():
            features[m] = load_feature_table(p, song_ids, m)
        else:
            warnings.warn(f"{p.name} not found: modality {m!r} disabled")
    if not features:
        raise FileNotFoundError(f"{d}: no modality feature files (features_lyr/fre/vis.txt)")
    p = d / f"features_{EMOTION}.txt"
    emotion = load_feature_table(p, song_ids, EMOTION) if p.exists() else None
    if emotion is not None and emotion.dim != 2:
        raise ParseError(f"emotion table must have dim 2, got {emotion.dim}", p)

    social_arr = _social_array(social, ui, d / "social.tsv")
    if presplit:
        cold = []
        if (d / "cold_songs.txt").exists():
            for lineno, line in _content_lines(d / "cold_songs.txt"):
                if line.strip() not in si:
                    raise ParseError(f"unknown song {line.strip()!r}", d / "cold_songs.txt", lineno)
                cold.append(si[line.strip()])
        ds = Dataset(
            user_ids=user_ids,
            song_ids=song_ids,
            train=_intern_pairs(train_raw, ui, si, d / "train.tsv"),
            test=_intern_pairs(test_raw, ui, si, d / "test.tsv"),
            cold_songs=np.array(sorted(cold), dtype=np.int64),
            social_edges=social_arr,
            features=features,
            emotion=emotion,
        )
        ds.check()
        return ds
    ds = Dataset(
        user_ids=user_ids,
        song_ids=song_ids,
        train=_intern_pairs(all_raw, ui, si, d / "interactions.tsv"),
        social_edges=social_arr,
        features=features,
        emotion=emotion,
    )
    return split(ds, test_fraction, cold_fraction, seed)
