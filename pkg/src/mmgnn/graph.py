"""Symmetrically normalized sparse adjacency for the bipartite and social graphs.

Edge ``(a, b)`` carries weight ``1 / sqrt(deg(a) * deg(b))``. No self-loops are
added, so zero-degree nodes receive zero messages.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GraphBuildError, ShapeError


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    user_to_song: sp.csr_matrix  # [N x P], row u holds N_u
    song_to_user: sp.csr_matrix  # [P x N], row i holds N_i
    user_degrees: np.ndarray
    song_degrees: np.ndarray

    @property
    def n_users(self):
        return self.user_to_song.shape[0]

    @property
    def n_songs(self):
        return self.user_to_song.shape[1]

    def neighbors(self, user):
        m = self.user_to_song
        return m.indices[m.indptr[user]:m.indptr[user + 1]]


@dataclass(frozen=True, eq=False)
class SocialGraph:
    adjacency: sp.csr_matrix  # [N x N], symmetric
    degrees: np.ndarray
    n_self_loops_rejected: int = 0

    @property
    def n_users(self):
        return self.adjacency.shape[0]

    def neighbors(self, user):
        m = self.adjacency
        return m.indices[m.indptr[user]:m.indptr[user + 1]]


def _csr(rows, cols, weights, shape):
    order = np.lexsort((cols, rows))
    rows, cols, weights = rows[order], cols[order], weights[order]
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=shape[0]), out=indptr[1:])
    return sp.csr_matrix((weights, cols.astype(np.int64), indptr), shape=shape)


def _check_range(arr, bound, what):
    if arr.size and (arr.min() < 0 or arr.max() >= bound):
        raise GraphBuildError(f"{what} index out of range [0, {bound})")


def build_bipartite(train_interactions, n_users: int, n_songs: int) -> BipartiteGraph:
    pairs = np.asarray(train_interactions, dtype=np.int64).reshape(-1, 2)
    users, songs = pairs[:, 0], pairs[:, 1]
    _check_range(users, n_users, "user")
    _check_range(songs, n_songs, "song")
    if len(pairs):
        pairs = np.unique(pairs, axis=0)
        users, songs = pairs[:, 0], pairs[:, 1]
    du = np.bincount(users, minlength=n_users)
    ds = np.bincount(songs, minlength=n_songs)
    w = 1.0 / np.sqrt(du[users].astype(np.float64) * ds[songs])
    return BipartiteGraph(
        user_to_song=_csr(users, songs, w, (n_users, n_songs)),
        song_to_user=_csr(songs, users, w, (n_songs, n_users)),
        user_degrees=du,
        song_degrees=ds,
    )


def build_social(social_edges, n_users: int) -> SocialGraph:
    """Symmetrize and deduplicate undirected friendship edges.

    Self-loops are dropped and counted in ``n_self_loops_rejected``.
    """
    edges = np.asarray(social_edges, dtype=np.int64).reshape(-1, 2)
    _check_range(edges, n_users, "user")
    loops = edges[:, 0] == edges[:, 1]
    n_loops = int(loops.sum())
    if n_loops:
        warnings.warn(f"rejected {n_loops} self-loop social edge(s)")
    edges = edges[~loops]
    edges = np.sort(edges, axis=1)
    if len(edges):
        edges = np.unique(edges, axis=0)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    deg = np.bincount(rows, minlength=n_users)
    w = 1.0 / np.sqrt(deg[rows].astype(np.float64) * deg[cols])
    return SocialGraph(_csr(rows, cols, w, (n_users, n_users)), deg, n_loops)


def spmv(view: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    """``out[v] = sum_w weight(v, w) * x[w]`` over the CSR rows of ``view``."""
    x = np.asarray(x)
    if x.ndim not in (1, 2) or x.shape[0] != view.shape[1]:
        raise ShapeError(f"cannot multiply {view.shape} adjacency by {x.shape} input")
    return np.asarray(view @ x)


def dense(view: sp.csr_matrix) -> np.ndarray:
    return view.toarray()
