"""Normalized bipartite propagation on a toy graph, and its smoothing effect."""

import numpy as np

from mmgnn.graph import build_bipartite, build_social, dense
from mmgnn.model import propagate_bipartite, propagate_social

# two users, three songs; user 0 likes songs 0 and 1, user 1 likes 1 and 2
g = build_bipartite([(0, 0), (0, 1), (1, 1), (1, 2)], 2, 3)
print("normalized adjacency:\n", dense(g.user_to_song).round(3))

# one-hot song signals: after propagation a user's embedding mixes its songs
users0 = np.zeros((2, 3))
items0 = np.eye(3)
for n_layers in range(4):
    u, i = propagate_bipartite(g, users0, items0, n_layers)
    print(f"L={n_layers}  user 0 -> {u[0].round(3)}   song 0 -> {i[0].round(3)}")

# a cold song (no edges) keeps only its own layer-0 signal, divided by L+1
g_cold = build_bipartite([(0, 0), (1, 1)], 2, 3)
_, i = propagate_bipartite(g_cold, users0, items0, 2)
print("cold song 2 after L=2:", i[2].round(3))

# social propagation on a path 0 - 1 - 2 plus an isolated user 3
s = build_social([(0, 1), (1, 2)], 4)
t = np.eye(4)
print("social L=1:\n", propagate_social(s, t, 1).round(3))
