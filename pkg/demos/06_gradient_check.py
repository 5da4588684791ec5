"""Central differences against the hand-written backward pass."""

import numpy as np

from mmgnn import SyntheticSpec, TrainConfig, generate_synthetic, init_params, prepare_inputs
from mmgnn.training import sample_batch, total_loss

ds = generate_synthetic(SyntheticSpec(n_users=15, n_songs=25, n_groups=2, feature_dims={"lyr": 4, "fre": 3, "vis": 5}, seed=0))
inputs = prepare_inputs(ds)
cfg = TrainConfig(d=4, lambda2=1e-2)
p = init_params(cfg, ds.n_users, {m: t.dim for m, t in ds.features.items()})
rng = np.random.default_rng(0)
for k, a in p.arrays.items():
    p.arrays[k] = rng.normal(0, 0.5, a.shape)  # move away from the tiny init
batch = sample_batch(inputs.bipartite, 16, rng)
parts, grads = total_loss(batch, p, inputs, cfg)
print(f"loss {parts.loss:.5f} = bpr {parts.bpr:.5f} + {cfg.lambda1} * mutual {parts.mutual:.5f} + {cfg.lambda2} * l2 {parts.l2:.3f}")

h = 1e-4
for name, arr in p.arrays.items():
    flat, worst = arr.reshape(-1), 0.0
    for j in rng.choice(flat.size, size=min(10, flat.size), replace=False):
        old = flat[j]
        flat[j] = old + h
        up = total_loss(batch, p, inputs, cfg)[0].loss
        flat[j] = old - h
        down = total_loss(batch, p, inputs, cfg)[0].loss
        flat[j] = old
        num, ana = (up - down) / (2 * h), grads[name].reshape(-1)[j]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-12))
    print(f"{name:<12} {str(arr.shape):<10} max rel err {worst:.1e}")
