"""Train the full model on synthetic data and compare with random rankings."""

import numpy as np

from mmgnn import SyntheticSpec, TrainConfig, evaluate, fit, forward, generate_synthetic, prepare_inputs
from mmgnn.evaluation import format_report, random_baseline

ds = generate_synthetic(SyntheticSpec(n_users=120, n_songs=240, n_groups=4, seed=0))
inputs = prepare_inputs(ds)
cfg = TrainConfig(d=32, epochs=15, batch_size=256, learning_rate=0.005, seed=0)

res = fit(ds, cfg, inputs, progress=lambda e, r: print(f"epoch {e:2d} loss {r.epoch_means()[-1]:.4f}"))
last = res.log[-1]
print(f"final step: bpr {last.bpr:.4f}  mutual {last.mutual:.4f}  l2 {last.l2:.1f}")

state = forward(res.params, inputs)
print("item modality weights:", dict(zip(state.modalities, state.item_weights.round(3).tolist())))
model = evaluate(state, ds, (5, 10, 20))
base = random_baseline(ds, (5, 10, 20), seed=0)
print(format_report(model, "trained"))
print(format_report(base, "random"))
print(f"Recall@10 lift: {model.get('recall', 10) / base.get('recall', 10):.1f}x")

# top picks for one user, train songs excluded
from mmgnn.model import score_all  # noqa: E402

u = 0
seen = ds.train[ds.train[:, 0] == u, 1]
top = score_all(u, state, exclude=seen)[:5]
print("user", ds.user_ids[u], "->", [(ds.song_ids[i], round(s, 3)) for i, s in top])
hits = set(ds.test[ds.test[:, 0] == u, 1].tolist()) & {i for i, _ in top}
print("held-out songs in the top 5:", sorted(ds.song_ids[i] for i in hits))
