"""Train the four variants over a few seeds and print a comparison table."""

from mmgnn import SyntheticSpec, generate_synthetic
from mmgnn.cli import ablation_table, run_ablation
from mmgnn.config import parse_config

ds = generate_synthetic(SyntheticSpec(n_users=100, n_songs=200, n_groups=4, seed=0))
cfg = parse_config("d = 16\nepochs = 10\nbatch_size = 256\nlearning_rate = 0.005\n")
results = run_ablation(ds, cfg, seeds=(0, 1), k_list=(10, 20))
rows = ablation_table(results, (10, 20))
full = rows[0]["recall@20"]
print(f"{'variant':<22}{'R@10':>8}{'R@20':>8}{'N@20':>8}{'vs Full':>9}")
for r in rows:
    delta = (r["recall@20"] - full) / full * 100
    print(f"{r['variant']:<22}{r['recall@10']:>8.4f}{r['recall@20']:>8.4f}{r['ndcg@20']:>8.4f}{delta:>+8.1f}%")
