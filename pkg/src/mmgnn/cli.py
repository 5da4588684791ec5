"""Command line entry point.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .dataset import SyntheticSpec, generate_synthetic, read_dataset, write_dataset
from .errors import MMGNNError, TrainingDiverged
from .evaluation import DEFAULT_K, evaluate, format_report, write_metrics_csv
from .model import forward, prepare_inputs, score_all
from .training import TrainConfig, fit, write_loss_log

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

VARIANTS = (
    ("Full", {}),
    ("w/o Social", {"no_social": True}),
    ("w/o Mutual Learning", {"no_mutual": True}),
    ("w/o Emotion", {"no_emotion": True}),
)


class InputError(Exception):
    pass


def _k_list(text):
    try:
        ks = tuple(int(k) for k in text.split(",") if k.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("K values must be positive")
    return ks


def _seeds(text):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _run_config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _load_data(path, cfg: RunConfig):
    s = cfg.synthetic
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = read_dataset(path, s.test_fraction, s.cold_fraction, cfg.train.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return ds


def _load_model(path, ds):
    params, n_songs = load_checkpoint(path)
    if params.n_users != ds.n_users or n_songs != ds.n_songs:
        raise InputError(
            f"checkpoint is for {params.n_users} users x {n_songs} songs, "
            f"dataset has {ds.n_users} x {ds.n_songs}"
        )
    for m, dim in params.feature_dims().items():
        if m not in ds.features:
            raise InputError(f"checkpoint uses modality {m!r} but the dataset has no features_{m}.txt")
        if ds.features[m].dim != dim:
            raise InputError(f"modality {m!r}: checkpoint dim {dim}, dataset dim {ds.features[m].dim}")
    return params


def _train_config(cfg: RunConfig, args=None, **overrides) -> TrainConfig:
    tc = replace(cfg.train, **overrides)
    if args is not None:
        tc = replace(
            tc,
            no_social=tc.no_social or args.no_social,
            no_mutual=tc.no_mutual or args.no_mutual,
            no_emotion=tc.no_emotion or args.no_emotion,
        )
    return tc.validate()


# --------------------------------------------------------------------------
# Subcommands


def cmd_generate(args):
    spec = SyntheticSpec(
        n_users=args.users, n_songs=args.songs, n_groups=args.groups,
        p_in=args.p_in, p_out=args.p_out, q_in=args.q_in, q_out=args.q_out,
        noise_sigma=args.noise, cold_fraction=args.cold_fraction,
        test_fraction=args.test_fraction, seed=args.seed,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = generate_synthetic(spec)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_dataset(ds, args.out)
    n_train, n_test = len(ds.train), len(ds.test)
    print(
        f"users={ds.n_users} songs={ds.n_songs} interactions={n_train + n_test} "
        f"train={n_train} test={n_test} cold_songs={ds.cold_songs.size} "
        f"social_edges={len(ds.social_edges)} dropped_users={ds.dropped_users.size}"
    )
    return EXIT_OK


def cmd_train(args):
    cfg = _run_config(args.config)
    ds = _load_data(args.data, cfg)
    tc = _train_config(cfg, args)

    def progress(epoch, result):
        print(f"epoch {epoch:3d}  loss {result.epoch_means()[-1]:.6f}")

    result = fit(ds, tc, progress=progress if args.verbose else None)
    out = Path(args.out)
    save_checkpoint(out, result.params, ds.n_songs)
    log_path = Path(args.loss_log) if args.loss_log else out.with_suffix(".loss.csv")
    write_loss_log(log_path, result.log)
    means = result.epoch_means()
    if means:
        print(f"trained {tc.epochs} epochs: loss {means[0]:.6f} -> {means[-1]:.6f}")
    print(f"wrote {out} and {log_path}")
    return EXIT_OK


def cmd_evaluate(args):
    ds = _load_data(args.data, RunConfig())
    params = _load_model(args.model, ds)
    state = forward(params, prepare_inputs(ds))
    splits = ("cold",) if args.cold_only else ("all", "cold")
    report = evaluate(state, ds, args.k, splits)
    write_metrics_csv(args.out, report)
    print(format_report(report, f"Top-K results ({Path(args.model).name})"))
    if "cold" not in report.blocks:
        print("note: cold-start block omitted (no cold songs in the test split)")
    if report.n_dropped:
        print(f"note: {report.n_dropped} user(s) without train interactions were excluded")
    return EXIT_OK


def run_ablation(ds, cfg: RunConfig, seeds, k_list=None, verbose=False):
    """Train and evaluate each variant for every seed.

    Returns ``{variant: [report or None per seed]}``; ``None`` marks a
    diverged run.
    """
    k_list = tuple(k_list or cfg.k_list)
    inputs = prepare_inputs(ds)
    results = {}
    for name, flags in VARIANTS:
        runs = []
        for seed in seeds:
            variant = {"no_social": False, "no_mutual": False, "no_emotion": False, **flags}
            tc = _train_config(cfg, None, seed=seed, **variant)
            try:
                params = fit(ds, tc, inputs).params
            except TrainingDiverged as exc:
                print(f"{name} seed {seed}: diverged ({exc})", file=sys.stderr)
                runs.append(None)
                continue
            runs.append(evaluate(forward(params, inputs), ds, k_list, ("all",)))
            if verbose:
                print(f"{name} seed {seed}: recall@{k_list[0]}={runs[-1].get('recall', k_list[0]):.4f}")
        results[name] = runs
    return results


def ablation_table(results, k_list):
    """Rows of seed-averaged recall/ndcg per variant, plus run counts."""
    rows = []
    for name, runs in results.items():
        ok = [r for r in runs if r is not None]
        row = {"variant": name, "seeds_ok": len(ok), "seeds_failed": len(runs) - len(ok)}
        for k in k_list:
            for metric in ("recall", "ndcg"):
                row[f"{metric}@{k}"] = float(np.mean([r.get(metric, k) for r in ok])) if ok else float("nan")
        rows.append(row)
    return rows


def cmd_ablate(args):
    cfg = _run_config(args.config)
    ds = _load_data(args.data, cfg)
    k_list = tuple(sorted(cfg.k_list))
    results = run_ablation(ds, cfg, args.seeds, k_list, verbose=args.verbose)
    rows = ablation_table(results, k_list)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["variant"] + [f"{m}@{k}" for k in k_list for m in ("recall", "ndcg")] + ["seeds_ok", "seeds_failed"]
    with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in cols)])
    k = k_list[-1]
    full = rows[0][f"recall@{k}"]
    print(f"{'Method':<28} {f'Recall@{k}':>10} {f'NDCG@{k}':>9} {'vs Full':>8}")
    for row in rows:
        r, n = row[f"recall@{k}"], row[f"ndcg@{k}"]
        delta = "" if row["variant"] == "Full" or not full else f"{100 * (r - full) / full:+.1f}%"
        print(f"{'MM-GNN ' + row['variant']:<28} {r:>10.4f} {n:>9.4f} {delta:>8}")
    print(f"wrote {out / 'ablation.csv'}")
    return EXIT_OK if any(row["seeds_ok"] for row in rows) else EXIT_NUMERIC


def cmd_recommend(args):
    ds = _load_data(args.data, RunConfig())
    params = _load_model(args.model, ds)
    index = ds.user_index()
    if args.user not in index:
        raise InputError(f"unknown user {args.user!r}")
    if args.top < 0:
        raise InputError("--top must be >= 0")
    u = index[args.user]
    state = forward(params, prepare_inputs(ds))
    seen = ds.train[ds.train[:, 0] == u, 1]
    for song, s in score_all(u, state, exclude=seen)[:args.top]:
        print(f"{ds.song_ids[song]}\t{s:.6f}")
    return EXIT_OK


def cmd_export_embeddings(args):
    ds = _load_data(args.data, RunConfig())
    params = _load_model(args.model, ds)
    state = forward(params, prepare_inputs(ds))
    emb, ids = (state.user_final, ds.user_ids) if args.which == "user" else (state.item_final, ds.song_ids)
    emb = emb.astype(np.float32)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for rid, row in zip(ids, emb):
            fh.write(rid + "\t" + "\t".join(f"{v:.9g}" for v in row) + "\n")
    print(f"wrote {len(ids)} {args.which} embeddings to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    d = SyntheticSpec()
    p = argparse.ArgumentParser(prog="mmgnn", description="Multi-modal graph recommender")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic planted-community dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--users", type=int, default=d.n_users)
    g.add_argument("--songs", type=int, default=d.n_songs)
    g.add_argument("--groups", type=int, default=d.n_groups)
    g.add_argument("--p-in", type=float, default=d.p_in)
    g.add_argument("--p-out", type=float, default=d.p_out)
    g.add_argument("--q-in", type=float, default=d.q_in)
    g.add_argument("--q-out", type=float, default=d.q_out)
    g.add_argument("--noise", type=float, default=d.noise_sigma)
    g.add_argument("--cold-fraction", type=float, default=d.cold_fraction)
    g.add_argument("--test-fraction", type=float, default=d.test_fraction)
    g.add_argument("--seed", type=int, default=d.seed)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--loss-log")
    t.add_argument("--no-social", action="store_true")
    t.add_argument("--no-mutual", action="store_true")
    t.add_argument("--no-emotion", action="store_true")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="compute Precision/Recall/NDCG@K")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--k", type=_k_list, default=DEFAULT_K)
    e.add_argument("--cold-only", action="store_true")
    e.add_argument("--out", default="metrics.csv")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="train the ablation variants over several seeds")
    a.add_argument("--data", required=True)
    a.add_argument("--config")
    a.add_argument("--out", required=True)
    a.add_argument("--seeds", type=_seeds, default=(0,))
    a.add_argument("-v", "--verbose", action="store_true")
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("recommend", help="top-N songs for one user")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--user", required=True)
    r.add_argument("--top", type=int, default=10)
    r.set_defaults(func=cmd_recommend)

    x = sub.add_parser("export-embeddings", help="write fused user or song embeddings as TSV")
    x.add_argument("--model", required=True)
    x.add_argument("--data", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--which", choices=("user", "item"), default="item")
    x.set_defaults(func=cmd_export_embeddings)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MMGNNError, InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
