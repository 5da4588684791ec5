"""The command line tool end to end, in a scratch directory."""

import subprocess
import sys
import tempfile
from pathlib import Path


def mmgnn(*args):
    cmd = [sys.executable, "-m", "mmgnn.cli", *map(str, args)]
    print("$ mmgnn", " ".join(map(str, args)))
    res = subprocess.run(cmd, capture_output=True, text=True)
    print(res.stdout + res.stderr, end="")
    print(f"[exit {res.returncode}]\n")
    return res


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    cfg = tmp / "run.cfg"
    cfg.write_text("# small and quick\nd = 16\nepochs = 8\nbatch_size = 256\nlearning_rate = 0.005\nk_list = 10,20\n")
    data, ckpt = tmp / "data", tmp / "model.ckpt"

    mmgnn("generate", "--out", data, "--users", 80, "--songs", 150, "--groups", 4, "--cold-fraction", 0.1, "--seed", 3)
    mmgnn("train", "--data", data, "--config", cfg, "--out", ckpt)
    mmgnn("evaluate", "--model", ckpt, "--data", data, "--k", "10,20", "--out", tmp / "metrics.csv")
    user = (data / "id_map.tsv").read_text().splitlines()[1].split("\t")[1]
    mmgnn("recommend", "--model", ckpt, "--data", data, "--user", user, "--top", 5)
    mmgnn("export-embeddings", "--model", ckpt, "--data", data, "--out", tmp / "items.tsv", "--which", "item")
    print((tmp / "items.tsv").read_text().splitlines()[0][:80], "...\n")
    mmgnn("ablate", "--data", data, "--config", cfg, "--out", tmp / "ablation", "--seeds", "0,1")

    # input errors exit with 2
    mmgnn("recommend", "--model", ckpt, "--data", data, "--user", "nobody")
