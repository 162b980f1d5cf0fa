#!/usr/bin/env python3
"""Recent-N sweep on drift corpora: is N=1 ever the unique best window?

    python scripts/window_sweep.py --values 1 5 20 --seeds 0 1 2 3 4

The drift window holds about 8 of each user's 20 interactions, so a one-item
window should never win outright. Prints per-seed MSE and medians, and writes
sweep.csv plus a plot of the medians.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from lsa_rec.config import TrainConfig
from lsa_rec.evaluation import make_dataset, plot_sweep, sweep
from lsa_rec.synth import SynthConfig, generate

TRAIN = dict(K=6, d=16, batch_size=64, learning_rate=3e-3, max_epochs=40, patience=8, edge_scale=10.0)


def n1_never_unique_best(medians: dict[int, float]) -> bool:
    if 1 not in medians:
        return True
    others = [v for n, v in medians.items() if n != 1]
    return not others or medians[1] >= min(others)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--param", choices=["N", "K"], default="N")
    ap.add_argument("--values", type=int, nargs="+", default=[1, 5, 20])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="runs/window_sweep")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base = dict(TRAIN, N=8) if args.param == "K" else dict(TRAIN)
    results = {v: [] for v in args.values}
    for seed in args.seeds:
        reviews, _ = generate(SynthConfig(seed=seed))
        data = make_dataset(reviews, seed=seed)
        for row in sweep(args.param, args.values, data, TrainConfig(seed=seed, **base)):
            results[row[args.param]].append(row["mse"])
        print(f"seed {seed}: " + "  ".join(f"{args.param}={v} {results[v][-1]:.4f}" for v in args.values))

    medians = {v: float(np.median(m)) for v, m in results.items()}
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([args.param] + [f"seed{s}" for s in args.seeds] + ["median"])
        for v in args.values:
            w.writerow([v] + [f"{m:.6f}" for m in results[v]] + [f"{medians[v]:.6f}"])
    plot_sweep([{args.param: v, "mse": medians[v]} for v in args.values], args.param, out / "sweep.png")
    print("median: " + "  ".join(f"{args.param}={v} {m:.4f}" for v, m in medians.items()))
    if args.param == "N":
        print("N=1 unique best:", not n1_never_unique_best(medians))


if __name__ == "__main__":
    main()
