"""Evaluation protocol: random 80/20 split, MSE / MAE / NDCG@10, ablations and K/N sweeps."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import VARIANTS, TrainConfig, config_dict
from .corpus import AspectVocabulary, RawReview, build_vocabulary, extract_corpus, review_aspect_ids
from .training import TrainedModel, rng_for, train


@dataclass
class MetricsReport:
    mse: float
    mae: float
    ndcg_at_10: float | None
    n_test: int
    variant: str
    seed: int
    config: dict = field(default_factory=dict)
    n_ndcg_users: int = 0
    n_truncated_unions: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def table(self) -> str:
        rows = [("MSE", f"{self.mse:.4f}"), ("MAE", f"{self.mae:.4f}"),
                ("NDCG@10", "n/a" if self.ndcg_at_10 is None else f"{self.ndcg_at_10:.4f}"),
                ("n_test", str(self.n_test)), ("variant", self.variant), ("seed", str(self.seed))]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


@dataclass
class Dataset:
    """Reviews with resolved aspect ids and a fixed train/test partition."""

    reviews: list[RawReview]
    aspect_ids: list[list[int]]
    vocab: AspectVocabulary
    train_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def users(self) -> list[str]:
        return sorted({r.user_id for r in self.reviews})

    @property
    def items(self) -> list[str]:
        return sorted({r.item_id for r in self.reviews})

    @property
    def train(self) -> list[RawReview]:
        return [self.reviews[k] for k in self.train_idx]

    @property
    def test(self) -> list[RawReview]:
        return [self.reviews[k] for k in self.test_idx]

    @property
    def train_aspects(self) -> list[list[int]]:
        return [self.aspect_ids[k] for k in self.train_idx]


def split_dataset(reviews: Sequence, ratio: float, seed: int):
    """Uniform random split at review granularity; returns (train, test) index arrays."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    n = len(reviews)
    perm = rng_for(seed, "test_split").permutation(n)
    n_test = int(round(ratio * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def make_dataset(reviews: Sequence[RawReview], min_freq: int = 2, test_ratio: float = 0.2,
                 seed: int = 0, parser=None) -> Dataset:
    reviews = list(reviews)
    mentions = extract_corpus(reviews, parser)
    vocab = build_vocabulary((m for ms in mentions for m in ms), min_freq)
    train_idx, test_idx = split_dataset(reviews, test_ratio, seed)
    return Dataset(reviews, review_aspect_ids(mentions, vocab), vocab, train_idx, test_idx)


# --------------------------------------------------------------------------- #
# metrics

def dcg_at_k(relevance_in_rank_order, k: int) -> float:
    rel = np.asarray(relevance_in_rank_order, dtype=np.float64)[:k]
    return float(np.sum((2.0 ** rel - 1.0) / np.log2(np.arange(2, rel.size + 2))))


def ndcg_at_k(true_ratings, predicted, k: int = 10) -> float:
    """NDCG of the ranking induced by ``predicted`` (stable, descending) with gain 2^rel - 1."""
    true = np.asarray(true_ratings, dtype=np.float64)
    order = np.argsort(-np.asarray(predicted, dtype=np.float64), kind="stable")
    ideal = dcg_at_k(np.sort(true)[::-1], k)
    if ideal == 0.0:
        return 1.0
    return dcg_at_k(true[order], k) / ideal


def rating_metrics(users: Sequence, true, pred, k: int = 10):
    """(mse, mae, mean per-user ndcg or None, users counted) on predictions clamped to [1, 5]."""
    true = np.asarray(true, dtype=np.float64)
    pred = np.clip(np.asarray(pred, dtype=np.float64), 1.0, 5.0)
    if true.size == 0:
        raise ValueError("empty test set")
    err = pred - true
    groups: dict = defaultdict(list)
    for row, u in enumerate(users):
        groups[u].append(row)
    scores = [ndcg_at_k(true[rows], pred[rows], k) for _, rows in sorted(groups.items()) if len(rows) >= 2]
    ndcg = float(np.mean(scores)) if scores else None
    return float(np.mean(err ** 2)), float(np.mean(np.abs(err))), ndcg, len(scores)


def evaluate(bundle: TrainedModel, test: Sequence[RawReview]) -> MetricsReport:
    if len(test) == 0:
        raise ValueError("empty test set")
    ex = bundle.examples(test)
    pred = bundle.predict_examples(ex)
    mse, mae, ndcg, n_users = rating_metrics([r.user_id for r in test], ex.rating, pred)
    cfg = bundle.config
    return MetricsReport(mse, mae, ndcg, len(test), cfg.variant, cfg.seed, config_dict(cfg),
                         n_users, ex.n_truncated)


def write_predictions(path, bundle: TrainedModel, test: Sequence[RawReview]) -> None:
    pred = np.clip(bundle.predict(test), 1.0, 5.0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "item", "true_rating", "predicted_rating", "timestamp"])
        for r, p in zip(test, pred):
            w.writerow([r.user_id, r.item_id, r.rating, f"{p:.6f}", r.timestamp])


# --------------------------------------------------------------------------- #
# baselines

class BiasBaseline:
    """Global mean plus ridge-regularised user and item biases (alternating least squares).

    ``reg`` is chosen from ``grid`` on a held-out share of the training data
    unless given explicitly.
    """

    def __init__(self, reg: float | None = None, n_iter: int = 25,
                 grid=(0.5, 1.0, 2.0, 5.0, 10.0, 25.0), seed: int = 0):
        self.reg, self.n_iter, self.grid, self.seed = reg, n_iter, grid, seed

    def _fit(self, reviews, reg):
        mu = float(np.mean([r.rating for r in reviews]))
        bu: dict[str, float] = defaultdict(float)
        bi: dict[str, float] = defaultdict(float)
        by_user, by_item = defaultdict(list), defaultdict(list)
        for r in reviews:
            by_user[r.user_id].append(r)
            by_item[r.item_id].append(r)
        for _ in range(self.n_iter):
            for i, rs in by_item.items():
                bi[i] = sum(r.rating - mu - bu[r.user_id] for r in rs) / (reg + len(rs))
            for u, rs in by_user.items():
                bu[u] = sum(r.rating - mu - bi[r.item_id] for r in rs) / (reg + len(rs))
        return mu, dict(bu), dict(bi)

    def fit(self, reviews: Sequence[RawReview]) -> "BiasBaseline":
        reviews = list(reviews)
        reg = self.reg
        if reg is None:
            perm = rng_for(self.seed, "baseline").permutation(len(reviews))
            n_val = max(1, len(reviews) // 10)
            val = [reviews[k] for k in perm[:n_val]]
            fit = [reviews[k] for k in perm[n_val:]]
            best = None
            for cand in self.grid:
                self.mu, self.bu, self.bi = self._fit(fit, cand)
                err = np.mean((self.predict(val) - np.array([r.rating for r in val])) ** 2)
                if best is None or err < best[0]:
                    best = (err, cand)
            reg = best[1]
        self.chosen_reg = reg
        self.mu, self.bu, self.bi = self._fit(reviews, reg)
        return self

    def predict(self, reviews: Sequence[RawReview]) -> np.ndarray:
        return np.array([self.mu + self.bu.get(r.user_id, 0.0) + self.bi.get(r.item_id, 0.0)
                         for r in reviews])

    def evaluate(self, test: Sequence[RawReview], seed: int = 0) -> MetricsReport:
        mse, mae, ndcg, n_users = rating_metrics([r.user_id for r in test],
                                                 [r.rating for r in test], self.predict(test))
        return MetricsReport(mse, mae, ndcg, len(test), "bias_baseline", seed,
                             {"reg": self.chosen_reg}, n_users)


# --------------------------------------------------------------------------- #
# experiments

def train_on(data: Dataset, config: TrainConfig, log_path=None) -> TrainedModel:
    return train(data.train, data.train_aspects, data.vocab, config, data.users, data.items, log_path)


def run_ablation(variant: str, data: Dataset, config: TrainConfig, log_path=None) -> MetricsReport:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    bundle = train_on(data, config.replace(variant=variant), log_path)
    return evaluate(bundle, data.test)


def sweep(param: str, values: Sequence, data: Dataset, config: TrainConfig, out_dir=None):
    """Train one model per value of ``param`` (K or N). Writes ``sweep.csv`` and ``sweep.png``."""
    if param not in ("K", "N"):
        raise ValueError("sweep param must be 'K' or 'N'")
    if not values:
        raise ValueError("no sweep values")
    rows = []
    for v in values:
        rep = evaluate(train_on(data, config.replace(**{param: int(v)})), data.test)
        rows.append({param: int(v), "mse": rep.mse, "mae": rep.mae, "ndcg_at_10": rep.ndcg_at_10})
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=[param, "mse", "mae", "ndcg_at_10"])
            w.writeheader()
            w.writerows(rows)
        plot_sweep(rows, param, out_dir / "sweep.png")
    return rows


def plot_sweep(rows, param: str, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot([r[param] for r in rows], [r["mse"] for r in rows], marker="o")
    ax.set_xlabel(param)
    ax.set_ylabel("test MSE")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
