"""End-to-end training with an MSE objective, checkpointing and gradient checks."""

from __future__ import annotations

import copy
import json
import logging
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import TrainConfig, config_dict
from .corpus import AspectVocabulary, RawReview
from .graph import AspectGraph, build_graph
from .model import DTYPES, Examples, Featurizer, LSAModel, make_batch

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


class TrainingDivergence(RuntimeError):
    pass


def seed_stream(seed: int, name: str) -> np.random.SeedSequence:
    """Independent, reproducible stream for a named purpose under one run seed."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(name.encode()),))


def rng_for(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(seed_stream(seed, name))


def torch_seed_for(seed: int, name: str) -> int:
    return int(seed_stream(seed, name).generate_state(1, dtype=np.uint32)[0])


def mse_loss(predictions, targets):
    """Mean squared error; accepts sequences or tensors (tensors keep the graph)."""
    if isinstance(predictions, torch.Tensor):
        if predictions.numel() == 0 or predictions.shape != targets.shape:
            raise ValueError("mse_loss needs equal, non-empty inputs")
        return ((predictions - targets) ** 2).mean()
    p, t = np.asarray(predictions, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    if p.size == 0 or p.shape != t.shape:
        raise ValueError("mse_loss needs equal, non-empty inputs")
    return float(np.mean((p - t) ** 2))


@dataclass
class TrainedModel:
    """A fitted model together with the graph it reads sequences from."""

    model: LSAModel
    graph: AspectGraph
    vocab: AspectVocabulary
    config: TrainConfig
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.featurizer = Featurizer(self.graph, self.config)

    def examples(self, reviews: Sequence[RawReview]) -> Examples:
        return self.featurizer.examples(reviews)

    @torch.no_grad()
    def predict_examples(self, ex: Examples, batch_size: int = 512) -> np.ndarray:
        self.model.eval()
        rows = self.featurizer.long_rows(ex, self.model.snapshot())
        out = []
        for start in range(0, len(ex), batch_size):
            idx = np.arange(start, min(start + batch_size, len(ex)))
            out.append(self.model(make_batch(ex, idx, rows)).to(torch.float64).numpy())
        return np.concatenate(out) if out else np.zeros(0)

    def predict(self, reviews: Sequence[RawReview]) -> np.ndarray:
        """Raw (unclamped) predicted ratings."""
        return self.predict_examples(self.examples(reviews))

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self.model, directory / "checkpoint.pt")
        self.graph.save(directory / "graph.json")
        (directory / "vocab.json").write_text(json.dumps(self.vocab.to_json()))

    @classmethod
    def load(cls, directory) -> "TrainedModel":
        directory = Path(directory)
        model = load_checkpoint(directory / "checkpoint.pt")
        graph = AspectGraph.load(directory / "graph.json")
        vocab = AspectVocabulary.from_json(json.loads((directory / "vocab.json").read_text()))
        return cls(model, graph, vocab, model.config)


def save_checkpoint(model: LSAModel, path) -> None:
    state = model.state_dict()
    torch.save({
        "format": "lsa-checkpoint",
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config_dict(model.config),
        "sizes": [model.n_users, model.n_items, model.n_aspects],
        "shapes": {k: list(v.shape) for k, v in state.items()},
        "tensors": {k: v.detach().clone() for k, v in state.items()},
    }, path)


def load_checkpoint(path) -> LSAModel:
    blob = torch.load(path, weights_only=True)
    if blob.get("format") != "lsa-checkpoint":
        raise ValueError(f"{path}: not an LSA checkpoint")
    if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {blob.get('format_version')}")
    config = TrainConfig(**blob["config"])
    model = LSAModel(*blob["sizes"], config).to(DTYPES[config.dtype])
    for name, shape in blob["shapes"].items():
        if list(blob["tensors"][name].shape) != shape:
            raise ValueError(f"{path}: tensor {name} has shape {list(blob['tensors'][name].shape)}, header says {shape}")
    model.load_state_dict(blob["tensors"])
    return model


def split_validation(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(fit, val) index arrays; val is the last ``fraction`` of a seeded shuffle."""
    perm = rng_for(seed, "validation").permutation(n)
    n_val = int(round(n * fraction)) if n > 1 else 0
    n_val = min(n_val, n - 1)
    return np.sort(perm[: n - n_val]), np.sort(perm[n - n_val:])


def first_nonfinite(model: torch.nn.Module) -> str | None:
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            return name
        if p.grad is not None and not torch.isfinite(p.grad).all():
            return name + ".grad"
    return None


def build_model(graph: AspectGraph, config: TrainConfig) -> LSAModel:
    torch.manual_seed(torch_seed_for(config.seed, "init"))
    return LSAModel(len(graph.users), len(graph.items), graph.n_aspects, config).to(DTYPES[config.dtype])


def train(
    reviews: Sequence[RawReview],
    aspect_ids: Sequence[Sequence[int]],
    vocab: AspectVocabulary,
    config: TrainConfig,
    users: Sequence[str] | None = None,
    items: Sequence[str] | None = None,
    log_path=None,
) -> TrainedModel:
    """Fit a model on ``reviews`` (with per-review aspect ids) and return the best-validation state.

    A ``val_fraction`` share of ``reviews`` is held out for early stopping; the
    graph is built from the remaining fit portion only.
    """
    if len(reviews) == 0:
        raise ValueError("empty training set")
    if users is None:
        users = sorted({r.user_id for r in reviews})
    if items is None:
        items = sorted({r.item_id for r in reviews})
    fit_idx, val_idx = split_validation(len(reviews), config.val_fraction, config.seed)
    fit = [reviews[k] for k in fit_idx]
    val = [reviews[k] for k in val_idx]
    graph = build_graph(fit, [aspect_ids[k] for k in fit_idx], vocab, users, items)
    model = build_model(graph, config)
    dtype = DTYPES[config.dtype]
    bundle = TrainedModel(model, graph, vocab, config)
    fit_ex = bundle.featurizer.examples(fit, [aspect_ids[k] for k in fit_idx])
    val_ex = bundle.examples(val) if val else None
    with torch.no_grad():
        model.fm.global_bias.fill_(float(fit_ex.rating.mean()))

    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8,
                           weight_decay=config.weight_decay)
    shuffle_rng = rng_for(config.seed, "shuffle")
    targets_all = torch.as_tensor(fit_ex.rating, dtype=dtype)
    best_val, best_state, stale = float("inf"), copy.deepcopy(model.state_dict()), 0
    history = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    t0 = time.perf_counter()
    try:
        for epoch in range(1, config.max_epochs + 1):
            model.train()
            rows = bundle.featurizer.long_rows(fit_ex, model.snapshot())
            order = shuffle_rng.permutation(len(fit_ex))
            total = 0.0
            for start in range(0, len(order), config.batch_size):
                idx = order[start: start + config.batch_size]
                batch = make_batch(fit_ex, idx, rows)
                loss = mse_loss(model(batch), targets_all[idx])
                opt.zero_grad()
                loss.backward()
                if not torch.isfinite(loss):
                    raise TrainingDivergence(
                        f"epoch {epoch}: loss is {loss.item()}; first non-finite tensor: {first_nonfinite(model)}")
                opt.step()
                total += loss.item() * len(idx)
            train_mse = total / len(order)
            if val_ex is not None:
                val_mse = evaluate_mse(bundle, val_ex)
            else:
                val_mse = train_mse
            rec = {"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse,
                   "lr": config.learning_rate, "wall_time": round(time.perf_counter() - t0, 3)}
            history.append(rec)
            log.info("epoch %d train_mse %.4f val_mse %.4f", epoch, train_mse, val_mse)
            if log_fh:
                log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            if val_mse < best_val:
                best_val, best_state, stale = val_mse, copy.deepcopy(model.state_dict()), 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    finally:
        if log_fh:
            log_fh.close()
    model.load_state_dict(best_state)
    bundle.history = history
    return bundle


def evaluate_mse(bundle: TrainedModel, ex: Examples) -> float:
    pred = np.clip(bundle.predict_examples(ex), 1.0, 5.0)
    return float(np.mean((pred - ex.rating) ** 2))


# --------------------------------------------------------------------------- #
# gradient verification

@dataclass
class GradCheckResult:
    max_rel_error: float
    per_tensor: dict[str, float]
    n_coords: int


def gradient_check(model: LSAModel, batch: dict[str, torch.Tensor], targets: torch.Tensor,
                   steps=(1e-5, 1e-4, 1e-6), coords_per_tensor: int = 20, seed: int = 0,
                   tol: float = 1e-3) -> GradCheckResult:
    """Compare autograd gradients of the batch MSE against central differences.

    Every parameter tensor is probed at ``coords_per_tensor`` sampled entries (all
    entries when smaller). Relative error uses max(|analytic|, |numeric|, 1e-8).
    A coordinate is retried at the later ``steps`` while its error exceeds
    ``tol``: large steps may straddle a ReLU kink, tiny ones drown in roundoff,
    while a wrong analytic gradient disagrees at every step size.
    """
    if next(model.parameters()).dtype != torch.float64:
        raise ValueError("gradient_check needs a float64 model")
    model.eval()
    model.zero_grad()
    mse_loss(model(batch), targets).backward()
    analytic = {n: (p.grad.clone() if p.grad is not None else torch.zeros_like(p))
                for n, p in model.named_parameters()}
    rng = np.random.default_rng(seed)
    per_tensor, n_coords = {}, 0
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.view(-1)
            n = flat.numel()
            coords = np.arange(n) if n <= coords_per_tensor else rng.choice(n, coords_per_tensor, replace=False)
            worst = 0.0
            for c in coords:
                orig = flat[c].item()
                ana = analytic[name].view(-1)[c].item()
                err = float("inf")
                for eps in steps:
                    flat[c] = orig + eps
                    f_plus = mse_loss(model(batch), targets).item()
                    flat[c] = orig - eps
                    f_minus = mse_loss(model(batch), targets).item()
                    flat[c] = orig
                    num = (f_plus - f_minus) / (2 * eps)
                    err = min(err, abs(ana - num) / max(abs(ana), abs(num), 1e-8))
                    if err <= tol:
                        break
                worst = max(worst, err)
                n_coords += 1
            per_tensor[name] = worst
    return GradCheckResult(max(per_tensor.values()), per_tensor, n_coords)
