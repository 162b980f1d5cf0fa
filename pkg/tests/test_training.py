import math

import numpy as np
import pytest
import torch

from lsa_rec import training
from lsa_rec.config import VARIANTS, TrainConfig
from lsa_rec.evaluation import train_on
from lsa_rec.model import make_batch
from lsa_rec.training import (TrainedModel, TrainingDivergence, build_model, gradient_check, load_checkpoint,
                              mse_loss, save_checkpoint, split_validation)

TINY = TrainConfig(K=3, N=2, d=4, L=1, H=2, k_fm=3, batch_size=8, max_epochs=2, seed=0)


def test_mse_loss_examples():
    assert mse_loss([3.0], [5.0]) == 4.0
    assert mse_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse_loss([1.0, 4.0], [2.0, 2.0]) == 2.5
    t = mse_loss(torch.tensor([1.0, 3.0]), torch.tensor([2.0, 3.0]))
    assert t.item() == 0.5
    with pytest.raises(ValueError):
        mse_loss([], [])
    with pytest.raises(ValueError):
        mse_loss([1.0], [1.0, 2.0])


def test_validation_split_is_disjoint_and_seeded():
    fit, val = split_validation(50, 0.1, 7)
    assert len(val) == 5 and not set(fit) & set(val) and len(fit) + len(val) == 50
    again = split_validation(50, 0.1, 7)
    assert np.array_equal(fit, again[0])
    assert len(split_validation(1, 0.5, 0)[1]) == 0


def test_zero_learning_rate_leaves_parameters_unchanged(tiny_data):
    cfg = TINY.replace(learning_rate=0.0)
    bundle = train_on(tiny_data, cfg)
    fresh = build_model(bundle.graph, cfg)
    for (name, a), (_, b) in zip(bundle.model.named_parameters(), fresh.named_parameters()):
        if name != "fm.global_bias":  # initialised to the training mean before the first step
            assert torch.equal(a, b), name


def test_same_seed_gives_identical_trace(tiny_data):
    runs = [train_on(tiny_data, TINY.replace(max_epochs=3)) for _ in range(2)]
    strip = [[{k: v for k, v in rec.items() if k != "wall_time"} for rec in r.history] for r in runs]
    assert strip[0] == strip[1]
    for a, b in zip(runs[0].model.parameters(), runs[1].model.parameters()):
        assert torch.equal(a, b)


def test_different_seed_changes_initialisation(tiny_data):
    graph = train_on(tiny_data, TINY.replace(max_epochs=1)).graph
    a, b = build_model(graph, TINY), build_model(graph, TINY.replace(seed=1))
    assert not torch.equal(a.tables.aspect_emb, b.tables.aspect_emb)


def test_training_loss_decreases_early(tiny_data):
    reviews = tiny_data.train[:50]
    aspects = tiny_data.train_aspects[:50]
    cfg = TINY.replace(max_epochs=3, patience=10, learning_rate=1e-3, batch_size=10)
    bundle = training.train(reviews, aspects, tiny_data.vocab, cfg)
    losses = [rec["train_mse"] for rec in bundle.history]
    assert len(losses) == 3
    assert losses[0] > losses[1] > losses[2]


def _tiny_batch(data, variant="full"):
    cfg = TINY.replace(dtype="float64", variant=variant)
    bundle = train_on(data, cfg.replace(max_epochs=1))
    model = build_model(bundle.graph, cfg)
    with torch.no_grad():  # move every parameter off its initial special values
        g = torch.Generator().manual_seed(0)
        for p in model.parameters():
            p.add_(0.1 * torch.randn(p.shape, generator=g, dtype=p.dtype))
    b = TrainedModel(model, bundle.graph, bundle.vocab, cfg)
    ex = b.featurizer.examples(data.train[:12], data.train_aspects[:12])
    rows = b.featurizer.long_rows(ex, model.snapshot())
    batch = make_batch(ex, np.arange(len(ex)), rows)
    return model, batch, torch.as_tensor(ex.rating)


def test_gradient_check_tiny(tiny_data):
    model, batch, y = _tiny_batch(tiny_data)
    res = gradient_check(model, batch, y, coords_per_tensor=10)
    assert res.max_rel_error <= 1e-3, sorted(res.per_tensor.items(), key=lambda kv: -kv[1])[:3]


def test_gradient_check_catches_a_wrong_gradient(tiny_data):
    model, batch, y = _tiny_batch(tiny_data)
    model.aggregator.W_V.weight.register_hook(lambda g: 1.05 * g)
    res = gradient_check(model, batch, y, coords_per_tensor=10)
    assert res.per_tensor["aggregator.W_V.weight"] > 0.04
    assert res.per_tensor["fm.w"] <= 1e-3


def test_gradient_check_needs_float64(tiny_data):
    cfg = TINY
    model = build_model(train_on(tiny_data, cfg.replace(max_epochs=1)).graph, cfg)
    with pytest.raises(ValueError):
        gradient_check(model, {}, torch.zeros(1))


@pytest.mark.parametrize("variant", VARIANTS)
def test_parameter_audit(tiny_data, variant):
    """Parameters a variant disconnects get no gradient; the rest are all reached."""
    model, batch, y = _tiny_batch(tiny_data, variant)
    model.zero_grad()
    mse_loss(model(batch), y).backward()
    unused = model.unused_parameters()
    for name, p in model.named_parameters():
        touched = p.grad is not None and bool(p.grad.abs().sum() > 0)
        if name in unused:
            assert not touched, name
        elif not name.endswith("_bias"):  # per-node bias rows may be absent from one batch
            assert touched, name


def test_unseen_bias_rows_get_zero_gradient(tiny_data):
    model, batch, y = _tiny_batch(tiny_data)
    model.zero_grad()
    mse_loss(model(batch), y).backward()
    seen = set(batch["user"].tolist())
    for u in range(model.n_users):
        if u not in seen:
            assert model.fm.user_bias.grad[u] == 0


def test_checkpoint_round_trip_is_bitwise(tiny_data, tmp_path):
    bundle = train_on(tiny_data, TINY)
    save_checkpoint(bundle.model, tmp_path / "c.pt")
    again = load_checkpoint(tmp_path / "c.pt")
    for (n, a), (_, b) in zip(bundle.model.state_dict().items(), again.state_dict().items()):
        assert torch.equal(a, b), n
    bundle.save(tmp_path / "m")
    loaded = TrainedModel.load(tmp_path / "m")
    assert np.array_equal(loaded.predict(tiny_data.test), bundle.predict(tiny_data.test))


def test_checkpoint_rejects_foreign_files(tmp_path):
    torch.save({"format": "other"}, tmp_path / "x.pt")
    with pytest.raises(ValueError, match="not an LSA checkpoint"):
        load_checkpoint(tmp_path / "x.pt")


def test_graph_holds_no_test_or_validation_reviews(tiny_data):
    bundle = train_on(tiny_data, TINY)
    in_graph = {(bundle.graph.users[u], bundle.graph.items[i], t)
                for (u, i), entries in bundle.graph.user_item_rating.items() for _, t in entries}
    held = {(r.user_id, r.item_id, r.timestamp) for r in tiny_data.test}
    assert not in_graph & held
    fit_idx, val_idx = split_validation(len(tiny_data.train), TINY.val_fraction, TINY.seed)
    val = {(tiny_data.train[k].user_id, tiny_data.train[k].item_id, tiny_data.train[k].timestamp) for k in val_idx}
    assert not in_graph & val
    assert len(in_graph) == len(fit_idx)


def test_divergence_is_reported(tiny_data, monkeypatch):
    real = training.mse_loss
    monkeypatch.setattr(training, "mse_loss", lambda p, t: real(p, t) * math.inf)
    with pytest.raises(TrainingDivergence, match="epoch 1"):
        train_on(tiny_data, TINY)


def test_empty_training_set_is_rejected(tiny_data):
    with pytest.raises(ValueError):
        training.train([], [], tiny_data.vocab, TINY)


def test_history_records_epochs(tiny_data, tmp_path):
    bundle = train_on(tiny_data, TINY.replace(max_epochs=2, patience=5), tmp_path / "log.jsonl")
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == len(bundle.history) == 2
    assert [r["epoch"] for r in bundle.history] == [1, 2]
