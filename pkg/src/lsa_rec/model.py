"""The full long/short-term aspect interest model and its input featurizer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .config import TrainConfig
from .corpus import RawReview
from .encoders import (N_TIME_BUCKETS, EmbeddingTables, GatedFusion, InterestEncoder,
                       canonical_set_order)
from .graph import AspectGraph, NodeId, neighbor_aspects
from .predictor import AspectAggregator, FactorizationMachine
from .selection import ScoringSnapshot, important_k_rows, recent_n_rows, time_bucket

FUSION_MODE = {"full": "gate", "no_aspect_attention": "gate", "no_fusion": "average",
               "no_short": "long", "no_long": "short"}

DTYPES = {"float32": torch.float32, "float64": torch.float64}


class LSAModel(nn.Module):
    def __init__(self, n_users: int, n_items: int, n_aspects: int, config: TrainConfig):
        super().__init__()
        d = config.d
        self.config = config
        self.n_users, self.n_items, self.n_aspects = n_users, n_items, n_aspects
        self.tables = EmbeddingTables(n_users, n_items, n_aspects, d)
        self.user_long = InterestEncoder(d, config.L, config.H)
        self.user_short = InterestEncoder(d, config.L, config.H, max_len=config.N, time_aware=True)
        self.item_long = InterestEncoder(d, config.L, config.H)
        self.item_short = InterestEncoder(d, config.L, config.H, max_len=config.N, time_aware=True)
        self.user_fusion = GatedFusion(d)
        self.item_fusion = GatedFusion(d)
        self.aggregator = AspectAggregator(d)
        self.fm = FactorizationMachine(n_users, n_items, 5 * d, config.k_fm, config.lam)
        # Important-K projections; selection is discrete so these never receive gradient
        self.user_proj = nn.Parameter(torch.eye(d))
        self.item_proj = nn.Parameter(torch.eye(d))

    @property
    def variant(self) -> str:
        return self.config.variant

    def unused_parameters(self) -> set[str]:
        """Parameter names that the current variant's wiring never touches."""
        names = {"user_proj", "item_proj"}
        all_names = [n for n, _ in self.named_parameters()]

        def under(prefix):
            return {n for n in all_names if n.startswith(prefix)}

        if self.variant in ("no_short", "no_long"):
            branch = "short" if self.variant == "no_short" else "long"
            names |= under(f"user_{branch}.") | under(f"item_{branch}.")
            dropped = "W_s" if branch == "short" else "W_l"
            for side in ("user", "item"):
                names |= under(f"{side}_fusion.gate.") | under(f"{side}_fusion.{dropped}.")
        elif self.variant == "no_fusion":
            names |= under("user_fusion.gate.") | under("item_fusion.gate.")
        elif self.variant == "no_aspect_attention":
            # mean pooling never reads the fused context, so its layer is idle too
            names |= under("aggregator.W_q.") | under("aggregator.W_K.") | under("aggregator.fusion.")
        return names

    def snapshot(self) -> ScoringSnapshot:
        def np64(t):
            return t.detach().to(torch.float64).cpu().numpy().copy()
        return ScoringSnapshot(np64(self.tables.user_pref), np64(self.tables.item_pref),
                               np64(self.tables.aspect_emb), np64(self.user_proj), np64(self.item_proj))

    def side(self, kind: str, ids, long_ids, long_mask, short_ids, short_mask, short_bucket):
        long_enc = self.user_long if kind == "user" else self.item_long
        short_enc = self.user_short if kind == "user" else self.item_short
        fusion = self.user_fusion if kind == "user" else self.item_fusion
        mode = FUSION_MODE[self.variant]
        ids = ids.clamp(min=0)
        anchor = self.tables.node(kind)[ids]
        aspects = self.tables.aspect_emb
        e_long = e_short = None
        if mode != "short":
            lid, lmask = canonical_set_order(long_ids, long_mask)
            e_long = long_enc(anchor, aspects[lid], lmask)
        if mode != "long":
            e_short = short_enc(anchor, aspects[short_ids], short_mask, short_bucket)
        fused = fusion(e_long, e_short, mode)
        return fusion.final(self.tables.pref(kind)[ids], fused)

    def forward(self, batch: dict[str, torch.Tensor]) -> torch.Tensor:
        p_u = self.side("user", batch["user"], batch["u_long"], batch["u_long_mask"],
                        batch["u_short"], batch["u_short_mask"], batch["u_bucket"])
        q_i = self.side("item", batch["item"], batch["i_long"], batch["i_long_mask"],
                        batch["i_short"], batch["i_short_mask"], batch["i_bucket"])
        f_ui = self.aggregator.context(p_u, q_i)
        mode = "mean" if self.variant == "no_aspect_attention" else "attention"
        h_a = self.aggregator(f_ui, self.tables.aspect_emb[batch["cand"]], batch["cand_mask"], mode)
        x = self.fm.features(p_u, q_i, h_a)
        return self.fm(x, batch["user"], batch["item"])


@dataclass
class Examples:
    """Static per-review inputs; long-term rows are recomputed per epoch.

    ``own`` holds, for reviews that are part of the graph, the aspect ids that
    review contributed; they are discounted when the review itself is scored.
    """

    user: np.ndarray
    item: np.ndarray
    ts: np.ndarray
    rating: np.ndarray
    u_short: np.ndarray
    u_short_mask: np.ndarray
    u_bucket: np.ndarray
    i_short: np.ndarray
    i_short_mask: np.ndarray
    i_bucket: np.ndarray
    cand: np.ndarray
    cand_mask: np.ndarray
    n_truncated: int = 0
    own: list | None = None

    def __len__(self):
        return len(self.user)


class Featurizer:
    """Turns reviews into model inputs using a fixed graph (the training graph)."""

    def __init__(self, graph: AspectGraph, config: TrainConfig):
        self.graph, self.config = graph, config
        self.cand_width = max(1, min(config.max_union, graph.n_aspects))

    def node_index(self, reviews: Sequence[RawReview]):
        users = np.array([self.graph.user_index.get(r.user_id, -1) for r in reviews], dtype=np.int64)
        items = np.array([self.graph.item_index.get(r.item_id, -1) for r in reviews], dtype=np.int64)
        return users, items

    def _neighbors(self, kind: str, k: int, own) -> set[int]:
        if k < 0:
            return set()
        node = NodeId(kind, int(k))
        out = neighbor_aspects(self.graph, node)
        w = self.graph.node_aspect_weight
        return {a for a in out if w.get((node, a), 0) > (a in own)}

    def examples(self, reviews: Sequence[RawReview], own_aspects=None) -> Examples:
        """Featurize ``reviews``; pass ``own_aspects`` when the reviews are in the graph."""
        cfg, g = self.config, self.graph
        users, items = self.node_index(reviews)
        ts = np.array([r.timestamp for r in reviews], dtype=np.int64)
        ratings = np.array([r.rating for r in reviews], dtype=np.float64)
        u_ids, u_mask, u_el = recent_n_rows(g, "user", users, ts, cfg.N, cfg.T)
        i_ids, i_mask, i_el = recent_n_rows(g, "item", items, ts, cfg.N, cfg.T)
        own = None if own_aspects is None else [tuple(sorted(set(a))) for a in own_aspects]
        cand = np.zeros((len(reviews), self.cand_width), dtype=np.int64)
        cmask = np.zeros_like(cand, dtype=bool)
        truncated = 0
        for row, (u, i) in enumerate(zip(users, items)):
            mine = set(own[row]) if own is not None else set()
            union = sorted(self._neighbors("user", u, mine) | self._neighbors("item", i, mine))
            truncated += len(union) > self.cand_width
            union = union[: self.cand_width]
            cand[row, : len(union)] = union
            cmask[row, : len(union)] = True
        return Examples(users, items, ts, ratings, u_ids, u_mask, time_bucket(u_el, N_TIME_BUCKETS),
                        i_ids, i_mask, time_bucket(i_el, N_TIME_BUCKETS), cand, cmask, int(truncated), own)

    def long_rows(self, ex: Examples, snapshot: ScoringSnapshot):
        """Per-example Important-K rows ``((u_ids, u_mask), (i_ids, i_mask))``."""
        cfg = self.config
        u = important_k_rows(self.graph, snapshot, "user", ex.user, cfg.K, ex.own, cfg.full_vocabulary, cfg.edge_scale)
        i = important_k_rows(self.graph, snapshot, "item", ex.item, cfg.K, ex.own, cfg.full_vocabulary, cfg.edge_scale)
        return u, i


def make_batch(ex: Examples, idx: np.ndarray, long_rows) -> dict[str, torch.Tensor]:
    (u_ids, u_mask), (i_ids, i_mask) = long_rows

    def t(a, dtype=torch.long):
        return torch.as_tensor(np.ascontiguousarray(a), dtype=dtype)

    return {
        "user": t(ex.user[idx]), "item": t(ex.item[idx]),
        "u_long": t(u_ids[idx]), "u_long_mask": t(u_mask[idx], torch.bool),
        "i_long": t(i_ids[idx]), "i_long_mask": t(i_mask[idx], torch.bool),
        "u_short": t(ex.u_short[idx]), "u_short_mask": t(ex.u_short_mask[idx], torch.bool),
        "u_bucket": t(ex.u_bucket[idx]),
        "i_short": t(ex.i_short[idx]), "i_short_mask": t(ex.i_short_mask[idx], torch.bool),
        "i_bucket": t(ex.i_bucket[idx]),
        "cand": t(ex.cand[idx]), "cand_mask": t(ex.cand_mask[idx], torch.bool),
    }
