"""Interest-aware aspect aggregation and factorization-machine scoring."""

from __future__ import annotations

from typing import Iterable

import torch
from torch import nn
import torch.nn.functional as F


def candidate_aspects(user_aspects: Iterable[int], item_aspects: Iterable[int],
                      max_union: int | None = None) -> list[int]:
    """Union of both aspect sets, ascending by id, truncated to ``max_union``."""
    union = sorted(set(user_aspects) | set(item_aspects))
    return union if max_union is None else union[:max_union]


class AspectAggregator(nn.Module):
    """Fuses (p_u, q_i) into a context vector and attends over candidate aspects."""

    def __init__(self, d: int):
        super().__init__()
        self.fusion = nn.Linear(4 * d, d)  # W_f, b_f
        self.W_q = nn.Linear(d, d, bias=False)
        self.W_K = nn.Linear(d, d, bias=False)
        self.W_V = nn.Linear(d, d, bias=False)

    def context(self, p_u, q_i):
        return F.relu(self.fusion(torch.cat([p_u, q_i], dim=-1)))

    def weights(self, f_ui, aspect_emb, mask):
        """Softmax over candidates; rows without any candidate get all-zero weights."""
        q = self.W_q(f_ui)
        k = self.W_K(aspect_emb)
        logits = torch.einsum("bd,bcd->bc", q, k)
        has_any = mask.any(dim=-1, keepdim=True)
        logits = logits.masked_fill(~mask, float("-inf"))
        logits = torch.where(has_any, logits, torch.zeros_like(logits))
        return torch.softmax(logits, dim=-1) * mask.to(logits.dtype)

    def forward(self, f_ui, aspect_emb, mask, mode: str = "attention"):
        """f_ui (B, d), aspect_emb (B, C, d), mask (B, C) -> h_a (B, d)."""
        v = self.W_V(aspect_emb)
        if mode == "mean":
            m = mask.to(v.dtype)
            return (m.unsqueeze(-1) * v).sum(1) / m.sum(1, keepdim=True).clamp(min=1.0)
        w = self.weights(f_ui, aspect_emb, mask)
        return torch.einsum("bc,bcd->bd", w, v)


def fm_pairwise(x: torch.Tensor, V: torch.Tensor) -> torch.Tensor:
    """sum_{i<j} <V_i, V_j> x_i x_j in O(d' k) per row."""
    xv = x @ V
    return 0.5 * (xv.pow(2) - (x.pow(2) @ V.pow(2))).sum(-1)


class FactorizationMachine(nn.Module):
    def __init__(self, n_users: int, n_items: int, n_features: int, k: int = 8, aspect_scale: float = 1.0):
        super().__init__()
        self.global_bias = nn.Parameter(torch.zeros(()))
        self.user_bias = nn.Parameter(torch.zeros(max(n_users, 1)))
        self.item_bias = nn.Parameter(torch.zeros(max(n_items, 1)))
        self.w = nn.Parameter(torch.zeros(n_features))
        self.V = nn.Parameter(torch.randn(n_features, k) * 0.01)
        self.aspect_scale = aspect_scale

    def bias(self, table: torch.Tensor, ids: torch.Tensor) -> torch.Tensor:
        known = (ids >= 0) & (ids < table.shape[0])
        return torch.where(known, table[ids.clamp(0, table.shape[0] - 1)], torch.zeros((), dtype=table.dtype))

    def features(self, p_u, q_i, h_a):
        return torch.cat([p_u, q_i, self.aspect_scale * h_a], dim=-1)

    def forward(self, x, users, items):
        return (self.global_bias + self.bias(self.user_bias, users) + self.bias(self.item_bias, items)
                + x @ self.w + fm_pairwise(x, self.V))


# --------------------------------------------------------------------------- #
# functional forms

def context_fusion(p_u, q_i, agg: AspectAggregator):
    return agg.context(p_u, q_i)


def aggregate_aspects(f_ui, aspects: list[int], aspect_table: torch.Tensor, agg: AspectAggregator):
    """Single-pair aggregation; an empty aspect list yields the zero vector."""
    if not aspects:
        return torch.zeros_like(f_ui)
    emb = aspect_table[torch.tensor(aspects, dtype=torch.long)].unsqueeze(0)
    mask = torch.ones(1, len(aspects), dtype=torch.bool)
    return agg(f_ui.unsqueeze(0), emb, mask)[0]


def fm_predict(p_u, q_i, h_a, user: int | None, item: int | None, fm: FactorizationMachine):
    """Predicted rating for one pair; unknown user/item ids contribute zero bias."""
    x = fm.features(p_u, q_i, h_a).unsqueeze(0)
    u = torch.tensor([-1 if user is None else user])
    i = torch.tensor([-1 if item is None else item])
    return fm(x, u, i)[0]
