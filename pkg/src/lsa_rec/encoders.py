"""Interest encoders: a Transformer whose self-attention is GATv2 scoring,
plus the gate-residual fusion of long- and short-term interest vectors."""

from __future__ import annotations

import math

import torch
from torch import nn
import torch.nn.functional as F

from .selection import InterestSequence, time_bucket

N_TIME_BUCKETS = 16


def uniform_init_(t: torch.Tensor, d: int) -> torch.Tensor:
    bound = 1.0 / math.sqrt(d)
    with torch.no_grad():
        return t.uniform_(-bound, bound)


class EmbeddingTables(nn.Module):
    """Node embeddings used as sequence tokens plus rating-preference tables."""

    def __init__(self, n_users: int, n_items: int, n_aspects: int, d: int):
        super().__init__()
        self.d = d
        self.user_emb = nn.Parameter(torch.empty(max(n_users, 1), d))
        self.item_emb = nn.Parameter(torch.empty(max(n_items, 1), d))
        self.aspect_emb = nn.Parameter(torch.empty(max(n_aspects, 1), d))
        self.user_pref = nn.Parameter(torch.empty(max(n_users, 1), d))
        self.item_pref = nn.Parameter(torch.empty(max(n_items, 1), d))
        for p in self.parameters():
            uniform_init_(p, d)

    def node(self, kind: str) -> nn.Parameter:
        return self.user_emb if kind == "user" else self.item_emb

    def pref(self, kind: str) -> nn.Parameter:
        return self.user_pref if kind == "user" else self.item_pref


class GATv2Attention(nn.Module):
    """Multi-head attention with GATv2 scores.

    Per head, ``score(i, j) = a . LeakyReLU(W_att [h_i || h_j])`` where ``W_att``
    is (d_h x 2 d_h) and acts on the head's slice of the token. Scores are
    softmax-normalised over unmasked keys; values use a separate projection.
    """

    def __init__(self, d: int, n_heads: int = 2, negative_slope: float = 0.2):
        super().__init__()
        if d % n_heads:
            raise ValueError(f"d={d} not divisible by {n_heads} heads")
        self.d, self.n_heads, self.d_head = d, n_heads, d // n_heads
        self.negative_slope = negative_slope
        self.W_att = nn.Parameter(torch.empty(n_heads, self.d_head, 2 * self.d_head))
        self.att = nn.Parameter(torch.empty(n_heads, self.d_head))
        self.value = nn.Linear(d, d, bias=False)
        self.out = nn.Linear(d, d)
        nn.init.xavier_uniform_(self.W_att)
        nn.init.xavier_uniform_(self.att)

    def scores(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        B, L, _ = x.shape
        xh = x.view(B, L, self.n_heads, self.d_head).transpose(1, 2)  # B,H,L,dh
        src = torch.einsum("bhld,hed->bhle", xh, self.W_att[..., : self.d_head])
        dst = torch.einsum("bhld,hed->bhle", xh, self.W_att[..., self.d_head:])
        hidden = F.leaky_relu(src.unsqueeze(3) + dst.unsqueeze(2), self.negative_slope)
        logits = torch.einsum("bhijd,hd->bhij", hidden, self.att)
        logits = logits.masked_fill(~mask[:, None, None, :], float("-inf"))
        return torch.softmax(logits, dim=-1)

    def forward(self, x: torch.Tensor, mask: torch.Tensor):
        B, L, _ = x.shape
        weights = self.scores(x, mask)
        v = self.value(x).view(B, L, self.n_heads, self.d_head).transpose(1, 2)
        mixed = (weights @ v).transpose(1, 2).reshape(B, L, self.d)
        return self.out(mixed), weights


class EncoderLayer(nn.Module):
    def __init__(self, d: int, n_heads: int, ffn_mult: int = 4, negative_slope: float = 0.2):
        super().__init__()
        self.attn = GATv2Attention(d, n_heads, negative_slope)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, ffn_mult * d), nn.ReLU(), nn.Linear(ffn_mult * d, d))

    def forward(self, x, mask):
        # pre-norm residual blocks
        a, w = self.attn(self.norm1(x), mask)
        x = x + a
        x = x + self.ffn(self.norm2(x))
        return x, w


class InterestEncoder(nn.Module):
    """Stack of GATv2 Transformer layers returning the anchor (position 0) output.

    With ``time_aware`` the aspect tokens get a recency-rank embedding and a
    log-bucketed elapsed-days embedding; otherwise tokens carry no positional
    signal and the encoder is a set encoder.
    """

    def __init__(self, d: int, n_layers: int = 2, n_heads: int = 2, max_len: int = 1,
                 time_aware: bool = False, negative_slope: float = 0.2):
        super().__init__()
        self.d, self.time_aware = d, time_aware
        self.layers = nn.ModuleList(EncoderLayer(d, n_heads, negative_slope=negative_slope)
                                    for _ in range(n_layers))
        self.final_norm = nn.LayerNorm(d)
        if time_aware:
            self.position = nn.Parameter(uniform_init_(torch.empty(max_len + 1, d), d))
            # last row is reserved for the anchor token
            self.bucket = nn.Parameter(uniform_init_(torch.empty(N_TIME_BUCKETS + 1, d), d))

    def forward(self, anchor: torch.Tensor, tokens: torch.Tensor, mask: torch.Tensor,
                buckets: torch.Tensor | None = None, return_attention: bool = False):
        """anchor (B, d), tokens (B, S, d), mask (B, S) bool, buckets (B, S) long."""
        B, S, _ = tokens.shape
        x = torch.cat([anchor.unsqueeze(1), tokens], dim=1)
        full_mask = torch.cat([mask.new_ones(B, 1), mask], dim=1)
        if self.time_aware:
            x = x + self.position[: S + 1].unsqueeze(0)
            anchor_bucket = buckets.new_full((B, 1), N_TIME_BUCKETS)
            x = x + self.bucket[torch.cat([anchor_bucket, buckets], dim=1)]
        x = x * full_mask.unsqueeze(-1).to(x.dtype)
        attn = []
        for layer in self.layers:
            x, w = layer(x, full_mask)
            attn.append(w)
        out = self.final_norm(x[:, 0])
        return (out, attn) if return_attention else out


def canonical_set_order(ids: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Sort valid ids ascending with padding last, so set inputs have one layout."""
    big = torch.iinfo(ids.dtype).max
    key = torch.where(mask, ids, torch.full_like(ids, big))
    key, _ = torch.sort(key, dim=-1, stable=True)
    new_mask = key != big
    return torch.where(new_mask, key, torch.zeros_like(key)), new_mask


class GatedFusion(nn.Module):
    """Gate-residual blend of long/short interest plus the rating-preference MLP."""

    MODES = ("gate", "average", "long", "short")

    def __init__(self, d: int):
        super().__init__()
        self.W_l = nn.Linear(d, d, bias=False)
        self.W_s = nn.Linear(d, d, bias=False)
        self.gate = nn.Linear(2 * d, d)  # W_g, b_g
        self.pref = nn.Linear(d, d)  # W_3, b

    def project(self, e_long, e_short):
        return self.W_l(e_long), self.W_s(e_short)

    def gate_values(self, l_proj, s_proj):
        return torch.sigmoid(self.gate(torch.cat([l_proj, s_proj], dim=-1)))

    def forward(self, e_long, e_short, mode: str = "gate"):
        if mode == "long":
            return self.W_l(e_long)
        if mode == "short":
            return self.W_s(e_short)
        l_proj, s_proj = self.project(e_long, e_short)
        if mode == "average":
            return 0.5 * (l_proj + s_proj)
        g = self.gate_values(l_proj, s_proj)
        return g * l_proj + (1 - g) * s_proj + l_proj

    def final(self, y, fused):
        return torch.cat([F.relu(self.pref(y)), fused], dim=-1)


# --------------------------------------------------------------------------- #
# single-sequence functional forms

def encode_sequence(seq: InterestSequence, tables: EmbeddingTables, encoder: InterestEncoder,
                    t_curr: int | None = None) -> torch.Tensor:
    """Encode one sequence; time-aware encoders need the scoring time ``t_curr``."""
    ids = torch.tensor([seq.aspect_ids], dtype=torch.long)
    mask = torch.tensor([seq.mask], dtype=torch.bool)
    buckets = None
    if encoder.time_aware:
        if seq.timestamps is None or t_curr is None:
            raise ValueError("time-aware encoding needs a short-term sequence and t_curr")
        elapsed = [(t_curr - t) if m else 0 for t, m in zip(seq.timestamps, seq.mask)]
        buckets = torch.as_tensor(time_bucket([elapsed], N_TIME_BUCKETS), dtype=torch.long)
    else:
        ids, mask = canonical_set_order(ids, mask)
    anchor = tables.node(seq.anchor.kind)[seq.anchor.index].unsqueeze(0)
    return encoder(anchor, tables.aspect_emb[ids], mask, buckets)[0]


def gated_fusion(e_long, e_short, gate: GatedFusion) -> torch.Tensor:
    return gate(e_long, e_short, "gate")


def final_representation(y, fused, gate: GatedFusion) -> torch.Tensor:
    return gate.final(y, fused)
