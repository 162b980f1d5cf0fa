"""Long-term (Important-K) and short-term (Recent-N) aspect selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import AspectGraph, NodeId, edge_weight, neighbor_aspects

SECONDS_PER_DAY = 86400
EDGE_SCALE = 100.0


@dataclass(frozen=True)
class InterestSequence:
    """Anchor node followed by a fixed number of aspect slots.

    Slot ``k`` is meaningful only when ``mask[k]`` is true; padded slots hold
    aspect id 0. ``timestamps`` is set for short-term sequences only.
    """

    anchor: NodeId
    aspect_ids: tuple[int, ...]
    mask: tuple[bool, ...]
    horizon: str
    timestamps: tuple[int, ...] | None = None

    @property
    def tokens(self) -> list[int]:
        return [a for a, m in zip(self.aspect_ids, self.mask) if m]

    def __len__(self):
        return 1 + len(self.aspect_ids)

    def to_json(self) -> dict:
        out = {"anchor": [self.anchor.kind, self.anchor.index], "horizon": self.horizon,
               "aspects": self.tokens}
        if self.timestamps is not None:
            out["timestamps"] = [t for t, m in zip(self.timestamps, self.mask) if m]
        return out


@dataclass(frozen=True)
class InteractionHistory:
    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if any(t < 0 for _, t in self.entries):
            raise ValueError("history timestamps must be non-negative")

    @classmethod
    def of(cls, graph: AspectGraph, node: NodeId) -> "InteractionHistory":
        return cls(tuple(graph.history(node)))


@dataclass
class ScoringSnapshot:
    """Frozen copy of the parameters Important-K reads.

    ``*_pref`` are the rating-preference tables, ``*_proj`` the d x d maps
    applied to them before comparison with ``aspect_emb``.
    """

    user_pref: np.ndarray
    item_pref: np.ndarray
    aspect_emb: np.ndarray
    user_proj: np.ndarray
    item_proj: np.ndarray

    def pref(self, node: NodeId) -> np.ndarray:
        return (self.user_pref if node.kind == "user" else self.item_pref)[node.index]

    def proj(self, node: NodeId) -> np.ndarray:
        return self.user_proj if node.kind == "user" else self.item_proj


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def edge_weight_score(w, scale: float = EDGE_SCALE):
    """sigmoid(exp(w / scale)); accepts scalars or arrays."""
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("edge weight must be non-negative")
    with np.errstate(over="ignore"):
        out = _sigmoid(np.exp(w / scale))
    return float(out) if out.ndim == 0 else out


def rating_preference_score(y, e_a, W1) -> float:
    """Scaled dot product between ``W1 @ y`` and ``e_a``."""
    y, e_a, W1 = np.asarray(y, float), np.asarray(e_a, float), np.asarray(W1, float)
    d = y.shape[0]
    if y.ndim != 1 or e_a.shape != (d,) or W1.shape != (d, d):
        raise ValueError(f"dimension mismatch: y{y.shape}, e_a{e_a.shape}, W1{W1.shape}")
    return float(np.dot(W1 @ y, e_a) / math.sqrt(d))


def _node_scores(graph: AspectGraph, params: ScoringSnapshot, node: NodeId, full_vocabulary: bool):
    """Candidate ids (ascending), their weights and rating-preference scores."""
    if full_vocabulary:
        cand = np.arange(graph.n_aspects, dtype=np.int64)
    else:
        cand = np.array(sorted(neighbor_aspects(graph, node)), dtype=np.int64)
    w = np.array([edge_weight(graph, node, int(a)) for a in cand], dtype=np.float64)
    if cand.size == 0:
        return cand, w, np.zeros(0)
    emb = params.aspect_emb[cand]
    query = params.proj(node) @ params.pref(node)
    return cand, w, (emb @ query) / math.sqrt(emb.shape[1])


def _top_k(cand, w, pref, K, exclude=(), scale=EDGE_SCALE):
    if len(exclude):
        w = w - np.isin(cand, np.fromiter(exclude, dtype=np.int64))
        keep = w > 0
        cand, w, pref = cand[keep], w[keep], pref[keep]
    scores = edge_weight_score(w, scale) + pref
    return cand[np.lexsort((cand, -scores))[:K]]


def important_k(graph: AspectGraph, params: ScoringSnapshot, node: NodeId, K: int,
                full_vocabulary: bool = False, exclude=(), edge_scale: float = EDGE_SCALE) -> InterestSequence:
    """Anchor plus the top-``K`` aspects by edge-weight score + rating-preference score.

    ``exclude`` lists aspects whose weight is reduced by one before ranking,
    which removes a review's own contribution when that review is being scored.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    cand, w, pref = _node_scores(graph, params, node, full_vocabulary)
    if full_vocabulary:
        exclude = ()
    chosen = [int(a) for a in _top_k(cand, w, pref, K, exclude, edge_scale)] if cand.size else []
    pad = K - len(chosen)
    return InterestSequence(node, tuple(chosen) + (0,) * pad, (True,) * len(chosen) + (False,) * pad, "long")


def recent_n(history: InteractionHistory, t_curr: int, N: int, T: float,
             anchor: NodeId | None = None) -> InterestSequence:
    """Most recent ``N`` entries strictly before ``t_curr`` and within ``T`` days of it."""
    if N < 1 or not T > 0:
        raise ValueError("need N >= 1 and T > 0")
    window = T * SECONDS_PER_DAY
    valid = [(a, t) for a, t in history.entries if t < t_curr and t_curr - t <= window]
    valid.sort(key=lambda e: (-e[1], e[0]))
    valid = valid[:N]
    pad = N - len(valid)
    return InterestSequence(
        anchor if anchor is not None else NodeId("user", 0),
        tuple(a for a, _ in valid) + (0,) * pad,
        (True,) * len(valid) + (False,) * pad,
        "short",
        tuple(t for _, t in valid) + (0,) * pad,
    )


# --------------------------------------------------------------------------- #
# batched forms used by the trainer

def important_k_rows(graph: AspectGraph, params: ScoringSnapshot, kind: str, nodes: Sequence[int],
                     K: int, excludes: Sequence[Sequence[int]] | None = None,
                     full_vocabulary: bool = False, edge_scale: float = EDGE_SCALE) -> tuple[np.ndarray, np.ndarray]:
    """``(ids, mask)`` of shape (len(nodes), K); node scores are computed once per node."""
    ids = np.zeros((len(nodes), K), dtype=np.int64)
    mask = np.zeros((len(nodes), K), dtype=bool)
    cache: dict[int, tuple] = {}
    for row, k in enumerate(nodes):
        if k < 0:
            continue
        if k not in cache:
            cache[k] = _node_scores(graph, params, NodeId(kind, int(k)), full_vocabulary)
        cand, w, pref = cache[k]
        if cand.size == 0:
            continue
        exclude = () if (excludes is None or full_vocabulary) else excludes[row]
        chosen = _top_k(cand, w, pref, K, exclude, edge_scale)
        ids[row, : chosen.size] = chosen
        mask[row, : chosen.size] = True
    return ids, mask


def recent_n_rows(graph: AspectGraph, kind: str, nodes: Sequence[int], t_currs: Sequence[int],
                  N: int, T: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(ids, mask, elapsed_seconds)`` arrays of shape (len(nodes), N)."""
    ids = np.zeros((len(nodes), N), dtype=np.int64)
    mask = np.zeros((len(nodes), N), dtype=bool)
    elapsed = np.zeros((len(nodes), N), dtype=np.int64)
    cache: dict[int, InteractionHistory] = {}
    for row, (k, t) in enumerate(zip(nodes, t_currs)):
        if k < 0:
            continue
        node = NodeId(kind, int(k))
        if k not in cache:
            cache[k] = InteractionHistory.of(graph, node)
        seq = recent_n(cache[k], int(t), N, T, node)
        ids[row], mask[row] = seq.aspect_ids, seq.mask
        elapsed[row] = np.where(seq.mask, int(t) - np.asarray(seq.timestamps), 0)
    return ids, mask, elapsed


def time_bucket(elapsed_seconds, n_buckets: int = 16):
    """Log-scaled elapsed-day bucket: 0 -> 0, 1 -> 1, 2-3 -> 2, 4-7 -> 3, ... capped."""
    days = np.asarray(elapsed_seconds, dtype=np.int64) // SECONDS_PER_DAY
    safe = np.maximum(days, 1)
    b = np.where(days <= 0, 0, np.floor(np.log2(safe)).astype(np.int64) + 1)
    return np.minimum(b, n_buckets - 1)
