"""Tripartite user-item-aspect graph.

Edges run only between a user/item node and an aspect. Their weight ``w`` is
the number of reviews in which the node mentioned that aspect (each review
counts an aspect once). User-item pairs carry every ``(rating, timestamp)``
observed for them and are used only for supervision and time bookkeeping.

Snapshot format (JSON, ``format_version`` 1)::

    {"format": "lsa-aspect-graph", "format_version": 1,
     "users": [...ids], "items": [...ids], "n_aspects": int,
     "edges": [[kind, index, aspect, w], ...],           # kind in {"user", "item"}
     "times": [[kind, index, aspect, [t0, t1, ...]], ...],
     "ratings": [[user_index, item_index, [[rating, ts], ...]], ...]}

All lists are sorted, so rebuilding from the same inputs yields identical bytes.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import AspectMention, AspectVocabulary, RawReview, review_aspect_ids

GRAPH_FORMAT_VERSION = 1
NODE_KINDS = ("user", "item", "aspect")


@dataclass(frozen=True, order=True)
class NodeId:
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.index < 0:
            raise ValueError("node index must be non-negative")


def user(index: int) -> NodeId:
    return NodeId("user", index)


def item(index: int) -> NodeId:
    return NodeId("item", index)


@dataclass
class AspectGraph:
    users: list[str] = field(default_factory=list)
    items: list[str] = field(default_factory=list)
    n_aspects: int = 0
    node_aspect_weight: dict[tuple[NodeId, int], int] = field(default_factory=dict)
    user_item_rating: dict[tuple[int, int], list[tuple[float, int]]] = field(default_factory=dict)
    node_aspect_times: dict[tuple[NodeId, int], list[int]] = field(default_factory=dict)

    def __post_init__(self):
        self.user_index = {u: k for k, u in enumerate(self.users)}
        self.item_index = {i: k for k, i in enumerate(self.items)}
        self._reindex()

    def _reindex(self):
        self._neighbors: dict[NodeId, set[int]] = {}
        for node, a in self.node_aspect_weight:
            self._neighbors.setdefault(node, set()).add(a)
        self._history: dict[NodeId, list[tuple[int, int]]] = {}
        for (node, a), times in sorted(self.node_aspect_times.items()):
            self._history.setdefault(node, []).extend((a, t) for t in times)

    def count(self, kind: str) -> int:
        return {"user": len(self.users), "item": len(self.items), "aspect": self.n_aspects}[kind]

    def history(self, node: NodeId) -> list[tuple[int, int]]:
        """All ``(aspect, timestamp)`` entries recorded for ``node``."""
        return list(self._history.get(node, ()))

    def to_json(self) -> dict:
        def enc(node):
            return [node.kind, node.index]
        return {
            "format": "lsa-aspect-graph",
            "format_version": GRAPH_FORMAT_VERSION,
            "users": self.users,
            "items": self.items,
            "n_aspects": self.n_aspects,
            "edges": [enc(n) + [a, w] for (n, a), w in sorted(self.node_aspect_weight.items())],
            "times": [enc(n) + [a, ts] for (n, a), ts in sorted(self.node_aspect_times.items())],
            "ratings": [[u, i, [list(p) for p in pairs]]
                        for (u, i), pairs in sorted(self.user_item_rating.items())],
        }

    @classmethod
    def from_json(cls, data: dict) -> "AspectGraph":
        if data.get("format") != "lsa-aspect-graph":
            raise ValueError("not an aspect-graph snapshot")
        if data.get("format_version") != GRAPH_FORMAT_VERSION:
            raise ValueError(f"unsupported graph format version {data.get('format_version')}")
        return cls(
            users=list(data["users"]),
            items=list(data["items"]),
            n_aspects=int(data["n_aspects"]),
            node_aspect_weight={(NodeId(k, n), a): w for k, n, a, w in data["edges"]},
            node_aspect_times={(NodeId(k, n), a): list(ts) for k, n, a, ts in data["times"]},
            user_item_rating={(u, i): [(float(r), int(t)) for r, t in pairs]
                              for u, i, pairs in data["ratings"]},
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "AspectGraph":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def build_graph(
    reviews: Sequence[RawReview],
    mentions: Sequence[Sequence[AspectMention]] | Sequence[Sequence[int]],
    vocab: AspectVocabulary,
    users: Sequence[str] | None = None,
    items: Sequence[str] | None = None,
) -> AspectGraph:
    """Build the graph from reviews and their per-review mentions.

    ``mentions`` may hold ``AspectMention`` lists or already-resolved aspect id
    lists. ``users``/``items`` fix the node index space (e.g. shared between a
    train graph and the full corpus); by default the sorted ids seen in ``reviews``.
    """
    if len(mentions) != len(reviews):
        raise ValueError("need one mention list per review")
    if mentions and any(ms and isinstance(ms[0], AspectMention) for ms in mentions):
        aspect_ids = review_aspect_ids(mentions, vocab)
    else:
        aspect_ids = [sorted({int(a) for a in ms if 0 <= int(a) < len(vocab)}) for ms in mentions]

    users = sorted({r.user_id for r in reviews}) if users is None else list(users)
    items = sorted({r.item_id for r in reviews}) if items is None else list(items)
    uidx = {u: k for k, u in enumerate(users)}
    iidx = {i: k for k, i in enumerate(items)}

    weight: dict[tuple[NodeId, int], int] = {}
    times: dict[tuple[NodeId, int], list[int]] = {}
    ratings: dict[tuple[int, int], list[tuple[float, int]]] = {}
    for r, aids in zip(reviews, aspect_ids):
        u, i = uidx[r.user_id], iidx[r.item_id]
        ratings.setdefault((u, i), []).append((float(r.rating), int(r.timestamp)))
        for node in (NodeId("user", u), NodeId("item", i)):
            for a in aids:
                weight[(node, a)] = weight.get((node, a), 0) + 1
                bisect.insort(times.setdefault((node, a), []), int(r.timestamp))
    for pairs in ratings.values():
        pairs.sort(key=lambda p: (p[1], p[0]))
    return AspectGraph(users, items, len(vocab), weight, ratings, times)


def edge_weight(graph: AspectGraph, node: NodeId, aspect: int) -> int:
    return graph.node_aspect_weight.get((node, aspect), 0)


def neighbor_aspects(graph: AspectGraph, node: NodeId) -> set[int]:
    if node.kind == "aspect":
        raise ValueError("aspect nodes have no aspect neighbours")
    return set(graph._neighbors.get(node, ()))
