"""Synthetic review corpora with known long-term profiles and injected short-term drift.

Aspects are grouped into ``n_topics`` topics (aspect ``a`` belongs to topic
``a % n_topics``). Each user holds a sparse long-term interest vector drawn
within one topic; a ``drift_fraction`` share of users also holds a replacement
vector from a different topic that is active only inside the last
``drift_window_days`` of the timeline. Items carry positive strengths on a few
aspects of a single topic. A rating is ``1 + 4 * sigmoid(scale * z) + noise``,
where ``z`` is the standardized dot product of the user's active interest
vector and the item vector.

Reviews carry dependency triples (mostly ``amod``, some ``dobj`` and
``nsubj``/``acomp``, plus decoys) naming the aspects the review talks about:
a few of the user's active aspects, any active aspect the item is strong on,
and some salient item aspects.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import DependencyTriple, RawReview, lemmatize_noun

SECONDS_PER_DAY = 86400
T_END = 1_600_000_000

_NOUNS = (
    "quality", "price", "sound", "battery", "size", "weight", "design", "color", "screen",
    "cable", "strap", "case", "button", "speaker", "volume", "material", "finish", "grip",
    "lid", "handle", "display", "charger", "cord", "tone", "bass", "switch", "pedal", "knob",
    "string", "neck", "fret", "pickup", "tuner", "keyboard", "mouse", "paper", "ink", "pen",
    "scent", "texture", "bottle", "formula", "brush", "graphic", "story", "control", "level",
    "character", "soundtrack", "mode",
)
_ADJECTIVES = ("great", "poor", "solid", "cheap", "excellent", "weak", "nice", "awful",
               "decent", "sturdy", "flimsy", "clear", "loud", "smooth", "rough")
_VERBS = ("love", "like", "hate", "appreciate", "dislike")


@dataclass
class SynthConfig:
    n_users: int = 200
    n_items: int = 100
    n_aspects: int = 30
    interactions_per_user: int = 20
    drift_fraction: float = 0.5
    drift_window_days: int = 30
    noise_sd: float = 0.25
    seed: int = 0
    profile_size: int = 4
    item_profile_size: int = 6
    recent_fraction: float = 0.4
    span_days: int = 730
    affinity_scale: float = 1.5
    mentions_per_review: int = 2
    item_mentions_per_review: int = 2
    n_topics: int = 5  # aspects are grouped into topics; profiles are drawn within one topic

    def __post_init__(self):
        for name in ("n_users", "n_items", "n_aspects", "interactions_per_user"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.drift_fraction <= 1.0:
            raise ValueError("drift_fraction must lie in [0, 1]")
        if not 0.0 <= self.recent_fraction <= 1.0:
            raise ValueError("recent_fraction must lie in [0, 1]")
        if not 1 <= self.n_topics <= self.n_aspects:
            raise ValueError("n_topics must lie in [1, n_aspects]")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")


def aspect_names(n: int) -> list[str]:
    names = list(_NOUNS[:n])
    names += [f"facet{k}" for k in range(len(names), n)]
    return names


def _plural(noun: str) -> str | None:
    for cand in (noun + "s", noun + "es"):
        if lemmatize_noun(cand) == noun:
            return cand
    return None


def _triples_for(aspects: list[str], rng: np.random.Generator) -> list[DependencyTriple]:
    out = []
    for name in aspects:
        token = name
        plural = _plural(name)
        if plural is not None and rng.random() < 0.25:
            token = plural
        adj = _ADJECTIVES[rng.integers(len(_ADJECTIVES))]
        roll = rng.random()
        if roll < 0.6:
            out.append(DependencyTriple("amod", token, adj))
        elif roll < 0.8:
            out.append(DependencyTriple("dobj", _VERBS[rng.integers(len(_VERBS))], token))
        else:
            head = "is" if token == name else "are"
            out.append(DependencyTriple("nsubj", head, token))
            out.append(DependencyTriple("acomp", head, adj))
    # decoy relations that no rule consumes
    out.append(DependencyTriple("other", "product", "the"))
    if rng.random() < 0.5:
        out.append(DependencyTriple("nsubj", "arrived", "package"))
    return out


def _topic_vector(rng, topics, n, support, exclude_topic=None):
    """Positive weights on ``support`` aspects of one randomly chosen topic."""
    choices = [t for t in range(topics.max() + 1) if t != exclude_topic]
    topic = int(rng.choice(choices))
    pool = np.flatnonzero(topics == topic)
    idx = rng.choice(pool, size=min(support, pool.size), replace=False)
    vec = np.zeros(n)
    vec[idx] = rng.uniform(0.5, 1.5, size=idx.size)
    return vec, topic


def generate(config: SynthConfig) -> tuple[list[RawReview], dict]:
    """Return ``(reviews, truth)``; ``truth`` holds the generating profiles."""
    cfg = config
    ss = np.random.SeedSequence(cfg.seed)
    prof_ss, time_ss, text_ss, noise_ss = ss.spawn(4)
    prof = np.random.default_rng(prof_ss)
    names = aspect_names(cfg.n_aspects)
    user_ids = [f"u{k:04d}" for k in range(cfg.n_users)]
    item_ids = [f"i{k:04d}" for k in range(cfg.n_items)]

    topics = np.arange(cfg.n_aspects) % cfg.n_topics
    long_vecs, user_topic = np.zeros((cfg.n_users, cfg.n_aspects)), []
    for u in range(cfg.n_users):
        long_vecs[u], t = _topic_vector(prof, topics, cfg.n_aspects, cfg.profile_size)
        user_topic.append(t)
    n_drift = int(round(cfg.drift_fraction * cfg.n_users))
    drifted = np.zeros(cfg.n_users, dtype=bool)
    drifted[prof.choice(cfg.n_users, size=n_drift, replace=False)] = True
    drift_vecs = np.zeros_like(long_vecs)
    for u in np.flatnonzero(drifted):
        # a different topic when there is one, so the drift shares no aspects
        other = user_topic[u] if cfg.n_topics > 1 else None
        drift_vecs[u], _ = _topic_vector(prof, topics, cfg.n_aspects, cfg.profile_size, other)
    item_vecs = np.stack([_topic_vector(prof, topics, cfg.n_aspects, cfg.item_profile_size)[0]
                          for _ in range(cfg.n_items)])

    trng = np.random.default_rng(time_ss)
    window_start = T_END - cfg.drift_window_days * SECONDS_PER_DAY
    span_start = T_END - cfg.span_days * SECONDS_PER_DAY
    n_per = cfg.interactions_per_user
    n_recent = int(round(cfg.recent_fraction * n_per))
    rows = []  # (user, item, ts, in_window)
    for u in range(cfg.n_users):
        items = trng.choice(cfg.n_items, size=n_per, replace=n_per > cfg.n_items)
        old = trng.integers(span_start, window_start, size=n_per - n_recent)
        new = trng.integers(window_start, T_END, size=n_recent)
        for it, t in zip(items, np.concatenate([old, new])):
            rows.append((u, int(it), int(t), bool(t >= window_start)))
    rows.sort(key=lambda r: (r[0], r[2], r[1]))

    def active(u, in_window):
        return drift_vecs[u] if (drifted[u] and in_window) else long_vecs[u]

    raw_aff = np.array([active(u, w) @ item_vecs[i] for u, i, _, w in rows])
    sd = raw_aff.std()
    z = (raw_aff - raw_aff.mean()) / (sd if sd > 0 else 1.0)
    nrng = np.random.default_rng(noise_ss)
    noise = nrng.normal(0.0, cfg.noise_sd, size=len(rows)) if cfg.noise_sd > 0 else np.zeros(len(rows))
    ratings = np.clip(1.0 + 4.0 / (1.0 + np.exp(-cfg.affinity_scale * z)) + noise, 1.0, 5.0)

    xrng = np.random.default_rng(text_ss)
    reviews, intended = [], []
    for (u, i, t, w), r in zip(rows, ratings):
        vec = active(u, w)
        support = np.flatnonzero(vec)
        k = min(cfg.mentions_per_review, support.size)
        probs = vec[support] / vec[support].sum()
        chosen = set(xrng.choice(support, size=k, replace=False, p=probs).tolist())
        salient = np.flatnonzero(item_vecs[i])
        chosen.update(int(a) for a in np.intersect1d(support, salient))
        if salient.size and cfg.item_mentions_per_review > 0:
            m = min(cfg.item_mentions_per_review, salient.size)
            chosen.update(int(a) for a in xrng.choice(salient, size=m, replace=False))
        aspects = sorted(names[a] for a in chosen)
        triples = tuple(_triples_for(aspects, xrng))
        text = ". ".join(f"{tr.dependent} {tr.head}" for tr in triples if tr.relation == "amod") or None
        reviews.append(RawReview(user_ids[u], item_ids[i], round(float(r), 4), t, text, triples))
        intended.append(aspects)

    def as_map(vec):
        return {names[a]: round(float(vec[a]), 6) for a in np.flatnonzero(vec)}

    truth = {
        "config": asdict(cfg),
        "aspects": names,
        "topics": {names[a]: int(topics[a]) for a in range(cfg.n_aspects)},
        "t_end": T_END,
        "window_start": window_start,
        "users": {user_ids[u]: {"long": as_map(long_vecs[u]),
                                "drift": as_map(drift_vecs[u]) if drifted[u] else None}
                  for u in range(cfg.n_users)},
        "items": {item_ids[i]: as_map(item_vecs[i]) for i in range(cfg.n_items)},
        "intended_aspects": intended,
    }
    return reviews, truth


def write_truth(path, truth: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, sort_keys=True)
