"""Review ingestion and rule-based aspect extraction over dependency triples.

Three patterns fire on pre-parsed triples:

* ``amod(noun, adj)``            -> aspect = noun, opinion = adj
* ``dobj(verb, noun)``           -> aspect = noun, opinion = verb
* ``nsubj(H, noun) + acomp(H, adj)`` sharing head ``H`` -> aspect = noun, opinion = adj

No parser is bundled. Reviews that carry only ``text`` can be routed through
any callable ``text -> list[DependencyTriple]`` (see ``scripts/parse_adapter.py``).
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

log = logging.getLogger(__name__)

RELATIONS = ("amod", "dobj", "nsubj", "acomp", "other")
RULES = ("amod", "dobj", "nsubj_acomp")


@dataclass(frozen=True)
class DependencyTriple:
    relation: str
    head: str
    dependent: str

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if not self.head or not self.dependent:
            raise ValueError("triple tokens must be non-empty")

    @classmethod
    def from_raw(cls, raw: Sequence[str]) -> "DependencyTriple":
        rel, head, dep = raw
        rel = str(rel).lower()
        if rel not in RELATIONS:
            rel = "other"
        return cls(rel, str(head).strip().lower(), str(dep).strip().lower())

    def to_raw(self) -> list[str]:
        return [self.relation, self.head, self.dependent]


@dataclass(frozen=True)
class RawReview:
    user_id: str
    item_id: str
    rating: float
    timestamp: int
    text: str | None = None
    triples: tuple[DependencyTriple, ...] | None = None

    def __post_init__(self):
        if not 1.0 <= self.rating <= 5.0:
            raise ValueError(f"rating {self.rating} outside [1, 5]")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if self.text is None and self.triples is None:
            raise ValueError("review needs text or triples")

    def to_record(self) -> dict:
        rec = {"user": self.user_id, "item": self.item_id, "rating": self.rating, "ts": self.timestamp}
        if self.text is not None:
            rec["text"] = self.text
        if self.triples is not None:
            rec["triples"] = [t.to_raw() for t in self.triples]
        return rec


@dataclass(frozen=True)
class AspectMention:
    aspect: str
    opinion: str
    rule: str
    review_index: int = 0


@dataclass
class RejectedRecord:
    line: int
    reason: str


@dataclass
class AspectVocabulary:
    aspect_to_id: dict[str, int] = field(default_factory=dict)
    frequencies: dict[str, int] = field(default_factory=dict)
    min_freq: int = 2

    def __len__(self):
        return len(self.aspect_to_id)

    def __contains__(self, aspect: str):
        return aspect in self.aspect_to_id

    @property
    def id_to_aspect(self) -> list[str]:
        out = [""] * len(self.aspect_to_id)
        for a, i in self.aspect_to_id.items():
            out[i] = a
        return out

    def to_json(self) -> dict:
        return {"min_freq": self.min_freq, "aspects": self.id_to_aspect,
                "frequencies": [self.frequencies[a] for a in self.id_to_aspect]}

    @classmethod
    def from_json(cls, data: dict) -> "AspectVocabulary":
        aspects = data["aspects"]
        return cls({a: i for i, a in enumerate(aspects)},
                   dict(zip(aspects, data["frequencies"])), data["min_freq"])


# --------------------------------------------------------------------------- #
# parsing

def _record_to_review(rec: dict) -> RawReview:
    triples = rec.get("triples")
    if triples is not None:
        triples = tuple(DependencyTriple.from_raw(t) for t in triples)
    return RawReview(
        user_id=str(rec["user"]),
        item_id=str(rec["item"]),
        rating=float(rec["rating"]),
        timestamp=int(rec["ts"]),
        text=rec.get("text"),
        triples=triples,
    )


def parse_review_lines(lines: Iterable[str]) -> tuple[list[RawReview], list[RejectedRecord]]:
    """Parse JSON-lines review records.

    Malformed lines raise ``ValueError`` naming the line number. Records whose
    rating falls outside [1, 5] are skipped and returned as rejections.
    """
    reviews, rejected = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            for key in ("user", "item", "rating", "ts"):
                if key not in rec:
                    raise KeyError(key)
            rating = float(rec["rating"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: malformed review record ({exc!r})") from exc
        if not 1.0 <= rating <= 5.0:
            rejected.append(RejectedRecord(lineno, f"rating {rating} outside [1, 5]"))
            continue
        try:
            reviews.append(_record_to_review(rec))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return reviews, rejected


def parse_review_file(path, fmt: str = "jsonl", rejected: list | None = None) -> list[RawReview]:
    """Read reviews from ``path``. Supported formats: ``jsonl`` and ``json`` (a list of records)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if fmt == "jsonl":
        lines = text.splitlines()
    elif fmt == "json":
        records = json.loads(text) if text.strip() else []
        lines = [json.dumps(r) for r in records]
    else:
        raise ValueError(f"unsupported review format {fmt!r}")
    reviews, bad = parse_review_lines(lines)
    if bad:
        log.warning("%s: rejected %d record(s) with out-of-range ratings", path, len(bad))
    if rejected is not None:
        rejected.extend(bad)
    return reviews


def write_reviews(path, reviews: Iterable[RawReview]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reviews:
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")


# --------------------------------------------------------------------------- #
# extraction

# (suffix, replacement), first match wins
_PLURAL_RULES = (
    ("sses", "ss"),
    ("ies", "y"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("xes", "x"),
    ("ss", "ss"),
    ("us", "us"),
    ("is", "is"),
    ("s", ""),
)


def lemmatize_noun(token: str) -> str:
    token = token.lower()
    for suffix, repl in _PLURAL_RULES:
        if token.endswith(suffix):
            stem = token[: len(token) - len(suffix)] + repl
            return stem if len(stem) >= 3 else token
    return token


def _match(triples: Sequence[DependencyTriple], review_index: int):
    mentions: set[AspectMention] = set()
    used: set[int] = set()
    subj: dict[str, list[int]] = {}
    comp: dict[str, list[int]] = {}
    for k, t in enumerate(triples):
        if t.relation == "amod":
            mentions.add(AspectMention(lemmatize_noun(t.head), t.dependent, "amod", review_index))
            used.add(k)
        elif t.relation == "dobj":
            mentions.add(AspectMention(lemmatize_noun(t.dependent), t.head, "dobj", review_index))
            used.add(k)
        elif t.relation == "nsubj":
            subj.setdefault(t.head, []).append(k)
        elif t.relation == "acomp":
            comp.setdefault(t.head, []).append(k)
    for head in subj.keys() & comp.keys():
        for ks in subj[head]:
            for kc in comp[head]:
                mentions.add(AspectMention(lemmatize_noun(triples[ks].dependent),
                                           triples[kc].dependent, "nsubj_acomp", review_index))
                used.update((ks, kc))
    return mentions, used


def extract_aspect_mentions(triples: Sequence[DependencyTriple], review_index: int = 0) -> list[AspectMention]:
    mentions, _ = _match(triples, review_index)
    return sorted(mentions, key=lambda m: (m.aspect, m.opinion, m.rule))


def partition_triples(triples: Sequence[DependencyTriple]):
    """Split ``triples`` into (matched, ignored) by whether any rule consumed them."""
    _, used = _match(triples, 0)
    matched = [t for k, t in enumerate(triples) if k in used]
    ignored = [t for k, t in enumerate(triples) if k not in used]
    return matched, ignored


TripleParser = Callable[[str], list[DependencyTriple]]


def extract_corpus(reviews: Sequence[RawReview], parser: TripleParser | None = None) -> list[list[AspectMention]]:
    """Per-review mention lists. Text-only reviews need ``parser``; otherwise they yield nothing."""
    out = []
    for idx, r in enumerate(reviews):
        triples = r.triples
        if triples is None:
            triples = parser(r.text) if (parser is not None and r.text) else ()
        out.append(extract_aspect_mentions(triples, idx))
    return out


def build_vocabulary(mentions: Iterable[AspectMention], min_freq: int = 2) -> AspectVocabulary:
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter(m.aspect for m in mentions)
    kept = sorted((a for a, c in counts.items() if c >= min_freq), key=lambda a: (-counts[a], a))
    return AspectVocabulary({a: i for i, a in enumerate(kept)}, {a: counts[a] for a in kept}, min_freq)


def review_aspect_ids(mentions: Sequence[Sequence[AspectMention]], vocab: AspectVocabulary) -> list[list[int]]:
    """Distinct in-vocabulary aspect ids per review, ascending."""
    return [sorted({vocab.aspect_to_id[m.aspect] for m in ms if m.aspect in vocab}) for ms in mentions]


def write_mentions(path, mentions: Iterable[Iterable[AspectMention]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ms in mentions:
            for m in ms:
                fh.write(json.dumps({"review_index": m.review_index, "aspect": m.aspect,
                                     "opinion": m.opinion, "rule": m.rule}) + "\n")


def read_mentions(path, n_reviews: int) -> list[list[AspectMention]]:
    out: list[list[AspectMention]] = [[] for _ in range(n_reviews)]
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["review_index"]].append(
                    AspectMention(rec["aspect"], rec["opinion"], rec["rule"], rec["review_index"]))
    return out
