#!/usr/bin/env python3
"""Attach dependency triples to a plain-text review file using spaCy.

    python scripts/parse_adapter.py reviews.jsonl parsed.jsonl [--model en_core_web_sm]

The package itself never parses text; it consumes ``(relation, head, dependent)``
triples. This adapter is the bridge for real corpora and is deliberately kept out
of the package so spaCy stays an optional, user-installed tool.
"""

import argparse

from lsa_rec.corpus import DependencyTriple, RawReview, parse_review_file, write_reviews

KEEP = {"amod", "dobj", "nsubj", "acomp"}


def doc_triples(doc) -> list[DependencyTriple]:
    out = []
    for tok in doc:
        rel = tok.dep_.lower()
        if rel in KEEP:
            out.append(DependencyTriple(rel, tok.head.text.lower(), tok.text.lower()))
    return out


def make_parser(model: str = "en_core_web_sm"):
    """A ``text -> triples`` callable usable as ``extract_corpus(reviews, parser)``."""
    import spacy

    nlp = spacy.load(model, disable=["ner"])
    return lambda text: doc_triples(nlp(text))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--model", default="en_core_web_sm")
    args = ap.parse_args()
    parse = make_parser(args.model)
    reviews = parse_review_file(args.src)
    parsed = [r if r.triples is not None else
              RawReview(r.user_id, r.item_id, r.rating, r.timestamp, r.text, tuple(parse(r.text or "")))
              for r in reviews]
    write_reviews(args.dst, parsed)
    print(f"parsed {sum(r.triples is None for r in reviews)} of {len(reviews)} reviews into {args.dst}")


if __name__ == "__main__":
    main()
