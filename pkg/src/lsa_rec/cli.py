"""Command-line entry point: ``lsa <command> [flags] [--key value ...]``.

Every command writes its artifacts and a ``manifest.json`` into ``--out``.
Configuration comes from defaults, then the ``--config`` TOML file (section
``[synth]`` feeds the generator, every other section feeds training), then
``--key value`` flags.

Exit codes: 0 success, 2 bad configuration key or value, 3 missing input.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from .config import ConfigKeyError, TrainConfig, apply_overrides, config_dict, load_toml
from .corpus import (build_vocabulary, extract_corpus, parse_review_file,
                     write_mentions, write_reviews)
from .synth import SynthConfig, generate, write_truth


EXIT_OK, EXIT_CONFIG, EXIT_INPUT = 0, 2, 3
COMMANDS = ("extract", "build-graph", "synth", "train", "evaluate", "ablate", "sweep", "report")
TRAIN_SECTIONS = ("training", "train", "corpus", "graph", "selection", "interest_encoders",
                  "predictor", "evaluation")


class BadValue(ValueError):
    """A flag value the command cannot use."""


class InputMissing(Exception):
    def __init__(self, path, why="not found"):
        super().__init__(f"{path}: {why}")
        self.path = path


# --------------------------------------------------------------------------- #
# hashing and manifests

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def git_blob_hash(path) -> str:
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(out: Path, command: str, argv, train_cfg, synth_cfg, seed, inputs, t0) -> Path:
    artifacts = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts[str(p.relative_to(out))] = git_blob_hash(p)
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": {"training": config_dict(train_cfg), "synth": config_dict(synth_cfg)},
        "seed": seed,
        "inputs": {str(Path(p).resolve()): file_sha256(p) for p in inputs},
        "artifacts": artifacts,
        "wall_time": round(time.perf_counter() - t0, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.is_file():
        raise InputMissing(path)
    try:
        data = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputMissing(path, f"corrupted manifest ({exc})")
    if not isinstance(data, dict) or "command" not in data or "config" not in data:
        raise InputMissing(path, "corrupted manifest (missing command/config)")
    return data


# --------------------------------------------------------------------------- #
# configuration

def _split_overrides(extra: list[str]) -> dict[str, str]:
    out, k = {}, 0
    while k < len(extra):
        tok = extra[k]
        if not tok.startswith("--"):
            raise ConfigKeyError(tok)
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, value = key.split("=", 1)
            k += 1
        else:
            if k + 1 >= len(extra):
                raise ValueError(f"flag --{key} needs a value")
            value = extra[k + 1]
            k += 2
        out[key] = value
    return out


def resolve_configs(args, extra: list[str]) -> tuple[TrainConfig, SynthConfig]:
    train_over, synth_over = {}, {}
    if args.config:
        if not Path(args.config).is_file():
            raise InputMissing(args.config)
        for section, values in load_toml(args.config).items():
            if not isinstance(values, dict):
                raise ConfigKeyError(section)
            if section == "synth":
                synth_over.update(values)
            elif section in TRAIN_SECTIONS:
                train_over.update(values)
            else:
                raise ConfigKeyError(section)
    train_names = {f.name for f in dataclasses.fields(TrainConfig)}
    synth_names = {f.name for f in dataclasses.fields(SynthConfig)}
    for key, value in _split_overrides(extra).items():
        if key not in train_names and key not in synth_names:
            raise ConfigKeyError(key)
        if key in train_names:
            train_over[key] = value
        if key in synth_names:
            synth_over[key] = value
    if args.seed is not None:
        train_over["seed"] = synth_over["seed"] = args.seed
    if getattr(args, "variant", None):
        train_over["variant"] = args.variant
    return apply_overrides(TrainConfig(), train_over), apply_overrides(SynthConfig(), synth_over)


def config_diff(cfg: dict, default: dict) -> list[tuple[str, object, object]]:
    return [(k, default.get(k), v) for k, v in sorted(cfg.items()) if default.get(k) != v]


# --------------------------------------------------------------------------- #
# commands

def _require(path) -> Path:
    if path is None:
        raise InputMissing("<missing --input>", "an --input path is required")
    path = Path(path)
    if not path.exists():
        raise InputMissing(path)
    return path


def _reviews_path(path: Path) -> Path:
    """Accept a review file or a synth run directory holding ``reviews.jsonl``."""
    if path.is_dir():
        path = path / "reviews.jsonl"
        if not path.is_file():
            raise InputMissing(path)
    return path


def _load_dataset(path: Path, cfg: TrainConfig):
    from .evaluation import make_dataset
    reviews = parse_review_file(path)
    if not reviews:
        raise InputMissing(path, "no usable reviews")
    return make_dataset(reviews, cfg.min_freq, cfg.test_ratio, cfg.seed)


def cmd_synth(args, cfg, scfg, out):
    reviews, truth = generate(scfg)
    write_reviews(out / "reviews.jsonl", reviews)
    write_truth(out / "truth.json", truth)
    print(f"wrote {len(reviews)} reviews to {out / 'reviews.jsonl'}")
    return []


def cmd_extract(args, cfg, scfg, out):
    path = _reviews_path(_require(args.input))
    rejected: list = []
    reviews = parse_review_file(path, rejected=rejected)
    mentions = extract_corpus(reviews)
    vocab = build_vocabulary((m for ms in mentions for m in ms), cfg.min_freq)
    write_mentions(out / "mentions.jsonl", mentions)
    (out / "vocab.json").write_text(json.dumps(vocab.to_json(), sort_keys=True))
    with open(out / "rejected.jsonl", "w", encoding="utf-8") as fh:
        for r in rejected:
            fh.write(json.dumps(dataclasses.asdict(r), sort_keys=True) + "\n")
    print(f"{len(reviews)} reviews, {sum(map(len, mentions))} mentions, "
          f"{len(vocab)} aspects (min_freq={cfg.min_freq}), {len(rejected)} rejected")
    return [path]


def _dump_sequences(path: Path, graph, model, cfg: TrainConfig) -> None:
    from .graph import NodeId
    from .selection import InteractionHistory, important_k, recent_n
    snap = model.snapshot()
    t_query = max((t for ts in graph.node_aspect_times.values() for t in ts), default=0) + 1
    out = []
    for kind, names in (("user", graph.users), ("item", graph.items)):
        for k, name in enumerate(names):
            node = NodeId(kind, k)
            long = important_k(graph, snap, node, cfg.K, cfg.full_vocabulary, edge_scale=cfg.edge_scale)
            short = recent_n(InteractionHistory.of(graph, node), t_query, cfg.N, cfg.T, node)
            out.append({"node": name, "kind": kind, "long": long.to_json(), "short": short.to_json()})
    path.write_text(json.dumps({"t_query": t_query, "sequences": out}, indent=1))


def cmd_build_graph(args, cfg, scfg, out):
    from .graph import build_graph
    from .training import build_model
    path = _reviews_path(_require(args.input))
    data = _load_dataset(path, cfg)
    graph = build_graph(data.train, data.train_aspects, data.vocab, data.users, data.items)
    graph.save(out / "graph.json")
    (out / "vocab.json").write_text(json.dumps(data.vocab.to_json(), sort_keys=True))
    if args.dump_sequences:
        _dump_sequences(out / "sequences.json", graph, build_model(graph, cfg), cfg)
    print(f"graph: {len(graph.users)} users, {len(graph.items)} items, {graph.n_aspects} aspects, "
          f"{len(graph.node_aspect_weight)} node-aspect edges")
    return [path]


def cmd_train(args, cfg, scfg, out):
    from .evaluation import train_on
    path = _reviews_path(_require(args.input))
    data = _load_dataset(path, cfg)
    bundle = train_on(data, cfg, log_path=out / "train_log.jsonl")
    bundle.save(out / "model")
    split = {"reviews": str(path.resolve()), "test_idx": data.test_idx.tolist()}
    (out / "split.json").write_text(json.dumps(split))
    if args.dump_sequences:
        _dump_sequences(out / "sequences.json", bundle.graph, bundle.model, cfg)
    last = bundle.history[-1]
    print(f"trained {len(bundle.history)} epochs; last train_mse {last['train_mse']:.4f}, "
          f"best val_mse {min(h['val_mse'] for h in bundle.history):.4f}")
    return [path]


def _write_metrics(out: Path, report) -> None:
    (out / "metrics.json").write_text(report.to_json() + "\n")
    print(report.table())


def cmd_evaluate(args, cfg, scfg, out):
    from .evaluation import evaluate, write_predictions
    from .training import TrainedModel
    run = _require(args.input)
    split_path = run / "split.json"
    if not split_path.is_file() or not (run / "model").is_dir():
        raise InputMissing(split_path, "not a train run directory")
    split = json.loads(split_path.read_text())
    reviews_path = _require(split["reviews"])
    reviews = parse_review_file(reviews_path)
    test = [reviews[k] for k in split["test_idx"]]
    bundle = TrainedModel.load(run / "model")
    report = evaluate(bundle, test)
    args.effective_config = bundle.config
    _write_metrics(out, report)
    write_predictions(out / "predictions.csv", bundle, test)
    return [reviews_path, run / "model" / "checkpoint.pt"]


def cmd_ablate(args, cfg, scfg, out):
    from .evaluation import run_ablation
    path = _reviews_path(_require(args.input))
    data = _load_dataset(path, cfg)
    _write_metrics(out, run_ablation(cfg.variant, data, cfg, log_path=out / "train_log.jsonl"))
    return [path]


def cmd_sweep(args, cfg, scfg, out):
    from .evaluation import sweep
    if args.param not in ("K", "N"):
        raise BadValue("--param must be K or N")
    if not args.values:
        raise BadValue("--values is required, e.g. --values 10,40,80")
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise BadValue(f"--values must be comma-separated integers, got {args.values!r}")
    path = _reviews_path(_require(args.input))
    rows = sweep(args.param, values, _load_dataset(path, cfg), cfg, out)
    for r in rows:
        print(f"{args.param}={r[args.param]:<5d} mse {r['mse']:.4f}  mae {r['mae']:.4f}")
    return [path]


def _metrics_of(run_dir: Path) -> dict:
    path = run_dir / "metrics.json"
    if path.is_file():
        return json.loads(path.read_text())
    return {}


def cmd_report(args) -> int:
    runs = [Path(r) for r in args.runs]
    manifests = [read_manifest(r) for r in runs]
    metrics = [_metrics_of(r) for r in runs]
    keys = [("MSE", "mse"), ("MAE", "mae"), ("NDCG@10", "ndcg_at_10"), ("n_test", "n_test")]

    def fmt(v):
        if v is None:
            return "n/a"
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    header = ["metric"] + [str(r) for r in runs] + (["delta"] if len(runs) == 2 else [])
    rows = []
    for label, key in keys:
        vals = [m.get(key) for m in metrics]
        row = [label] + [fmt(v) for v in vals]
        if len(runs) == 2:
            a, b = vals
            row.append(fmt(b - a) if isinstance(a, (int, float)) and isinstance(b, (int, float)) else "n/a")
        rows.append(row)
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
    line = lambda r: "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
    print(line(header))
    for r in rows:
        print(line(r))
    for run, man in zip(runs, manifests):
        print(f"\n{run}: command={man['command']} seed={man.get('seed')} wall_time={man.get('wall_time')}s")
        for section, default in (("training", config_dict(TrainConfig())), ("synth", config_dict(SynthConfig()))):
            diff = config_diff(man["config"].get(section, {}), default)
            for key, old, new in diff:
                print(f"  {section}.{key}: {old} -> {new}")
            if not diff:
                print(f"  {section}: defaults")
    return EXIT_OK


HANDLERS = {"synth": cmd_synth, "extract": cmd_extract, "build-graph": cmd_build_graph,
            "train": cmd_train, "evaluate": cmd_evaluate, "ablate": cmd_ablate, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsa", description=__doc__.splitlines()[0], allow_abbrev=False,
                                epilog="Any TrainConfig/SynthConfig field can be set with --<field> <value>.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, allow_abbrev=False)
        if name == "report":
            sp.add_argument("runs", nargs="+", help="one run directory, or two to compare")
            continue
        sp.add_argument("--config", help="TOML file with [synth] / [training] sections")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default=None, help="run directory (default runs/<command>)")
        sp.add_argument("--input", help="review file, synth run directory, or train run directory")
        sp.add_argument("--variant")
        sp.add_argument("--param")
        sp.add_argument("--values")
        sp.add_argument("--dump-sequences", action="store_true",
                        help="write sequences.json with every node's Important-K / Recent-N sequence")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _set_threads() -> None:
    n = os.environ.get("LSA_NUM_THREADS")
    if n:
        import torch
        torch.set_num_threads(max(1, int(n)))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            if extra:
                raise ConfigKeyError(extra[0])
            return cmd_report(args)
        train_cfg, synth_cfg = resolve_configs(args, extra)
    except ConfigKeyError as exc:
        print(f"error: unknown configuration key {exc.key!r}", file=sys.stderr)
        return EXIT_CONFIG
    except InputMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: bad configuration value: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    _set_threads()
    out = Path(args.out or Path("runs") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        inputs = HANDLERS[args.command](args, train_cfg, synth_cfg, out)
    except InputMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BadValue as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    train_cfg = getattr(args, "effective_config", train_cfg)
    write_manifest(out, args.command, argv, train_cfg, synth_cfg, train_cfg.seed, inputs, t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
