import json

import pytest

from lsa_rec.cli import main

SYNTH = ["--n_users", "25", "--n_items", "12", "--n_aspects", "8", "--interactions_per_user", "6",
         "--n_topics", "2"]
TRAIN = ["--K", "3", "--N", "2", "--d", "4", "--L", "1", "--H", "2", "--k_fm", "2", "--max_epochs", "1",
         "--min_freq", "1"]


@pytest.fixture(scope="module")
def synth_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "synth"
    assert main(["synth", "--seed", "2", "--out", str(out)] + SYNTH) == 0
    return out


@pytest.fixture(scope="module")
def train_run(synth_run):
    out = synth_run.parent / "train"
    assert main(["train", "--input", str(synth_run), "--seed", "2", "--out", str(out)] + TRAIN) == 0
    return out


def test_synth_writes_corpus_truth_and_manifest(synth_run):
    assert (synth_run / "reviews.jsonl").is_file() and (synth_run / "truth.json").is_file()
    man = json.loads((synth_run / "manifest.json").read_text())
    assert man["command"] == "synth" and man["seed"] == 2
    assert man["config"]["synth"]["n_users"] == 25


def test_extract_and_build_graph(synth_run, tmp_path):
    assert main(["extract", "--input", str(synth_run), "--out", str(tmp_path / "x"), "--min_freq", "1"]) == 0
    assert (tmp_path / "x" / "mentions.jsonl").is_file() and (tmp_path / "x" / "vocab.json").is_file()
    assert main(["build-graph", "--input", str(synth_run / "reviews.jsonl"), "--out", str(tmp_path / "g"),
                 "--dump-sequences"] + TRAIN) == 0
    seqs = json.loads((tmp_path / "g" / "sequences.json").read_text())["sequences"]
    assert seqs and all(len(s["long"]["aspects"]) <= 3 for s in seqs)


def test_train_and_evaluate_pipeline(train_run, tmp_path):
    assert (train_run / "model" / "checkpoint.pt").is_file()
    assert len((train_run / "train_log.jsonl").read_text().splitlines()) == 1
    runs = []
    for name in ("a", "b"):
        assert main(["evaluate", "--input", str(train_run), "--out", str(tmp_path / name)]) == 0
        runs.append(tmp_path / name)
    a, b = ((r / "metrics.json").read_bytes() for r in runs)
    assert a == b
    metrics = json.loads(a)
    assert metrics["config"]["d"] == 4
    man = json.loads((runs[0] / "manifest.json").read_text())
    assert man["config"]["training"]["d"] == 4
    assert all(len(h) == 64 for h in man["inputs"].values())
    assert (runs[0] / "predictions.csv").read_text().startswith("user,item,true_rating")


def test_ablate_echoes_variant(synth_run, tmp_path):
    out = tmp_path / "abl"
    assert main(["ablate", "--input", str(synth_run), "--variant", "no_short", "--out", str(out)] + TRAIN) == 0
    assert json.loads((out / "metrics.json").read_text())["variant"] == "no_short"


def test_sweep_three_rows_and_plot(synth_run, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--input", str(synth_run), "--param", "N", "--values", "1,2,3", "--out", str(out)]
                + TRAIN) == 0
    assert len((out / "sweep.csv").read_text().splitlines()) == 4
    assert (out / "sweep.png").stat().st_size > 0


def test_report_with_delta(train_run, tmp_path, capsys):
    for name in ("a", "b"):
        main(["evaluate", "--input", str(train_run), "--out", str(tmp_path / name)])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "a"), str(tmp_path / "b")]) == 0
    out = capsys.readouterr().out
    header, mse = out.splitlines()[:2]
    assert "delta" in header and mse.startswith("MSE") and mse.rstrip().endswith("0.0000")
    assert "training.d: 64 -> 4" in out


@pytest.mark.parametrize("argv", [["train", "--bogus", "1"], ["synth", "--n_users", "zero"],
                                  ["sweep", "--param", "d", "--values", "1", "--input", "."]])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_toml_section_exits_2(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[nonsense]\nx = 1\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_toml_sections_apply(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[synth]\nn_users = 5\nn_items = 4\nn_aspects = 4\nn_topics = 2\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert json.loads((tmp_path / "s" / "manifest.json").read_text())["config"]["synth"]["n_users"] == 5


def test_missing_input_exits_3(tmp_path, capsys):
    assert main(["train", "--input", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")]) == 3
    assert "nope.jsonl" in capsys.readouterr().err
    assert main(["evaluate", "--input", str(tmp_path), "--out", str(tmp_path / "o")]) == 3


def test_report_on_corrupt_manifest_exits_3(tmp_path, capsys):
    run = tmp_path / "run"
    run.mkdir()
    (run / "manifest.json").write_text("{truncated")
    assert main(["report", str(run)]) == 3
    assert "manifest.json" in capsys.readouterr().err
