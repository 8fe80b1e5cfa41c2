import json
import subprocess
import sys

import pytest

from eerner.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, _format, dispatch
from eerner.conll import write_corpus
from eerner.preprocess import raw_view


@pytest.fixture
def fixture_dir(tmp_path, tiny_corpus):
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    write_corpus(raw_view(tiny_corpus), data_dir / "corpus.conll", _format("pipeline", False))
    return tmp_path


def run(*argv):
    return dispatch([str(a) for a in argv])


def test_help_exits_zero(capsys):
    assert run("--help") == EXIT_OK
    assert "usage" in capsys.readouterr().out
    assert run("train", "--help") == EXIT_OK


def test_console_script_module_entry():
    proc = subprocess.run([sys.executable, "-m", "eerner.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "eerner" in proc.stdout


def test_train_decode_eval_pipeline(fixture_dir, capsys):
    data, model, pred, ev = (fixture_dir / n for n in ("data", "model", "pred", "eval"))
    assert run("train", "--input", data, "--output", model, "--epochs", 3, "--embed-dim", 4,
               "--hidden-dim", 8, "--batch-size", 2, "--seed", 1) == EXIT_OK
    assert (model / "model.npz").is_file()
    assert len((model / "train_log.jsonl").read_text().splitlines()) == 3
    assert run("decode", "--model", model, "--input", data, "--output", pred, "--tune-on", data) == EXIT_OK
    capsys.readouterr()
    assert run("eval", "--gold", data, "--pred", pred, "--output", ev) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    metrics = json.loads((ev / "metrics.json").read_text())
    assert printed == metrics and 0.0 <= metrics["f1"] <= 1.0
    manifest = json.loads((ev / "manifest.json").read_text())
    assert manifest["command"] == "eval" and manifest["result"]["f1"] == metrics["f1"]


def test_gold_against_itself_scores_one(fixture_dir, capsys):
    data = fixture_dir / "data"
    assert run("eval", "--gold", data, "--pred", data, "--output", fixture_dir / "ev") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["f1"] == 1.0
    assert run("significance", "--gold", data, "--pred-a", data, "--pred-b", data, "--iterations", 200,
               "--output", fixture_dir / "sig") == EXIT_OK
    assert json.loads((fixture_dir / "sig" / "significance.json").read_text())["significant"] is False


def test_sample_and_preprocess(fixture_dir):
    data = fixture_dir / "data"
    assert run("sample", "--input", data, "--output", fixture_dir / "s", "--scheme", "ee",
               "--budget", 3) == EXIT_OK
    stats = json.loads((fixture_dir / "s" / "stats.json").read_text())
    assert stats["n_kept"] == 3 and stats["precision"] == 1.0
    assert run("preprocess", "--input", fixture_dir / "s", "--output", fixture_dir / "p",
               "--variant", "shortest") == EXIT_OK
    assert (fixture_dir / "p" / "corpus.conll").is_file()


def test_usage_errors(fixture_dir, capsys):
    data = fixture_dir / "data"
    assert run("preprocess", "--input", data, "--output", fixture_dir / "p", "--variant", "longest") == EXIT_USAGE
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["kind"] == "usage" and "longest" in err["error"]
    assert run("train", "--input", fixture_dir / "missing.conll", "--output", fixture_dir / "m") == EXIT_USAGE
    assert run("train", "--input", data, "--output", fixture_dir / "m", "--no-such-flag") == EXIT_USAGE
    assert run("train", "--output", fixture_dir / "m") == EXIT_USAGE
    assert run("train", "--input", data, "--output", fixture_dir / "m", "--batch-size", 0) == EXIT_USAGE
    assert run() == EXIT_USAGE


def test_config_file_and_flag_precedence(fixture_dir):
    cfg = fixture_dir / "cfg.json"
    cfg.write_text(json.dumps({"input": str(fixture_dir / "data"), "epochs": 2, "embed_dim": 4,
                               "hidden_dim": 4, "lr": 0.05}))
    out = fixture_dir / "m"
    assert run("train", "--config", cfg, "--output", out, "--epochs", 1) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["epochs"] == 1 and manifest["config"]["lr"] == 0.05
    assert manifest["result"]["train_config"]["epochs"] == 1
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("train", "--config", cfg, "--output", out) == EXIT_USAGE


def test_runtime_failure_has_its_own_code(fixture_dir, capsys):
    bad = fixture_dir / "bad"
    bad.mkdir()
    (bad / "corpus.conll").write_text("tok O -\ntok L-PER -\n\n")
    assert run("train", "--input", bad, "--output", fixture_dir / "m") == EXIT_RUNTIME
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["stage"] == "read" and err["kind"] == "runtime"

