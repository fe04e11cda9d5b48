import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from vchar.cli import hash_path, main
from vchar.explain import MANIFEST_SCHEMA
from vchar.metrics import MetricsReport
from vchar.training import report_from_predictions

SMALL_SPEC = {"segments_per_class": 8, "segment_seconds": 4.0}


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.is_file() and p.name != "run.json"}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.json"
    spec.write_text(json.dumps(SMALL_SPEC))
    assert main(["synth", "--spec", str(spec), "--out", str(root / "data")]) == 0
    assert main(["train", "--data", str(root / "data"), "--epochs", "3", "--out", str(root / "kl")]) == 0
    return root


def test_synth_layout_and_determinism(work, tmp_path):
    d = work / "data"
    for name in ("train/manifest.tsv", "test/manifest.tsv", "atomic.vocab", "complex.vocab", "run.json"):
        assert (d / name).exists()
    assert main(["synth", "--spec", str(work / "spec.json"), "--out", str(tmp_path / "again")]) == 0
    assert _files(d) == _files(tmp_path / "again")
    assert hash_path(d) == hash_path(tmp_path / "again")
    run = json.loads((d / "run.json").read_text())
    assert run["command"] == "synth" and run["seed"] == 0 and "spec" in run["inputs"]


def test_synth_bad_recipe_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"recipes": [[0, 1, 2], [3, 4, 5], [6, 7, 42]]}))
    assert main(["synth", "--spec", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "unknown atomic id 42" in capsys.readouterr().err
    assert main(["synth", "--spec", str(tmp_path / "missing.json")]) == 2


def test_train_outputs(work):
    out = work / "kl"
    for name in ("checkpoint.vchar", "history.jsonl", "metrics.json", "confusion.tsv", "run.json"):
        assert (out / name).exists()
    hist = [json.loads(ln) for ln in (out / "history.jsonl").read_text().splitlines()]
    assert [h["epoch"] for h in hist] == [1, 2, 3]
    run = json.loads((out / "run.json").read_text())
    assert run["config"]["train"]["loss_mode"] == "kl"
    assert run["inputs"]["data"] == hash_path(work / "data")


def test_train_default_epoch_budget():
    from vchar.training import TrainConfig
    assert TrainConfig().epochs == 300


def test_train_rerun_byte_identical(work, tmp_path):
    assert main(["train", "--data", str(work / "data"), "--epochs", "3", "--out", str(tmp_path / "kl2")]) == 0
    for name in ("metrics.json", "checkpoint.vchar", "confusion.tsv"):
        assert (tmp_path / "kl2" / name).read_bytes() == (work / "kl" / name).read_bytes()


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flatten(v, f"{prefix}{k}."))
        else:
            out[prefix + k] = v
    return out


def test_loss_modes_differ_only_in_loss_mode(work, tmp_path):
    assert main(["train", "--data", str(work / "data"), "--epochs", "3", "--loss-mode", "complex-only",
                 "--out", str(tmp_path / "co")]) == 0
    a = _flatten(json.loads((work / "kl" / "run.json").read_text()))
    b = _flatten(json.loads((tmp_path / "co" / "run.json").read_text()))
    diff = {k for k in a.keys() | b.keys() if a.get(k) != b.get(k)} - {"wall_clock"}
    assert diff == {"config.train.loss_mode"}


def test_train_config_file_and_errors(work, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny\nbatch_size = 4\nencoder.hidden = 6\n")
    assert main(["train", "--data", str(work / "data"), "--config", str(cfg), "--epochs", "1",
                 "--out", str(tmp_path / "t")]) == 0
    run = json.loads((tmp_path / "t" / "run.json").read_text())
    assert run["config"]["encoder"]["hidden"] == 6 and run["config"]["train"]["batch_size"] == 4
    assert "config" in run["inputs"]
    cfg.write_text("bogus = 1\n")
    assert main(["train", "--data", str(work / "data"), "--config", str(cfg), "--out", str(tmp_path / "u")]) == 2
    assert main(["train", "--data", str(tmp_path / "nodata"), "--out", str(tmp_path / "v")]) == 2


def test_train_numeric_failure_exits_3(work, tmp_path, capsys):
    cfg = tmp_path / "blowup.cfg"
    cfg.write_text("learning_rate = 1e300\nclip_norm = none\n")
    with np.errstate(all="ignore"):
        code = main(["train", "--data", str(work / "data"), "--config", str(cfg), "--epochs", "3",
                     "--out", str(tmp_path / "t")])
    assert code == 3
    assert "epoch" in capsys.readouterr().err


def test_eval(work, tmp_path):
    before = hash_path(work / "data")
    dump = tmp_path / "preds.jsonl"
    assert main(["eval", "--checkpoint", str(work / "kl" / "checkpoint.vchar"), "--data", str(work / "data"),
                 "--dump-predictions", str(dump), "--out", str(tmp_path / "ev")]) == 0
    text = (tmp_path / "ev" / "metrics.json").read_text()
    report = MetricsReport.from_dict(json.loads(text))
    assert json.loads(text)["threshold"] == 0.4
    rows = [ln.split("\t")[1:] for ln in (tmp_path / "ev" / "confusion.tsv").read_text().splitlines()[1:]]
    for row, counts in zip(rows, report.counts):
        if sum(counts):
            assert sum(float(v) for v in row) == pytest.approx(1.0, abs=1e-9)
    recs = [json.loads(ln) for ln in dump.read_text().splitlines()]
    again = report_from_predictions(recs, len(report.counts), 0.4, report.class_names)
    assert again.to_json() == text
    # same checkpoint and data as training-time validation
    assert text == (work / "kl" / "metrics.json").read_text()
    assert hash_path(work / "data") == before


def test_eval_mismatch_exits_2(work, tmp_path):
    other = tmp_path / "other"
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps(dict(SMALL_SPEC, segment_seconds=5.0)))
    assert main(["synth", "--spec", str(spec), "--out", str(other)]) == 0
    assert main(["eval", "--checkpoint", str(work / "kl" / "checkpoint.vchar"), "--data", str(other),
                 "--out", str(tmp_path / "ev")]) == 2


def _window_file(work):
    return sorted((work / "data" / "test").glob("*.csv"))[0]


def test_explain(work, tmp_path):
    win = _window_file(work)
    args = ["explain", "--checkpoint", str(work / "kl" / "checkpoint.vchar"), "--window", str(win)]
    assert main(args + ["--out", str(tmp_path / "a" / "manifest.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "b" / "manifest.json")]) == 0
    text = (tmp_path / "a" / "manifest.json").read_text()
    assert text == (tmp_path / "b" / "manifest.json").read_text()
    doc = json.loads(text)
    jsonschema.validate(doc, MANIFEST_SCHEMA)
    assert doc["window_id"] == win.stem
    prompt = (tmp_path / "a" / "manifest.txt").read_text().strip()
    assert prompt == doc["prompt_text"]
    assert f'complex activity "{doc["complex"]["name"]}"' in prompt
    if doc["atomic"]:
        assert prompt.startswith("Someone is ")


def test_explain_vocab_mismatch_exits_2(work, tmp_path):
    vocab = tmp_path / "atomic.vocab"
    vocab.write_text("only\ntwo\n")
    assert main(["explain", "--checkpoint", str(work / "kl" / "checkpoint.vchar"), "--window",
                 str(_window_file(work)), "--atomic-vocab", str(vocab), "--out", str(tmp_path / "m.json")]) == 2


def test_explain_template_error_exits_2(work, tmp_path):
    tpl = tmp_path / "t.txt"
    tpl.write_text("{nonsense}")
    assert main(["explain", "--checkpoint", str(work / "kl" / "checkpoint.vchar"), "--window",
                 str(_window_file(work)), "--template", str(tpl), "--out", str(tmp_path / "m.json")]) == 2


def test_bench(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"segments_per_class": 4, "segment_seconds": 4.0, "mixed_durations": True}))
    assert main(["bench", "--spec", str(spec), "--modes", "kl,mse", "--seeds", "2", "--epochs", "1",
                 "--out", str(tmp_path / "b")]) == 0
    lines = (tmp_path / "b" / "bench.tsv").read_text().splitlines()
    assert len(lines) == 1 + 4 + 2
    med = json.loads((tmp_path / "b" / "bench_medians.json").read_text())
    assert set(med) == {"kl", "mse"}
    assert main(["bench", "--modes", "kl,hinge", "--out", str(tmp_path / "c")]) == 2


def test_default_output_root_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("VCHAR_OUT", str(tmp_path / "root"))
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps(SMALL_SPEC))
    assert main(["synth", "--spec", str(spec)]) == 0
    assert (tmp_path / "root" / "synth" / "train" / "manifest.tsv").exists()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "vchar", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("vchar ")
