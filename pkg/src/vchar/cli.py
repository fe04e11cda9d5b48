"""``vchar`` command line: synth, train, eval, explain, bench.

Exit codes: 0 success, 2 bad input/validation, 3 numeric failure. When
``--out`` is omitted, outputs go to ``$VCHAR_OUT/<command>`` (default root
``./vchar-out``). Every command writes a ``run.json`` run manifest next to
its outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, load as load_checkpoint, save as save_checkpoint
from .dataset import (ChannelMeta, DatasetDir, Recording, SensorWindow, SynthSpec, Vocabulary,
                      parse_segment_file, resample_linear, synth_generate)
from .encoder import EncoderConfig
from .errors import ConfigError, DimensionError, InputError, NumericError
from .experiments import ablation_spec, bench_table, desk_encoder_config, medians, run_bench
from .explain import DEFAULT_COLOR, DEFAULT_TEMPLATE, explain_window
from .training import (LOSS_MODES, TrainConfig, parse_run_config, predictions_dump, report_from_predictions,
                       train)

log = logging.getLogger("vchar")

OUT_ENV = "VCHAR_OUT"
DEFAULT_OUT_ROOT = "vchar-out"


# ---------------------------------------------------------------------------
# run manifest


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_path(path) -> str:
    """sha256 of a file, or of a directory's sorted (relative path, content) pairs.

    Run manifests inside a directory are skipped: their wall-clock field
    would otherwise make identical data hash differently.
    """
    path = Path(path)
    if path.is_file():
        return _sha256_bytes(path.read_bytes())
    h = hashlib.sha256()
    for p in sorted(q for q in path.rglob("*") if q.is_file() and q.name != "run.json"):
        h.update(p.relative_to(path).as_posix().encode() + b"\0")
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def write_atomic(path: Path, data: str | bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data, encoding="utf-8")
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def write_run_manifest(out_dir: Path, command: str, config: dict, inputs: dict, seed, outputs: list,
                       started: float) -> dict:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {k: hash_path(v) for k, v in sorted(inputs.items())},
        "seed": seed,
        "version": __version__,
        "outputs": sorted(outputs),
        "wall_clock": round(time.perf_counter() - started, 3),
    }
    write_atomic(out_dir / "run.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _out_dir(args, command: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUT_ENV, DEFAULT_OUT_ROOT)) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# config files


def load_train_config(path) -> tuple[dict, dict]:
    if path is None:
        return {}, {}
    return parse_run_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    started = time.perf_counter()
    spec = SynthSpec.from_json(Path(args.spec).read_text(encoding="utf-8")) if args.spec else SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    out = _out_dir(args, "synth")
    train_segs, test_segs = synth_generate(spec)
    atomic, cplx = spec.vocabularies()
    DatasetDir(out).write({"train": train_segs, "test": test_segs}, atomic, cplx, spec.channel_meta())
    write_atomic(out / "spec.json", spec.to_json() + "\n")
    inputs = {"spec": args.spec} if args.spec else {}
    write_run_manifest(out, "synth", json.loads(spec.to_json()), inputs, spec.seed,
                       ["atomic.vocab", "complex.vocab", "channels.tsv", "spec.json", "train/", "test/"], started)
    print(f"wrote {len(train_segs)} train / {len(test_segs)} test segments to {out}")
    return 0


def _load_splits(data: Path, val_split: str):
    ds = DatasetDir(data)
    atomic, cplx = ds.vocabularies()
    train_segs = ds.split("train")
    val_segs = ds.split(val_split) if (data / val_split / "manifest.tsv").exists() else []
    return ds, atomic, cplx, train_segs, val_segs


def _window_shape(segments):
    shapes = {s.window.values.shape for s in segments}
    if len(shapes) != 1:
        raise DimensionError(f"segments must share one (channels, samples) shape, got {sorted(shapes)}")
    return shapes.pop()


def cmd_train(args) -> int:
    started = time.perf_counter()
    data = Path(args.data)
    enc_over, train_over = load_train_config(args.config)
    for key in ("loss_mode", "seed", "epochs", "patience"):
        val = getattr(args, key)
        if val is not None:
            train_over[key] = val
    tcfg = TrainConfig(**train_over)

    ds, atomic, cplx, train_segs, val_segs = _load_splits(data, args.val_split)
    c, t = _window_shape(train_segs + val_segs)
    enc_kw = dict(n_channels=c, n_steps=t, n_atomic=len(atomic), n_complex=len(cplx), stride=5,
                  seed=tcfg.seed)
    enc_kw.update(enc_over)
    ecfg = EncoderConfig(**enc_kw)
    out = _out_dir(args, "train")

    params, history = train(train_segs, val_segs, ecfg, tcfg)
    meta = ds.channel_meta() or list(train_segs[0].window.channel_meta)
    ckpt = Checkpoint(params, atomic, cplx, meta, train_segs[0].window.sample_rate)
    save_checkpoint(out / "checkpoint.vchar", ckpt)
    write_atomic(out / "history.jsonl", history.to_jsonl())
    outputs = ["checkpoint.vchar", "history.jsonl"]
    if val_segs:
        report = report_from_predictions(predictions_dump(params, val_segs), ecfg.n_complex, tcfg.threshold,
                                         cplx.names)
        write_atomic(out / "metrics.json", report.to_json())
        write_atomic(out / "confusion.tsv", report.confusion_tsv())
        outputs += ["metrics.json", "confusion.tsv"]
        print(f"best epoch {history.best_epoch}: CHAR F1 {report.char_f1:.4f}, "
              f"atomic accuracy {report.atomic_accuracy:.4f}")
    config = {"encoder": ecfg.to_dict(), "train": asdict(tcfg), "val_split": args.val_split}
    write_run_manifest(out, "train", config, {"data": data} | ({"config": args.config} if args.config else {}),
                       tcfg.seed, outputs, started)
    return 0


def cmd_eval(args) -> int:
    started = time.perf_counter()
    ckpt = load_checkpoint(args.checkpoint)
    ds = DatasetDir(args.data)
    atomic, cplx = ds.vocabularies()
    if atomic != ckpt.atomic_vocab or cplx != ckpt.complex_vocab:
        raise DimensionError("dataset vocabularies do not match the checkpoint")
    segments = ds.split(args.split)
    shape = _window_shape(segments)
    cfg = ckpt.config
    if shape != (cfg.n_channels, cfg.n_steps):
        raise DimensionError(f"data windows are {shape}, checkpoint expects ({cfg.n_channels}, {cfg.n_steps})")
    out = _out_dir(args, "eval")
    dump = predictions_dump(ckpt.params, segments)
    report = report_from_predictions(dump, cfg.n_complex, args.threshold, cplx.names, args.accuracy_mode)
    write_atomic(out / "metrics.json", report.to_json())
    write_atomic(out / "confusion.tsv", report.confusion_tsv())
    outputs = ["metrics.json", "confusion.tsv"]
    if args.dump_predictions:
        dump_path = Path(args.dump_predictions)
        write_atomic(dump_path, "".join(json.dumps(d, sort_keys=True) + "\n" for d in dump))
        outputs.append(os.path.relpath(dump_path, out))
    config = {"split": args.split, "threshold": args.threshold, "accuracy_mode": args.accuracy_mode}
    write_run_manifest(out, "eval", config, {"checkpoint": args.checkpoint, "data": args.data},
                       ckpt.params.seed, outputs, started)
    print(f"CHAR F1 {report.char_f1:.4f}, atomic accuracy {report.atomic_accuracy:.4f} "
          f"({report.n_windows} windows)")
    return 0


def load_window(path, ckpt: Checkpoint) -> SensorWindow:
    """Read a headerless ``timestamp,ch...`` CSV and bring it to the checkpoint's rate."""
    ts, samples = parse_segment_file(Path(path).read_text(encoding="utf-8"))
    cfg = ckpt.config
    if samples.shape[0] != cfg.n_channels:
        raise DimensionError(f"window has {samples.shape[0]} channels, checkpoint expects {cfg.n_channels}")
    rate = 1.0 / float(np.median(np.diff(ts))) if ts.size > 1 else 1.0
    rate = round(rate, 6)
    if ckpt.sample_rate and abs(rate - ckpt.sample_rate) > 1e-6 * ckpt.sample_rate:
        rec = resample_linear(Recording(samples, ts, rate, [f"ch_{i}" for i in range(samples.shape[0])]),
                              ckpt.sample_rate)
        samples, rate = rec.samples, rec.sample_rate
    if samples.shape[1] != cfg.n_steps:
        raise DimensionError(f"window has {samples.shape[1]} samples, checkpoint expects {cfg.n_steps}")
    meta = ckpt.channels or [ChannelMeta(f"ch_{i}") for i in range(cfg.n_channels)]
    return SensorWindow(samples, rate, list(meta))


def cmd_explain(args) -> int:
    started = time.perf_counter()
    ckpt = load_checkpoint(args.checkpoint)
    atomic, cplx = ckpt.atomic_vocab, ckpt.complex_vocab
    if args.atomic_vocab:
        atomic = Vocabulary.from_text(Path(args.atomic_vocab).read_text(encoding="utf-8"))
    if args.complex_vocab:
        cplx = Vocabulary.from_text(Path(args.complex_vocab).read_text(encoding="utf-8"))
    template = Path(args.template).read_text(encoding="utf-8") if args.template else DEFAULT_TEMPLATE
    window = load_window(args.window, ckpt)
    window_id = args.window_id if args.window_id is not None else Path(args.window).stem
    manifest = explain_window(ckpt.params, window, atomic, cplx, window_id=window_id, template=template,
                              atomic_cutoff=args.atomic_cutoff, color=args.color)
    out = Path(args.out) if args.out else _out_dir(args, "explain") / "manifest.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_atomic(out, manifest.to_json())
    write_atomic(out.with_suffix(".txt"), manifest.prompt_text + "\n")
    inputs = {"checkpoint": args.checkpoint, "window": args.window}
    if args.template:
        inputs["template"] = args.template
    config = {"atomic_cutoff": args.atomic_cutoff, "color": args.color, "window_id": window_id}
    write_run_manifest(out.parent, "explain", config, inputs, ckpt.params.seed,
                       [out.name, out.with_suffix(".txt").name], started)
    print(manifest.prompt_text)
    return 0


def cmd_bench(args) -> int:
    started = time.perf_counter()
    if args.spec:
        spec = SynthSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    else:
        spec = ablation_spec()
    modes = args.modes.split(",")
    for m in modes:
        if m not in LOSS_MODES:
            raise ConfigError(f"unknown loss mode {m!r}; choose from {', '.join(LOSS_MODES)}")
    seeds = list(range(args.seeds))
    out = _out_dir(args, "bench")
    cells = run_bench(spec, modes, seeds, args.epochs, args.patience,
                      on_cell=lambda c: log.info("%s seed %d: f1 %.4f acc %.4f", c.mode, c.seed, c.char_f1,
                                                 c.atomic_accuracy))
    table = bench_table(cells)
    write_atomic(out / "bench.tsv", table)
    write_atomic(out / "bench_medians.json", json.dumps(medians(cells), indent=2) + "\n")
    config = {"spec": json.loads(spec.to_json()), "modes": modes, "seeds": seeds, "epochs": args.epochs,
              "patience": args.patience, "encoder": desk_encoder_config(spec).to_dict()}
    write_run_manifest(out, "bench", config, {"spec": args.spec} if args.spec else {}, seeds,
                       ["bench.tsv", "bench_medians.json"], started)
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vchar", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"vchar {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic weak-label dataset")
    p.add_argument("--spec", help="SynthSpec JSON file (defaults built in)")
    p.add_argument("--seed", type=int, help="override the SynthSpec seed")
    p.add_argument("--out", help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the encoder on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="key = value run config (training keys, encoder.* keys)")
    p.add_argument("--loss-mode", choices=LOSS_MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--val-split", default="test", help="split used for model selection and metrics.json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--accuracy-mode", choices=("recall", "precision"), default="recall")
    p.add_argument("--dump-predictions", help="write per-window predictions (JSON lines) here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="attribution, localisation and prompt for one window")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--window", required=True, help="headerless timestamp,ch... CSV")
    p.add_argument("--template", help="prompt template file")
    p.add_argument("--atomic-vocab", help="override the checkpoint's atomic vocabulary")
    p.add_argument("--complex-vocab", help="override the checkpoint's complex vocabulary")
    p.add_argument("--atomic-cutoff", type=float, default=0.4)
    p.add_argument("--color", default=DEFAULT_COLOR)
    p.add_argument("--window-id")
    p.add_argument("--out", help="manifest path; the prompt goes next to it as .txt")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("bench", help="loss-mode ablation over seeds on synthetic data")
    p.add_argument("--spec", help="SynthSpec JSON (default: mixed-duration weak-label benchmark)")
    p.add_argument("--modes", default=",".join(LOSS_MODES))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as e:
        print(f"vchar: numeric failure: {e}", file=sys.stderr)
        return 3
    except (InputError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as e:
        print(f"vchar: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
