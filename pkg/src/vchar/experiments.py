"""Desk-scale synthetic benchmark: loss-mode ablation over seeds."""
from __future__ import annotations

import dataclasses
import io
import time
from dataclasses import dataclass

import numpy as np

from .dataset import SynthSpec, synth_generate
from .encoder import EncoderConfig
from .training import LOSS_MODES, TrainConfig, train

BENCH_COLUMNS = ("mode", "seed", "char_f1", "atomic_accuracy", "best_epoch", "epochs_run", "wall_clock")


def desk_encoder_config(spec: SynthSpec, seed: int = 0, **overrides) -> EncoderConfig:
    """Small encoder sized for the synthetic windows (conv stride 5 keeps the LSTM short)."""
    kw = dict(n_channels=spec.n_channels, n_steps=spec.n_steps, n_atomic=spec.n_atomic,
              n_complex=spec.n_complex, stride=5, seed=seed)
    kw.update(overrides)
    return EncoderConfig(**kw)


def ablation_spec(**overrides) -> SynthSpec:
    """Weak-label benchmark with mixed-duration atomic bursts."""
    return SynthSpec(mixed_durations=True, **overrides)


@dataclass
class BenchCell:
    mode: str
    seed: int
    char_f1: float
    atomic_accuracy: float
    best_epoch: int
    epochs_run: int
    wall_clock: float

    def row(self) -> list:
        return [getattr(self, c) for c in BENCH_COLUMNS]


def run_cell(spec: SynthSpec, mode: str, seed: int, epochs: int = 100, patience: int | None = 15,
             **train_overrides) -> BenchCell:
    """Train one (loss mode, seed) cell; data and initialisation both follow ``seed``.

    The reported numbers are the held-out split's metrics at the best epoch.
    """
    spec = dataclasses.replace(spec, seed=seed)
    train_segs, test_segs = synth_generate(spec)
    tcfg = TrainConfig(loss_mode=mode, epochs=epochs, seed=seed, patience=patience, **train_overrides)
    started = time.perf_counter()
    _, history = train(train_segs, test_segs, desk_encoder_config(spec, seed), tcfg)
    best = history.records[history.best_epoch - 1]
    return BenchCell(mode, seed, best.val_char_f1, best.val_atomic_accuracy, history.best_epoch,
                     len(history.records), time.perf_counter() - started)


def run_bench(spec: SynthSpec, modes=LOSS_MODES, seeds=range(5), epochs: int = 100,
              patience: int | None = 15, on_cell=None, **train_overrides) -> list[BenchCell]:
    cells = []
    for mode in modes:
        for seed in seeds:
            cell = run_cell(spec, mode, seed, epochs, patience, **train_overrides)
            cells.append(cell)
            if on_cell is not None:
                on_cell(cell)
    return cells


def medians(cells: list[BenchCell]) -> dict:
    """``{mode: {"char_f1": median, "atomic_accuracy": median}}``, modes in first-seen order."""
    out = {}
    for mode in dict.fromkeys(c.mode for c in cells):
        sel = [c for c in cells if c.mode == mode]
        out[mode] = {"char_f1": float(np.median([c.char_f1 for c in sel])),
                     "atomic_accuracy": float(np.median([c.atomic_accuracy for c in sel])),
                     "n_seeds": len(sel)}
    return out


def bench_table(cells: list[BenchCell]) -> str:
    """Per-seed rows followed by one ``median`` row per mode, tab separated."""
    buf = io.StringIO()
    buf.write("\t".join(BENCH_COLUMNS) + "\n")
    for c in cells:
        buf.write("\t".join(_fmt(v) for v in c.row()) + "\n")
    for mode, m in medians(cells).items():
        buf.write("\t".join([mode, "median", _fmt(m["char_f1"]), _fmt(m["atomic_accuracy"]), "", "", ""]) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)
