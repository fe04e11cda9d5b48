import numpy as np

from vchar.dataset import SynthSpec
from vchar.experiments import (BENCH_COLUMNS, BenchCell, ablation_spec, bench_table, desk_encoder_config,
                               medians, run_bench)


def test_desk_config_follows_spec():
    spec = SynthSpec(segments_per_class=4)
    cfg = desk_encoder_config(spec, seed=3, hidden=8)
    assert (cfg.n_channels, cfg.n_steps, cfg.n_atomic, cfg.n_complex) == (12, 160, 9, 3)
    assert cfg.stride == 5 and cfg.seed == 3 and cfg.hidden == 8
    assert ablation_spec().mixed_durations


def test_medians_and_table():
    cells = [BenchCell("kl", s, f, a, 1, 2, 0.1) for s, (f, a) in enumerate([(1.0, 0.5), (0.8, 0.9), (0.9, 0.7)])]
    cells.append(BenchCell("mse", 0, 0.4, 0.3, 1, 1, 0.1))
    m = medians(cells)
    assert m["kl"] == {"char_f1": 0.9, "atomic_accuracy": 0.7, "n_seeds": 3}
    assert list(m) == ["kl", "mse"]
    lines = bench_table(cells).splitlines()
    assert lines[0].split("\t") == list(BENCH_COLUMNS)
    assert len(lines) == 1 + 4 + 2
    assert lines[-2].split("\t")[:4] == ["kl", "median", "0.9000", "0.7000"]


def test_tiny_bench_runs_and_is_deterministic():
    spec = SynthSpec(segments_per_class=6, segment_seconds=4.0)
    a = run_bench(spec, ("kl", "complex-only"), range(2), epochs=2, patience=None)
    b = run_bench(spec, ("kl", "complex-only"), range(2), epochs=2, patience=None)
    assert [(c.mode, c.seed) for c in a] == [("kl", 0), ("kl", 1), ("complex-only", 0), ("complex-only", 1)]
    for x, y in zip(a, b):
        assert (x.char_f1, x.atomic_accuracy, x.best_epoch) == (y.char_f1, y.atomic_accuracy, y.best_epoch)
        assert 0 <= x.char_f1 <= 1 and np.isfinite(x.atomic_accuracy) and x.epochs_run == 2
