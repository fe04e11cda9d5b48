import math

import numpy as np
import pytest

from conftest import tiny_config
from vchar.dataset import SensorWindow, Segment, SynthSpec, synth_generate
from vchar.diffcore import GradientTape
from vchar.encoder import build_encoder, forward_batch
from vchar.errors import ConfigError, NumericError
from vchar.metrics import atomic_accuracy, macro_f1
from vchar.training import (TrainConfig, TrainHistory, atomic_targets, clip_by_global_norm, combined_loss,
                            evaluate, format_run_config, parse_run_config, predictions_dump,
                            report_from_predictions, train)

TARGET = np.array([0.5, 0.5, 0.0, 0.0])
UNIFORM = np.full(4, 0.25)
Y = np.array([0.1, 0.8, 0.1])
C = np.array([0.0, 1.0, 0.0])


def test_combined_loss_worked_example():
    total, atomic, cplx = combined_loss((UNIFORM, Y), TARGET, C, TrainConfig())
    assert float(total) == pytest.approx(0.3964304, abs=1e-6)
    assert float(total) == pytest.approx(math.log(2) / 4 - math.log(0.8), abs=1e-15)
    assert float(atomic) == pytest.approx(0.1732868, abs=1e-6)
    assert float(cplx) == pytest.approx(0.2231436, abs=1e-6)


def test_alpha_zero_is_pure_cross_entropy():
    total, _, cplx = combined_loss((UNIFORM, Y), TARGET, C, TrainConfig(alpha=0.0, beta=1.7))
    assert float(total) == 1.7 * float(cplx)


def test_perfect_prediction_zero_loss():
    total, _, _ = combined_loss((TARGET, C), TARGET, C, TrainConfig())
    assert float(total) == 0.0


@pytest.mark.parametrize("mode", ["kl", "mse"])
def test_linear_in_weights(mode):
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.uniform(0, 3, size=2)
        p, t = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        y = rng.dirichlet(np.ones(3))
        one = combined_loss((p, y), t, C, TrainConfig(alpha=a, beta=b, loss_mode=mode))
        two = combined_loss((p, y), t, C, TrainConfig(alpha=2 * a, beta=b, loss_mode=mode))
        assert abs(float(two[0]) - float(one[0]) - a * float(one[1])) < 1e-9


def test_mse_mode_and_complex_only():
    _, atomic, _ = combined_loss((UNIFORM, Y), TARGET, C, TrainConfig(loss_mode="mse"))
    assert float(atomic) == pytest.approx(((0.25 ** 2) * 2 + (0.25 ** 2) * 2) / 4)
    total, atomic, cplx = combined_loss((UNIFORM, Y), TARGET, C, TrainConfig(loss_mode="complex-only", alpha=5.0))
    assert float(atomic) == 0.0 and float(total) == float(cplx)


def test_invalid_configs():
    with pytest.raises(ConfigError):
        TrainConfig(loss_mode="hinge")
    with pytest.raises(ConfigError):
        TrainConfig(alpha=0.0, beta=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(alpha=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def test_alpha_zero_atomic_head_gradients_vanish(tiny_cfg):
    p = build_encoder(tiny_cfg)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 2, 16))
    tape = GradientTape()
    w = tape.watch_params(p)
    out = forward_batch(w, tiny_cfg, x)
    total, _, _ = combined_loss(out, rng.dirichlet(np.ones(3), size=3), np.eye(2)[[0, 1, 1]], TrainConfig(alpha=0.0))
    grads = tape.gradient(total, w)
    for name in ("atomic.hidden.w", "atomic.hidden.b", "atomic.out.w", "atomic.out.b"):
        assert np.all(grads[name] == 0.0)
    assert np.any(grads["complex.out.w"] != 0.0)


def test_atomic_mask_drops_samples():
    p = np.array([[0.25] * 4, [0.7, 0.1, 0.1, 0.1]])
    t = np.array([TARGET, TARGET])
    y = np.array([Y, Y])
    c = np.array([C, C])
    _, masked, _ = combined_loss((p, y), t, c, TrainConfig(), atomic_mask=[1.0, 0.0])
    assert float(masked) == pytest.approx(0.1732868 / 2, abs=1e-6)


def test_atomic_targets_dense_fallback():
    seg_dense = Segment(SensorWindow(np.zeros((1, 4)), 1.0), 0, {0, 1}, np.array([0, 0, 0, 1]))
    seg_weak = Segment(SensorWindow(np.zeros((1, 4)), 1.0), 0, {2})
    targets, mask = atomic_targets([seg_dense, seg_weak], 3, "dense")
    assert targets.tolist() == [[0.75, 0.25, 0.0], [0.0, 0.0, 1.0]]
    assert mask.tolist() == [1.0, 1.0]


def test_clip_by_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    out = clip_by_global_norm(g, 1.0)
    assert out["a"][0] == pytest.approx(0.6) and out["b"][0] == pytest.approx(0.8)
    assert clip_by_global_norm(g, 10.0) is g


# ---------------------------------------------------------------------------
# training loop


def _small_data(seed=0, noise=0.1, per_class=12):
    spec = SynthSpec(segments_per_class=per_class, seed=seed, noise_sigma=noise)
    return spec, *synth_generate(spec)


def _desk_cfg(spec, seed=0):
    return tiny_config(n_channels=spec.n_channels, n_steps=spec.n_steps, n_atomic=spec.n_atomic,
                       n_complex=spec.n_complex, kernel=5, features=2, fusion=8, hidden=8, stride=5, seed=seed)


def test_training_is_deterministic():
    spec, tr, te = _small_data()
    runs = [train(tr, te, _desk_cfg(spec), TrainConfig(epochs=3, seed=2)) for _ in range(2)]
    (p1, h1), (p2, h2) = runs
    assert p1.equals(p2)
    strip = lambda h: [(r.epoch, r.loss, r.atomic_loss, r.complex_loss, r.val_char_f1, r.val_atomic_accuracy)
                       for r in h.records]
    assert strip(h1) == strip(h2)
    assert h1.best_epoch == h2.best_epoch


def test_best_checkpoint_selection():
    spec, tr, te = _small_data(seed=1)
    params, hist = train(tr, te, _desk_cfg(spec), TrainConfig(epochs=6))
    best = max(hist.column("val_char_f1"))
    assert hist.records[hist.best_epoch - 1].val_char_f1 == best
    assert evaluate(params, te).char_f1 == best


def test_complex_only_history_has_zero_atomic_column():
    spec, tr, te = _small_data()
    _, hist = train(tr, te, _desk_cfg(spec), TrainConfig(epochs=2, loss_mode="complex-only"))
    assert hist.column("atomic_loss") == [0.0, 0.0]


def test_patience_stops_early():
    spec, tr, te = _small_data()
    _, hist = train(tr, te[:3], _desk_cfg(spec), TrainConfig(epochs=50, patience=2))
    assert len(hist.records) < 50
    assert len(hist.records) - hist.best_epoch == 2


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_training_lowers_loss(seed):
    spec, tr, _ = _small_data(seed=seed, noise=0.0, per_class=20)
    _, hist = train(tr, [], _desk_cfg(spec, seed), TrainConfig(epochs=15, seed=seed))
    assert hist.records[-1].loss < hist.records[0].loss
    assert hist.best_epoch == 15


def test_non_finite_loss_names_epoch_and_batch():
    spec, tr, te = _small_data()
    tr[0].window.values[0, 0] = np.nan
    with pytest.raises(NumericError, match=r"epoch 1.*batch \d+"):
        train(tr, te, _desk_cfg(spec), TrainConfig(epochs=1))


def test_dense_target_mode_trains():
    spec, tr, te = _small_data()
    _, hist = train(tr, te, _desk_cfg(spec), TrainConfig(epochs=1, target_mode="dense"))
    assert np.isfinite(hist.records[0].loss)


def test_history_jsonl_round_trip():
    spec, tr, te = _small_data()
    _, hist = train(tr, te, _desk_cfg(spec), TrainConfig(epochs=2))
    again = TrainHistory.from_jsonl(hist.to_jsonl())
    assert again.records == hist.records


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_order_invariant_and_recomputable():
    spec, tr, te = _small_data()
    params = build_encoder(_desk_cfg(spec))
    a = evaluate(params, te)
    b = evaluate(params, te[::-1])
    assert a.char_f1 == b.char_f1 and a.atomic_accuracy == pytest.approx(b.atomic_accuracy, abs=1e-15)

    dump = predictions_dump(params, te)
    # independent recomputation from the raw dump
    f1 = macro_f1([d["complex_pred"] for d in dump], [d["complex_true"] for d in dump], spec.n_complex)
    acc = np.mean([np.mean([d["atomic_probs"][i] > 0.4 for i in d["atomic_truth"]]) for d in dump])
    assert a.char_f1 == pytest.approx(f1, abs=1e-12)
    assert a.atomic_accuracy == pytest.approx(acc, abs=1e-12)
    assert report_from_predictions(dump, spec.n_complex).to_dict() == a.to_dict()
    assert atomic_accuracy([d["atomic_probs"] for d in dump], [d["atomic_truth"] for d in dump]) == a.atomic_accuracy


def test_memorised_single_segment_scores_one():
    spec, tr, _ = _small_data(noise=0.0)
    one = [tr[0]]
    params, _ = train(one, one, _desk_cfg(spec), TrainConfig(epochs=40, learning_rate=1e-2, patience=5))
    assert evaluate(params, one).char_f1 == 1.0


# ---------------------------------------------------------------------------
# run config text


def test_run_config_parse_and_format():
    enc, tr = parse_run_config("# desk run\nlearning_rate = 0.002\npatience = none\nencoder.hidden=16\n\nloss_mode = mse\n")
    assert enc == {"hidden": 16}
    assert tr == {"learning_rate": 0.002, "patience": None, "loss_mode": "mse"}
    cfg = TrainConfig(**tr)
    enc2, tr2 = parse_run_config(format_run_config(enc, cfg))
    assert enc2 == enc and TrainConfig(**tr2) == cfg


@pytest.mark.parametrize("text", ["bogus = 1", "encoder.n_steps = 4", "epochs = many", "alpha", "encoder.nope = 1",
                                  "epochs = none"])
def test_run_config_errors(text):
    with pytest.raises(ConfigError):
        parse_run_config(text)
