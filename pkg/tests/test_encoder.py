import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_config
from vchar.dataset import SensorWindow
from vchar.diffcore import grad_check
from vchar.encoder import EncoderConfig, build_encoder, encoder_forward, forward_batch, layer_shapes, predict_batch
from vchar.errors import ConfigError, DimensionError
from vchar.training import TrainConfig, combined_loss


def hand_count(c, n, m, k, f, d, h):
    conv = c * f * k + c * f
    fusion = c * f * d + d
    lstm = lambda d_in: d_in * 4 * h + h * 4 * h + 4 * h
    bilstm = 2 * lstm(d)
    atomic = (2 * h * h + h) + (h * n + n)
    cplx = lstm(2 * h) + (h * m + m)
    return conv + fusion + bilstm + atomic + cplx


def test_parameter_count_matches_hand_count():
    cfg = EncoderConfig(n_channels=2, n_steps=16, n_atomic=3, n_complex=2, kernel=3, features=2, fusion=8, hidden=4)
    params = build_encoder(cfg)
    assert params.size == hand_count(2, 3, 2, 3, 2, 8, 4) == 741
    assert {k: v.shape for k, v in params.items()} == layer_shapes(cfg)


def test_build_is_seed_deterministic():
    a, b = build_encoder(tiny_config(seed=3)), build_encoder(tiny_config(seed=3))
    assert a.equals(b)
    assert not a.equals(build_encoder(tiny_config(seed=4)))


def test_init_ranges_and_forget_bias():
    cfg = tiny_config()
    p = build_encoder(cfg)
    h = cfg.hidden
    assert np.all(p["bilstm.fwd.b"][h:2 * h] == 1.0)
    assert np.all(p["complex.fwd.b"][h:2 * h] == 1.0)
    assert np.all(np.abs(p["fusion.w"]) <= 1 / np.sqrt(cfg.n_channels * cfg.features))
    assert np.all(np.abs(p["conv.w"]) <= 1 / np.sqrt(cfg.kernel))


def test_invalid_config():
    with pytest.raises(ConfigError):
        tiny_config(kernel=20)
    with pytest.raises(ConfigError):
        tiny_config(hidden=0)


def test_forward_shapes_and_cache(tiny_cfg):
    p = build_encoder(tiny_cfg)
    x = np.random.default_rng(0).normal(size=(2, 16))
    rec = encoder_forward(p, SensorWindow(x, 10.0))
    assert rec.atomic_probs.shape == (3,) and rec.complex_probs.shape == (2,)
    assert rec.complex_argmax == int(np.argmax(rec.complex_probs))
    assert rec.cache["fusion"].shape == (tiny_cfg.conv_steps, tiny_cfg.fusion)
    assert rec.cache["timeseries"].shape == (tiny_cfg.conv_steps, tiny_cfg.hidden)
    assert rec.cache["channel_features"].shape == (2 * tiny_cfg.features, tiny_cfg.conv_steps)


def test_forward_rejects_wrong_shape(tiny_cfg):
    p = build_encoder(tiny_cfg)
    with pytest.raises(DimensionError):
        encoder_forward(p, np.zeros((3, 16)))


def test_forward_is_pure(tiny_cfg):
    p = build_encoder(tiny_cfg)
    x = np.random.default_rng(1).normal(size=(2, 16))
    a, b = encoder_forward(p, x), encoder_forward(p, x)
    assert a.atomic_probs.tobytes() == b.atomic_probs.tobytes()
    assert a.complex_probs.tobytes() == b.complex_probs.tobytes()


def test_no_hidden_state_across_instances(tiny_cfg):
    p1, p2 = build_encoder(tiny_cfg), build_encoder(tiny_config(seed=9))
    xs = np.random.default_rng(2).normal(size=(4, 2, 16))
    alone = [encoder_forward(p1, x).atomic_probs for x in xs]
    mixed = []
    for x in xs:
        encoder_forward(p2, x[::-1])
        mixed.append(encoder_forward(p1, x).atomic_probs)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(alone, mixed))


def test_batch_matches_single(tiny_cfg):
    p = build_encoder(tiny_cfg)
    xs = np.random.default_rng(3).normal(size=(5, 2, 16))
    batch = predict_batch(p, list(xs), batch_size=2)
    for x, r in zip(xs, batch):
        assert np.allclose(encoder_forward(p, x).atomic_probs, r.atomic_probs, atol=1e-14)


@settings(max_examples=100)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100.0))
def test_output_simplices(seed, amplitude):
    cfg = tiny_config(seed=seed % 7)
    p = build_encoder(cfg)
    x = np.random.default_rng(seed).normal(size=(2, 16)) * amplitude
    rec = encoder_forward(p, x)
    for probs in (rec.atomic_probs, rec.complex_probs):
        assert np.all(probs >= 0)
        assert abs(probs.sum() - 1) < 1e-6


def test_channel_permutation_invariance():
    cfg = tiny_config(n_channels=3, seed=5)
    p = build_encoder(cfg)
    f = cfg.features
    perm = [2, 0, 1]
    rows = np.concatenate([np.arange(c * f, (c + 1) * f) for c in perm])
    q = p.replace({"conv.w": p["conv.w"][rows], "conv.b": p["conv.b"][rows], "fusion.w": p["fusion.w"][rows]})
    x = np.random.default_rng(6).normal(size=(3, 16))
    a, b = encoder_forward(p, x), encoder_forward(q, x[perm])
    assert np.allclose(a.atomic_probs, b.atomic_probs, atol=1e-12)
    assert np.allclose(a.complex_probs, b.complex_probs, atol=1e-12)


def _encoder_loss(cfg, x, target, c_true):
    tcfg = TrainConfig()

    def fn(p):
        out = forward_batch(p, cfg, x)
        return combined_loss(out, target, c_true, tcfg)[0]
    return fn


def test_end_to_end_gradient_full():
    cfg = tiny_config(seed=1, stride=2)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 2, 16))
    target = np.array([[0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    c_true = np.eye(2)[[0, 1]]
    assert grad_check(_encoder_loss(cfg, x, target, c_true), dict(build_encoder(cfg))) < 1e-3


def test_end_to_end_gradient_random_trials():
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(20):
        cfg = tiny_config(seed=trial, stride=int(rng.integers(1, 3)))
        x = rng.normal(size=(2, 2, 16))
        target = rng.dirichlet(np.ones(3), size=2)
        c_true = np.eye(2)[rng.integers(2, size=2)]
        fn = _encoder_loss(cfg, x, target, c_true)
        worst = max(worst, grad_check(fn, dict(build_encoder(cfg)), max_coords=6, seed=trial))
    assert worst < 1e-3
