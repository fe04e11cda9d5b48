"""Multi-task objective, loss-mode ablations and the deterministic training loop."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dataset import Segment, build_atomic_target
from .diffcore import (AdamWState, GradientTape, adamw_step, add, cross_entropy, mean_kl, mse,
                       reshape, scale, value_of, weighted_mean)
from .encoder import EncoderConfig, EncoderParams, PredictionRecord, build_encoder, forward_batch, predict_batch
from .errors import ConfigError, DegenerateTargetError, InputError, NumericError
from .metrics import MetricsReport, build_report

log = logging.getLogger(__name__)

LOSS_MODES = ("kl", "mse", "complex-only")


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    loss_mode: str = "kl"
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 300
    batch_size: int = 16
    seed: int = 0
    patience: int | None = None
    target_mode: str = "weak"
    threshold: float = 0.4
    clip_norm: float | None = 1.0

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ConfigError("alpha and beta must be non-negative and not both zero")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.target_mode not in ("weak", "dense"):
            raise ConfigError("target_mode must be 'weak' or 'dense'")


def _probs(pred):
    if isinstance(pred, PredictionRecord):
        return pred.atomic_probs, pred.complex_probs
    if isinstance(pred, dict):
        return pred["atomic_probs"], pred["complex_probs"]
    return pred


def combined_loss(pred, target, c_true, cfg: TrainConfig, atomic_mask=None):
    """``alpha * L_atomic + beta * L_complex``; returns ``(total, atomic, complex)``.

    Works on single predictions or batches (leading axis), with arrays or tape
    variables. ``atomic_mask`` zeroes the atomic term for samples without a
    usable target. In ``complex-only`` mode the atomic term is 0 whatever alpha is.
    """
    if cfg.loss_mode not in LOSS_MODES:
        raise ConfigError(f"unknown loss mode {cfg.loss_mode!r}")
    atomic_p, complex_p = _probs(pred)
    target = np.asarray(target, dtype=np.float64)
    c_true = np.asarray(c_true, dtype=np.float64)
    complex_term = cross_entropy(complex_p, c_true)
    if cfg.loss_mode == "complex-only":
        atomic_term = np.asarray(0.0)
        return scale(complex_term, cfg.beta), atomic_term, complex_term
    if cfg.loss_mode == "kl":
        per = mean_kl(target, atomic_p, reduce=False)
    else:
        per = mse(atomic_p, target, reduce=False)
    per = reshape(per, (-1,))
    mask = np.ones(value_of(per).shape) if atomic_mask is None else np.asarray(atomic_mask, dtype=np.float64)
    atomic_term = weighted_mean(per, mask)
    total = add(scale(atomic_term, cfg.alpha), scale(complex_term, cfg.beta))
    return total, atomic_term, complex_term


def atomic_targets(segments, n_atomic: int, mode: str = "weak") -> tuple[np.ndarray, np.ndarray]:
    """Stacked targets plus a 0/1 mask; dense mode falls back to weak per segment."""
    targets = np.zeros((len(segments), n_atomic))
    mask = np.zeros(len(segments))
    for i, seg in enumerate(segments):
        for m in ((mode, "weak") if mode == "dense" else (mode,)):
            try:
                targets[i] = build_atomic_target(seg, m, n_atomic)
            except DegenerateTargetError:
                continue
            mask[i] = 1.0
            break
    return targets, mask


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    atomic_loss: float
    complex_loss: float
    val_char_f1: float | None
    val_atomic_accuracy: float | None
    wall_clock: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int | None = None

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainHistory":
        keys = {f.name for f in fields(EpochRecord)}
        recs = [EpochRecord(**{k: v for k, v in json.loads(ln).items() if k in keys})
                for ln in text.splitlines() if ln.strip()]
        return cls(recs)


def _coerce(field_type: str, raw: str, key: str):
    if raw.lower() in ("none", "null", ""):
        if "None" not in field_type:
            raise ConfigError(f"{key} cannot be empty")
        return None
    try:
        if field_type.startswith("int"):
            return int(raw)
        if field_type.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {field_type}") from None
    return raw


def parse_run_config(text: str) -> tuple[dict, dict]:
    """Read ``key = value`` lines into (encoder overrides, train overrides).

    Training keys are :class:`TrainConfig` field names; encoder keys carry an
    ``encoder.`` prefix (``encoder.hidden = 64``). ``#`` starts a comment and
    ``none`` clears an optional value.
    """
    enc_types = {f.name: str(f.type) for f in fields(EncoderConfig)}
    train_types = {f.name: str(f.type) for f in fields(TrainConfig)}
    enc, tr = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key.startswith("encoder."):
            name = key[len("encoder."):]
            if name not in enc_types:
                raise ConfigError(f"config line {lineno}: unknown encoder key {name!r}")
            if name in ("n_channels", "n_steps", "n_atomic", "n_complex"):
                raise ConfigError(f"config line {lineno}: {key} is taken from the data")
            enc[name] = _coerce(enc_types[name], raw, key)
        elif key in train_types:
            tr[key] = _coerce(train_types[key], raw, key)
        else:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
    return enc, tr


def format_run_config(ecfg_overrides: dict, tcfg: TrainConfig) -> str:
    lines = [f"encoder.{k} = {v}" for k, v in sorted(ecfg_overrides.items())]
    lines += [f"{k} = {'none' if v is None else v}" for k, v in asdict(tcfg).items()]
    return "\n".join(lines) + "\n"


def clip_by_global_norm(grads: dict, max_norm: float) -> dict:
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if not np.isfinite(norm) or norm <= max_norm:
        return grads
    return {k: g * (max_norm / norm) for k, g in grads.items()}


def _stack(segments, cfg: EncoderConfig):
    x = np.stack([s.window.values for s in segments])
    if x.shape[1:] != (cfg.n_channels, cfg.n_steps):
        raise InputError(f"segments have shape {x.shape[1:]}, encoder expects ({cfg.n_channels}, {cfg.n_steps})")
    return x


def train(train_segs: list[Segment], val_segs: list[Segment], ecfg: EncoderConfig,
          tcfg: TrainConfig, on_epoch=None) -> tuple[EncoderParams, TrainHistory]:
    """Mini-batch AdamW on :func:`combined_loss`.

    Returns the parameters of the epoch with the best validation CHAR F1 (ties
    broken by atomic accuracy, then earlier epoch). Without validation data
    the final epoch is returned.
    """
    if not train_segs:
        raise InputError("empty training set")
    x = _stack(train_segs, ecfg)
    y = np.eye(ecfg.n_complex)[[s.complex_label for s in train_segs]]
    targets, mask = atomic_targets(train_segs, ecfg.n_atomic, tcfg.target_mode)

    params = build_encoder(ecfg)
    state = AdamWState.for_params(params, lr=tcfg.learning_rate, weight_decay=tcfg.weight_decay)
    rng = np.random.default_rng(tcfg.seed)
    history = TrainHistory()
    best_key, best_params, stale = None, params, 0
    n = len(train_segs)

    for epoch in range(1, tcfg.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n)
        sums = np.zeros(3)
        n_batches = 0
        for b, lo in enumerate(range(0, n, tcfg.batch_size), 1):
            idx = order[lo:lo + tcfg.batch_size]
            tape = GradientTape()
            watched = tape.watch_params(params)
            out = forward_batch(watched, ecfg, x[idx])
            total, at, cx = combined_loss(out, targets[idx], y[idx], tcfg, mask[idx])
            vals = [float(value_of(v)) for v in (total, at, cx)]
            if not np.all(np.isfinite(vals)):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = tape.gradient(total, watched)
            if tcfg.clip_norm:
                grads = clip_by_global_norm(grads, tcfg.clip_norm)
            try:
                params, state = adamw_step(params, grads, state)
            except NumericError as e:
                raise NumericError(f"epoch {epoch}, batch {b}: {e}") from None
            sums += vals
            n_batches += 1
        sums /= n_batches

        f1 = acc = None
        if val_segs:
            report = evaluate(params, val_segs, tcfg.threshold)
            f1, acc = report.char_f1, report.atomic_accuracy
        rec = EpochRecord(epoch, *map(float, sums), f1, acc, time.perf_counter() - started)
        history.records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.debug("epoch %d loss %.4f f1 %s acc %s", epoch, rec.loss, f1, acc)

        key = (f1, acc) if val_segs else (epoch,)
        if best_key is None or key > best_key:
            best_key, best_params, stale = key, params, 0
            history.best_epoch = epoch
        else:
            stale += 1
            if tcfg.patience is not None and stale >= tcfg.patience:
                break
    return best_params, history


def predictions_dump(params: EncoderParams, segments: list[Segment]) -> list[dict]:
    """Raw per-window predictions, enough to recompute every metric."""
    records = predict_batch(params, [s.window for s in segments])
    return [{
        "source_id": s.source_id,
        "complex_true": int(s.complex_label),
        "complex_pred": r.complex_argmax,
        "complex_probs": r.complex_probs.tolist(),
        "atomic_probs": r.atomic_probs.tolist(),
        "atomic_truth": sorted(int(a) for a in s.weak_atomics),
    } for s, r in zip(segments, records)]


def report_from_predictions(dump: list[dict], n_complex: int, threshold: float = 0.4,
                            class_names=None, accuracy_mode: str = "recall") -> MetricsReport:
    if not dump:
        raise InputError("no predictions to evaluate")
    scored = [d for d in dump if d["atomic_truth"]]
    if not scored:
        raise InputError("no window carries atomic ground truth")
    return build_report([d["complex_pred"] for d in dump], [d["complex_true"] for d in dump], n_complex,
                        [d["atomic_probs"] for d in scored], [d["atomic_truth"] for d in scored],
                        threshold, class_names, accuracy_mode)


def evaluate(params: EncoderParams, segments: list[Segment], threshold: float = 0.4,
             class_names=None, accuracy_mode: str = "recall") -> MetricsReport:
    """Run the encoder over ``segments`` and aggregate CHAR F1 / atomic accuracy."""
    if not segments:
        raise InputError("empty evaluation set")
    return report_from_predictions(predictions_dump(params, segments), params.config.n_complex,
                                   threshold, class_names, accuracy_mode)
