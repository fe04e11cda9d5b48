"""Sensor attribution, temporal localisation and the explanation manifest/prompt.

The manifest is the structured hand-off to a downstream generative decoder:
what was recognised, when the atomic activities happened, which sensor drove
the decision, and a rendered text prompt.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .dataset import SensorWindow
from .diffcore import GradientTape, take, total
from .encoder import EncoderParams, PredictionRecord, encoder_forward, stem, trunk
from .errors import LabelError, SchemaError, TemplateError

SCHEMA_VERSION = "1.0"
DEFAULT_COLOR = "yellow"
DEFAULT_TEMPLATE = '[Someone is {atomic}, ]complex activity "{complex}"[, highlight the {sensor-location} sensor in {color}]'
PLACEHOLDERS = ("atomic", "complex", "sensor-location", "color")
ATTRIBUTION_METHODS = ("gradcam", "activation")
RELEVANCE_MODES = ("gradcam", "weights_activations", "weights")
GRADCAM_OUTPUTS = ("prob", "logit")


@dataclass
class AttributionReport:
    scores: dict  # sensor id -> score in [0, 1], in channel order
    target: tuple
    method: str = "gradcam"
    degenerate: bool = False

    @classmethod
    def from_raw(cls, raw: dict, target=("complex", 0), method="gradcam") -> "AttributionReport":
        """Max-normalise non-negative raw per-sensor values."""
        vals = np.maximum(np.array(list(raw.values()), dtype=np.float64), 0.0)
        peak = vals.max() if vals.size else 0.0
        if peak <= 0 or not np.isfinite(peak):
            return cls({k: 0.0 for k in raw}, tuple(target), method, True)
        return cls({k: float(v / peak) for k, v in zip(raw, vals)}, tuple(target), method, False)

    def top(self) -> str | None:
        if self.degenerate:
            return None
        return max(self.scores, key=self.scores.get)


def _sensor_groups(window: SensorWindow, n_channels: int):
    meta = window.channel_meta if getattr(window, "channel_meta", None) else None
    ids = [m.sensor_id for m in meta] if meta else [f"ch_{c}" for c in range(n_channels)]
    groups = {}
    for c, sid in enumerate(ids):
        groups.setdefault(sid, []).append(c)
    return groups


def _check_target(target, cfg):
    kind, idx = target
    limit = {"atomic": cfg.n_atomic, "complex": cfg.n_complex}.get(kind)
    if limit is None:
        raise LabelError(f"target kind must be 'atomic' or 'complex', got {kind!r}")
    if not 0 <= idx < limit:
        raise LabelError(f"{kind} target {idx} outside [0, {limit})")
    return kind, int(idx)


def channel_gradcam(params: EncoderParams, values: np.ndarray, target, output: str = "prob") -> np.ndarray:
    """Grad-CAM map over the per-channel feature maps, shape ``(C, T')``.

    Feature-map weights are the time-averaged gradients of the target output
    (its softmax probability by default, or the pre-softmax ``"logit"``); the
    map is the rectified weighted sum of activations. The probability
    gradient discounts evidence that also raises competing classes, which on
    multi-label windows is what separates the target's own sensor from its
    neighbours.
    """
    cfg = params.config
    kind, idx = _check_target(target, cfg)
    if output not in GRADCAM_OUTPUTS:
        raise ValueError(f"output must be one of {GRADCAM_OUTPUTS}")
    feats = stem(params, cfg, values[None])
    tape = GradientTape()
    fv = tape.watch(feats)
    out = trunk(params, cfg, fv)
    key = f"{kind}_probs" if output == "prob" else f"{kind}_logits"
    grad = tape.backward(total(take(out[key], idx, axis=1)))[fv.index]
    c, f = cfg.n_channels, cfg.features
    acts = feats[0].reshape(c, f, -1)
    if grad is None:
        return np.zeros((c, acts.shape[-1]))
    weights = grad[0].reshape(c, f, -1).mean(axis=-1)
    return np.maximum((weights[:, :, None] * acts).sum(axis=1), 0.0)


def sensor_attribution(params: EncoderParams, window, target, method: str = "gradcam",
                       output: str = "prob") -> AttributionReport:
    """Per-sensor contribution to ``target`` (``("complex", c)`` or ``("atomic", a)``).

    Channel scores are the time-summed Grad-CAM map (or, with
    ``method="activation"``, the mean feature activation); a sensor's score is
    the mean over its channels, then everything is max-normalised. All-zero
    scores come back flagged ``degenerate``.
    """
    if method not in ATTRIBUTION_METHODS:
        raise ValueError(f"method must be one of {ATTRIBUTION_METHODS}")
    cfg = params.config
    values = window.values if isinstance(window, SensorWindow) else np.asarray(window, dtype=np.float64)
    target = _check_target(target, cfg)
    if method == "gradcam":
        per_channel = channel_gradcam(params, values, target, output).sum(axis=1)
    else:
        feats = stem(params, cfg, values[None])[0]
        per_channel = feats.reshape(cfg.n_channels, cfg.features, -1).mean(axis=(1, 2))
    groups = _sensor_groups(window, cfg.n_channels)
    raw = {sid: float(per_channel[chs].mean()) for sid, chs in groups.items()}
    return AttributionReport.from_raw(raw, target, method)


@dataclass
class TemporalInterval:
    atomic: int
    start_s: float
    end_s: float
    confidence: float


def atomic_relevance(params: EncoderParams, window, atomic: int, mode: str = "gradcam",
                     pred: PredictionRecord | None = None) -> np.ndarray:
    """Per-step relevance (length ``T'``) of one atomic output.

    ``gradcam``: the Grad-CAM map for the atomic's probability summed over
    channels. It is read before the recurrent layers, so step ``t`` really
    refers to input samples around ``t * stride``.
    ``weights_activations``: time-series-layer activations composed with the
    atomic head's weights, ``max(0, ts_t . (W[:, a] - W p))``. This is the
    step-wise term of the probability gradient; it is cheap but the
    bidirectional recurrence spreads evidence over the whole window.
    ``weights``: magnitude of the connection weights alone, constant in time
    because the weights are shared across steps.
    """
    cfg = params.config
    if not 0 <= atomic < cfg.n_atomic:
        raise LabelError(f"atomic id {atomic} outside [0, {cfg.n_atomic})")
    if mode not in RELEVANCE_MODES:
        raise ValueError(f"mode must be one of {RELEVANCE_MODES}")
    if mode == "gradcam":
        values = window.values if isinstance(window, SensorWindow) else np.asarray(window, dtype=np.float64)
        return channel_gradcam(params, values, ("atomic", atomic)).sum(axis=0)
    if pred is None:
        pred = encoder_forward(params, window)
    w = params["atomic.out.w"]
    ts = pred.cache["timeseries"]
    if mode == "weights":
        return np.full(ts.shape[0], np.abs(w[:, atomic]).sum())
    return np.maximum(ts @ (w[:, atomic] - w @ pred.atomic_probs), 0.0)


def intervals_from_relevance(relevance, sample_rate: float, stride: int = 1, kernel: int = 1,
                             window_seconds: float | None = None, threshold: float = 0.5,
                             smooth: bool = False, atomic: int = 0) -> list[TemporalInterval]:
    """Maximal runs with ``relevance >= threshold * peak``, converted to seconds.

    Step ``t`` covers input samples ``[t*stride, t*stride + kernel)``.
    """
    r = np.asarray(relevance, dtype=np.float64)
    if smooth and r.size >= 3:
        r = np.convolve(np.pad(r, 1, mode="edge"), np.ones(3) / 3, mode="valid")
    peak = r.max() if r.size else 0.0
    if not peak > 0:
        return []
    if window_seconds is None:
        window_seconds = ((r.size - 1) * stride + kernel) / sample_rate
    above = r >= threshold * peak
    out = []
    t = 0
    while t < r.size:
        if not above[t]:
            t += 1
            continue
        start = t
        while t + 1 < r.size and above[t + 1]:
            t += 1
        s = start * stride / sample_rate
        e = min((t * stride + kernel) / sample_rate, window_seconds)
        out.append(TemporalInterval(atomic, float(s), float(e), float(r[start:t + 1].mean() / peak)))
        t += 1
    return out


def dominant_interval(intervals) -> TemporalInterval | None:
    """Interval carrying the most relevance mass (mean relative relevance x duration)."""
    if not intervals:
        return None
    return max(intervals, key=lambda iv: (iv.confidence * (iv.end_s - iv.start_s), -iv.start_s))


def temporal_localization(params: EncoderParams, window, atomic: int, mode: str = "gradcam",
                          threshold: float = 0.5, smooth: bool = False,
                          pred: PredictionRecord | None = None) -> list[TemporalInterval]:
    """Intervals of ``window`` most responsible for the atomic's predicted probability."""
    cfg = params.config
    rel = atomic_relevance(params, window, atomic, mode, pred)
    rate = window.sample_rate if isinstance(window, SensorWindow) else 1.0
    return intervals_from_relevance(rel, rate, cfg.stride, cfg.kernel, cfg.n_steps / rate, threshold,
                                    smooth, atomic)


# ---------------------------------------------------------------------------
# manifest + prompt


@dataclass
class ExplanationManifest:
    window_id: str
    complex: dict
    atomic: list
    sensors: list
    highlight_color: str = DEFAULT_COLOR
    template: str = DEFAULT_TEMPLATE
    prompt_text: str = ""
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "window_id": self.window_id,
            "complex": self.complex,
            "atomic": self.atomic,
            "sensors": self.sensors,
            "highlight_color": self.highlight_color,
            "template": self.template,
            "prompt_text": self.prompt_text,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExplanationManifest":
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported manifest schema {d.get('schema_version')!r}")
        try:
            return cls(d["window_id"], d["complex"], d["atomic"], d["sensors"], d["highlight_color"],
                       d["template"], d["prompt_text"], d["schema_version"])
        except KeyError as e:
            raise SchemaError(f"manifest missing field {e}") from None


_GROUP = re.compile(r"\[([^\[\]]*)\]")
_FIELD = re.compile(r"\{([^{}]*)\}")


def _check_placeholders(template: str):
    for name in _FIELD.findall(template):
        if name not in PLACEHOLDERS:
            raise TemplateError(f"unknown placeholder {{{name}}}; allowed: {', '.join(PLACEHOLDERS)}")


def render_prompt(manifest: ExplanationManifest, template: str | None = None) -> str:
    """Fill ``{atomic}``, ``{complex}``, ``{sensor-location}`` and ``{color}``.

    Text inside ``[...]`` is kept only when every placeholder in it is
    non-empty, so e.g. the atomic clause disappears when nothing passed the
    probability cutoff.
    """
    template = manifest.template if template is None else template.rstrip("\n")
    _check_placeholders(template)
    values = {
        "atomic": " and ".join(a["name"] for a in manifest.atomic),
        "complex": manifest.complex["name"],
        "sensor-location": " and ".join(s["location"] or s["id"] for s in manifest.sensors if s["highlight"]),
        "color": manifest.highlight_color,
    }

    def fill(text):
        return _FIELD.sub(lambda m: values[m.group(1)], text)

    def group(m):
        inner = m.group(1)
        if any(not values[name] for name in _FIELD.findall(inner)):
            return ""
        return fill(inner)

    return fill(_GROUP.sub(group, template))


def build_manifest(pred: PredictionRecord, attr: AttributionReport, intervals, atomic_vocab, complex_vocab,
                   sensor_locations: dict, atomic_cutoff: float = 0.4, highlight_cutoff: float = 1.0,
                   window_id: str = "", template: str = DEFAULT_TEMPLATE,
                   color: str = DEFAULT_COLOR) -> ExplanationManifest:
    """Assemble the manifest; atomic entries need ``p > atomic_cutoff``.

    Sensors with ``score >= highlight_cutoff`` are flagged; scores are
    max-normalised, so the default cutoff of 1.0 flags the top sensor only.
    """
    n, m = len(pred.atomic_probs), len(pred.complex_probs)
    if n != len(atomic_vocab) or m != len(complex_vocab):
        raise SchemaError(f"prediction sizes ({n}, {m}) do not match vocabularies "
                          f"({len(atomic_vocab)}, {len(complex_vocab)})")
    unknown = [s for s in attr.scores if s not in sensor_locations]
    if unknown:
        raise SchemaError(f"sensors without a location entry: {unknown}")
    template = template.rstrip("\n")
    _check_placeholders(template)

    by_atomic = {}
    for iv in intervals:
        best = by_atomic.get(iv.atomic)
        if best is None or iv.confidence > best.confidence:
            by_atomic[iv.atomic] = iv
    probs = np.asarray(pred.atomic_probs)
    order = sorted(np.nonzero(probs > atomic_cutoff)[0].tolist(), key=lambda a: (-probs[a], a))
    atomic = []
    for a in order:
        iv = by_atomic.get(a)
        atomic.append({
            "name": atomic_vocab.name(a),
            "probability": float(probs[a]),
            "interval": None if iv is None else {"start_s": iv.start_s, "end_s": iv.end_s},
        })
    c = int(pred.complex_argmax)
    sensors = [{"id": sid, "location": sensor_locations[sid], "score": float(score),
                "highlight": bool(score > 0 and score >= highlight_cutoff)}
               for sid, score in attr.scores.items()]
    manifest = ExplanationManifest(window_id, {"name": complex_vocab.name(c),
                                               "probability": float(pred.complex_probs[c])},
                                   atomic, sensors, color, template)
    manifest.prompt_text = render_prompt(manifest)
    return manifest


def explain_window(params: EncoderParams, window: SensorWindow, atomic_vocab, complex_vocab,
                   window_id: str = "", template: str = DEFAULT_TEMPLATE, atomic_cutoff: float = 0.4,
                   color: str = DEFAULT_COLOR) -> ExplanationManifest:
    """Predict, attribute (against the predicted complex class), localise and build the manifest."""
    pred = encoder_forward(params, window)
    attr = sensor_attribution(params, window, ("complex", pred.complex_argmax))
    intervals = []
    for a in np.nonzero(pred.atomic_probs > atomic_cutoff)[0]:
        intervals += temporal_localization(params, window, int(a), pred=pred)
    locations = {}
    for meta in window.channel_meta:
        locations.setdefault(meta.sensor_id, meta.location)
    if not locations:
        locations = {sid: "" for sid in attr.scores}
    return build_manifest(pred, attr, intervals, atomic_vocab, complex_vocab, locations, atomic_cutoff,
                          window_id=window_id, template=template, color=color)


MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "window_id", "complex", "atomic", "sensors", "highlight_color",
                 "template", "prompt_text"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "window_id": {"type": "string"},
        "complex": {
            "type": "object", "required": ["name", "probability"], "additionalProperties": False,
            "properties": {"name": {"type": "string"},
                           "probability": {"type": "number", "minimum": 0, "maximum": 1}},
        },
        "atomic": {"type": "array", "items": {
            "type": "object", "required": ["name", "probability", "interval"], "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "probability": {"type": "number", "minimum": 0, "maximum": 1},
                "interval": {"oneOf": [
                    {"type": "null"},
                    {"type": "object", "required": ["start_s", "end_s"], "additionalProperties": False,
                     "properties": {"start_s": {"type": "number", "minimum": 0},
                                    "end_s": {"type": "number", "minimum": 0}}},
                ]},
            },
        }},
        "sensors": {"type": "array", "items": {
            "type": "object", "required": ["id", "location", "score", "highlight"], "additionalProperties": False,
            "properties": {"id": {"type": "string"}, "location": {"type": "string"},
                           "score": {"type": "number", "minimum": 0, "maximum": 1},
                           "highlight": {"type": "boolean"}},
        }},
        "highlight_color": {"type": "string"},
        "template": {"type": "string"},
        "prompt_text": {"type": "string"},
    },
}
