"""Synthetic recordings with known atomic composition.

Each segment concatenates a few atomic "bursts". A burst writes its atomic's
carrier sinusoid onto that atomic's active channels only, so both the
composition (dense and weak labels) and the responsible sensor are known
exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from .records import ChannelMeta, Segment, SensorWindow, Vocabulary

DEFAULT_LOCATIONS = ("right arm", "left hip", "left wrist", "right wrist")


@dataclass(frozen=True)
class Signature:
    frequency: float
    amplitude: float
    channels: tuple


def _default_recipes():
    return [[0, 1, 2], [3, 4, 5], [6, 7, 8]]


def _default_signatures(n_atomic=9, n_sensors=4, per_sensor=3):
    # atomic a lives on sensor a % n_sensors with its own carrier frequency
    sigs = []
    for a in range(n_atomic):
        s = a % n_sensors
        sigs.append(Signature(0.75 + 0.5 * a, 1.0, tuple(range(s * per_sensor, (s + 1) * per_sensor))))
    return sigs


@dataclass
class SynthSpec:
    n_atomic: int = 9
    n_complex: int = 3
    n_channels: int = 12
    channels_per_sensor: int = 3
    sample_rate: float = 20.0
    recipes: list = field(default_factory=_default_recipes)
    signatures: list = field(default_factory=_default_signatures)
    noise_sigma: float = 0.1
    segment_seconds: float = 8.0
    segments_per_class: int = 250
    atomics_per_segment: int = 2
    mixed_durations: bool = False
    test_fraction: float = 0.2
    seed: int = 0
    locations: list = field(default_factory=lambda: list(DEFAULT_LOCATIONS))
    atomic_names: list | None = None
    complex_names: list | None = None

    def __post_init__(self):
        self.signatures = [s if isinstance(s, Signature) else
                           Signature(float(s["frequency"]), float(s["amplitude"]), tuple(s["channels"]))
                           for s in self.signatures]
        self.validate()

    def validate(self):
        if self.n_channels % self.channels_per_sensor:
            raise ConfigError("channels must split evenly into sensors")
        if len(self.recipes) != self.n_complex:
            raise ConfigError(f"{len(self.recipes)} recipes for {self.n_complex} complex classes")
        if len(self.signatures) != self.n_atomic:
            raise ConfigError(f"{len(self.signatures)} signatures for {self.n_atomic} atomics")
        for c, recipe in enumerate(self.recipes):
            if not recipe:
                raise ConfigError(f"recipe {c} is empty")
            for a in recipe:
                if not 0 <= a < self.n_atomic:
                    raise ConfigError(f"recipe {c} references unknown atomic id {a}")
            if self.atomics_per_segment > len(recipe):
                raise ConfigError(f"recipe {c} has fewer than {self.atomics_per_segment} atomics")
        for a, sig in enumerate(self.signatures):
            if not sig.channels or not all(0 <= ch < self.n_channels for ch in sig.channels):
                raise ConfigError(f"signature {a} has channels outside [0, {self.n_channels})")
        if self.n_sensors > len(self.locations):
            raise ConfigError("need one location per sensor")
        if self.sample_rate <= 0 or self.segment_seconds <= 0 or self.segments_per_class < 1:
            raise ConfigError("sample rate, segment length and class size must be positive")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")

    @property
    def n_sensors(self) -> int:
        return self.n_channels // self.channels_per_sensor

    @property
    def n_steps(self) -> int:
        return int(round(self.segment_seconds * self.sample_rate))

    def sensor_of_channel(self, ch: int) -> int:
        return ch // self.channels_per_sensor

    def atomic_sensor(self, a: int) -> int:
        """Sensor holding most of atomic ``a``'s active channels."""
        sensors = [self.sensor_of_channel(ch) for ch in self.signatures[a].channels]
        return max(set(sensors), key=sensors.count)

    def channel_meta(self) -> list[ChannelMeta]:
        return [ChannelMeta(f"s{self.sensor_of_channel(c)}", self.locations[self.sensor_of_channel(c)])
                for c in range(self.n_channels)]

    def vocabularies(self) -> tuple[Vocabulary, Vocabulary]:
        atomic = self.atomic_names or [f"atomic_{a}" for a in range(self.n_atomic)]
        cplx = self.complex_names or [f"complex_{c}" for c in range(self.n_complex)]
        locs = [self.locations[self.atomic_sensor(a)] for a in range(self.n_atomic)]
        return Vocabulary(atomic, locs), Vocabulary(cplx)

    def to_json(self) -> str:
        d = asdict(self)
        d["signatures"] = [{"frequency": s.frequency, "amplitude": s.amplitude, "channels": list(s.channels)}
                           for s in self.signatures]
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"synth spec is not valid JSON: {e}") from None
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth spec keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, KeyError) as e:
            raise ConfigError(f"invalid synth spec: {e}") from None


def _burst_lengths(rng, total, k, mixed):
    if not mixed:
        base = np.full(k, total // k)
        base[: total - base.sum()] += 1
        return base
    frac = rng.dirichlet(np.full(k, 2.0))
    frac = np.maximum(frac, 0.15)
    frac /= frac.sum()
    lengths = np.floor(frac * total).astype(int)
    lengths[-1] += total - lengths.sum()
    return lengths


def synth_segment(spec: SynthSpec, rng: np.random.Generator, complex_label: int,
                  atomics=None, lengths=None, source_id: str = "") -> Segment:
    """One segment of class ``complex_label``; atomics/burst lengths drawn unless given."""
    t_total = spec.n_steps
    recipe = spec.recipes[complex_label]
    if atomics is None:
        atomics = rng.choice(recipe, size=spec.atomics_per_segment, replace=False)
    atomics = [int(a) for a in atomics]
    if lengths is None:
        lengths = _burst_lengths(rng, t_total, len(atomics), spec.mixed_durations)
    values = np.zeros((spec.n_channels, t_total))
    dense = np.empty(t_total, dtype=np.int64)
    start = 0
    for a, n in zip(atomics, lengths):
        sig = spec.signatures[a]
        t = np.arange(n) / spec.sample_rate
        phase = rng.uniform(0, 2 * np.pi)
        gain = rng.uniform(0.8, 1.2)
        for j, ch in enumerate(sig.channels):
            # per-axis phase lag keeps channels of one sensor distinct
            values[ch, start:start + n] += gain * sig.amplitude * np.sin(
                2 * np.pi * sig.frequency * t + phase + j * np.pi / 3)
        dense[start:start + n] = a
        start += n
    if spec.noise_sigma > 0:
        values += rng.normal(0.0, spec.noise_sigma, size=values.shape)
    window = SensorWindow(values, spec.sample_rate, spec.channel_meta())
    return Segment(window, complex_label, frozenset(atomics), dense, source_id)


def synth_generate(spec: SynthSpec) -> tuple[list[Segment], list[Segment]]:
    """Deterministic (train, test) split, stratified by complex class."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    train, test = [], []
    for c in range(spec.n_complex):
        segs = [synth_segment(spec, rng, c, source_id=f"c{c}_s{i:04d}")
                for i in range(spec.segments_per_class)]
        order = rng.permutation(len(segs))
        n_test = int(round(spec.test_fraction * len(segs)))
        test_idx = set(order[:n_test].tolist())
        for i, seg in enumerate(segs):
            (test if i in test_idx else train).append(seg)
    return train, test
