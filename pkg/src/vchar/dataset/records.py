from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, LengthError, VocabularyError

NULL_LABEL = -1


@dataclass(frozen=True)
class ChannelMeta:
    sensor_id: str
    location: str = ""


class Vocabulary:
    """Ordered label names (ids are positions), with optional per-label locations."""

    def __init__(self, names, locations=None):
        self.names = list(names)
        if len(set(self.names)) != len(self.names):
            raise VocabularyError("duplicate names in vocabulary")
        self.locations = list(locations) if locations is not None else [""] * len(self.names)
        self._ids = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._ids

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.names == other.names and self.locations == other.locations

    def __repr__(self):
        return f"Vocabulary({self.names!r})"

    def id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise VocabularyError(f"unknown label {name!r}") from None

    def name(self, idx: int) -> str:
        return self.names[idx]

    def to_text(self) -> str:
        lines = []
        for i, (n, loc) in enumerate(zip(self.names, self.locations)):
            lines.append(f"{i}\t{n}\t{loc}" if loc else f"{i}\t{n}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        names, locs = [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise VocabularyError(f"vocabulary line {lineno}: expected id<TAB>name")
            if int(parts[0]) != len(names):
                raise VocabularyError(f"vocabulary line {lineno}: ids must be 0..n-1 in order")
            names.append(parts[1])
            locs.append(parts[2] if len(parts) > 2 else "")
        return cls(names, locs)


@dataclass
class Recording:
    """A multichannel stream, ``samples`` is ``(C, T)`` aligned with ``timestamps``.

    Label tracks hold integer ids with ``NULL_LABEL`` for unlabelled steps.
    """

    samples: np.ndarray
    timestamps: np.ndarray
    sample_rate: float
    channels: list[str]
    atomic_track: np.ndarray | None = None
    complex_track: np.ndarray | None = None
    atomic_vocab: Vocabulary | None = None
    complex_vocab: Vocabulary | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DimensionError("samples must be (C, T)")
        c, t = self.samples.shape
        if len(self.channels) != c:
            raise DimensionError(f"{len(self.channels)} channel names for {c} channels")
        if self.timestamps.shape != (t,):
            raise LengthError("timestamps length must match samples")
        if not self.sample_rate > 0:
            raise ValueError("sample rate must be positive")
        for track in (self.atomic_track, self.complex_track):
            if track is not None and len(track) != t:
                raise LengthError("label track length must match samples")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])


@dataclass
class SensorWindow:
    values: np.ndarray  # (C, T)
    sample_rate: float
    channel_meta: list[ChannelMeta] = field(default_factory=list)

    @property
    def shape(self):
        return self.values.shape

    @property
    def window_seconds(self) -> float:
        return self.values.shape[1] / self.sample_rate

    def sensors(self) -> list[str]:
        """Distinct sensor ids in channel order."""
        return list(dict.fromkeys(m.sensor_id for m in self.channel_meta))


@dataclass
class Segment:
    window: SensorWindow
    complex_label: int
    weak_atomics: frozenset = frozenset()
    dense_atomic: np.ndarray | None = None
    source_id: str = ""

    def __post_init__(self):
        self.weak_atomics = frozenset(int(a) for a in self.weak_atomics)
        if self.dense_atomic is None and not self.weak_atomics:
            raise VocabularyError(f"segment {self.source_id!r} has neither dense nor weak atomic labels")
        if self.dense_atomic is not None:
            present = {int(a) for a in np.unique(self.dense_atomic) if a != NULL_LABEL}
            if not present <= self.weak_atomics:
                raise ValueError("dense labels must all appear in the weak atomic set")


def channel_meta_for(channels, sensor_map: dict | None = None) -> list[ChannelMeta]:
    """Per-channel meta; without a map each channel is its own sensor."""
    if sensor_map is None:
        return [ChannelMeta(c) for c in channels]
    return [sensor_map[c] for c in channels]
