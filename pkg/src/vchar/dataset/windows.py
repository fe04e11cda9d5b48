from __future__ import annotations

import numpy as np

from ..errors import DegenerateTargetError, LengthError, VocabularyError, WindowError
from .records import NULL_LABEL, ChannelMeta, Recording, Segment, SensorWindow

TARGET_MODES = ("dense", "weak")


def resample_linear(rec: Recording, target_hz: float) -> Recording:
    """Linear interpolation onto a uniform ``target_hz`` grid over the recording's span.

    Label tracks are carried over by nearest neighbour.
    """
    if rec.n_samples < 2:
        raise LengthError("need at least two samples to resample")
    if not target_hz > 0:
        raise ValueError("target rate must be positive")
    t0 = rec.timestamps[0]
    n = int(np.floor(rec.duration * target_hz + 1e-9)) + 1
    grid = t0 + np.arange(n) / target_hz
    samples = np.stack([np.interp(grid, rec.timestamps, ch) for ch in rec.samples])

    # nearest original sample for each grid point (ties go to the earlier one)
    right = np.clip(np.searchsorted(rec.timestamps, grid), 1, rec.n_samples - 1)
    left = right - 1
    nearest = np.where(grid - rec.timestamps[left] <= rec.timestamps[right] - grid, left, right)

    def pick(track):
        return None if track is None else np.asarray(track)[nearest]

    return Recording(samples, grid, float(target_hz), list(rec.channels),
                     pick(rec.atomic_track), pick(rec.complex_track), rec.atomic_vocab, rec.complex_vocab)


def window_count(total: int, width: int, stride: int) -> int:
    if width > total:
        return 0
    return (total - width) // stride + 1


def _majority(labels: np.ndarray) -> int:
    labels = labels[labels != NULL_LABEL]
    if labels.size == 0:
        return NULL_LABEL
    counts = np.bincount(labels)
    return int(np.argmax(counts))  # argmax picks the lowest id on ties


def slide_windows(source, window_s: float, stride_s: float,
                  channel_meta: list[ChannelMeta] | None = None,
                  complex_label: int | None = None) -> list[Segment]:
    """Cut fixed-length windows; the trailing remainder is dropped.

    ``source`` is a dense :class:`Recording` (complex label per window by
    majority vote of the complex track, or ``complex_label`` when the recording
    has none) or a weakly labelled :class:`Segment` whose labels every window
    inherits. Dense windows whose complex track is entirely null are skipped.
    """
    if isinstance(source, Segment):
        return _slide_segment(source, window_s, stride_s)
    rec = source
    width = int(round(window_s * rec.sample_rate))
    stride = int(round(stride_s * rec.sample_rate))
    if stride < 1:
        raise WindowError("stride must cover at least one sample")
    if width < 1 or width > rec.n_samples:
        raise WindowError(f"window of {width} samples does not fit a recording of {rec.n_samples}")
    meta = channel_meta or [ChannelMeta(c) for c in rec.channels]
    out = []
    for k in range(window_count(rec.n_samples, width, stride)):
        lo = k * stride
        hi = lo + width
        if rec.complex_track is not None:
            label = _majority(rec.complex_track[lo:hi])
        elif complex_label is not None:
            label = complex_label
        else:
            raise WindowError("recording has no complex track; pass complex_label")
        if label == NULL_LABEL:
            continue
        dense = None if rec.atomic_track is None else np.array(rec.atomic_track[lo:hi])
        weak = set() if dense is None else {int(a) for a in np.unique(dense) if a != NULL_LABEL}
        if dense is None and not weak:
            raise VocabularyError("windows need dense atomic labels or a weak atomic set")
        window = SensorWindow(rec.samples[:, lo:hi].copy(), rec.sample_rate, list(meta))
        out.append(Segment(window, label, frozenset(weak), dense, f"w{k:05d}@{rec.timestamps[lo]:.3f}"))
    return out


def _slide_segment(seg: Segment, window_s, stride_s) -> list[Segment]:
    win = seg.window
    width = int(round(window_s * win.sample_rate))
    stride = int(round(stride_s * win.sample_rate))
    if stride < 1:
        raise WindowError("stride must cover at least one sample")
    total = win.values.shape[1]
    if width < 1 or width > total:
        raise WindowError(f"window of {width} samples does not fit a segment of {total}")
    out = []
    for k in range(window_count(total, width, stride)):
        lo = k * stride
        dense = None if seg.dense_atomic is None else seg.dense_atomic[lo:lo + width].copy()
        w = SensorWindow(win.values[:, lo:lo + width].copy(), win.sample_rate, list(win.channel_meta))
        out.append(Segment(w, seg.complex_label, seg.weak_atomics, dense, f"{seg.source_id}#{k}"))
    return out


def build_atomic_target(seg: Segment, mode: str, n_atomic: int) -> np.ndarray:
    """Target distribution over the atomic vocabulary.

    ``dense``: per-step frequency of the labelled (non-null) steps.
    ``weak``: uniform over the segment's listed atomic types.
    """
    if mode not in TARGET_MODES:
        raise ValueError(f"mode must be one of {TARGET_MODES}")
    target = np.zeros(n_atomic)
    if mode == "dense":
        if seg.dense_atomic is None:
            raise DegenerateTargetError(f"segment {seg.source_id!r} has no dense labels")
        labels = np.asarray(seg.dense_atomic)
        labels = labels[labels != NULL_LABEL]
        if labels.size == 0:
            raise DegenerateTargetError(f"segment {seg.source_id!r} has no labelled steps")
        target[:] = np.bincount(labels, minlength=n_atomic)[:n_atomic]
        return target / labels.size
    if not seg.weak_atomics:
        raise DegenerateTargetError(f"segment {seg.source_id!r} has an empty atomic set")
    ids = sorted(seg.weak_atomics)
    target[ids] = 1.0 / len(ids)
    return target
