"""Text formats for recordings, weak-label manifests, vocabularies and dataset folders.

Dense CSV      header ``timestamp,<channels...>,atomic_label,complex_label``;
               ``null`` (or an empty cell) marks an unlabelled step.
Segment CSV    headerless ``timestamp,ch_0,...,ch_{C-1}``.
Manifest TSV   ``segment_path<TAB>atomic1;atomic2;...<TAB>complex_label``.
Vocabulary     ``id<TAB>name[<TAB>location]``, ids 0..n-1 in order.
Channel map    ``channel<TAB>sensor_id<TAB>location``.
"""
from __future__ import annotations

import csv
import io
import os
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ..errors import FormatError, OrderError, ParseError, VocabularyError
from .records import NULL_LABEL, ChannelMeta, Recording, Segment, SensorWindow, Vocabulary
from .windows import resample_linear

NULL_TOKEN = "null"
ATOMIC_COL = "atomic_label"
COMPLEX_COL = "complex_label"


def _fmt(x: float) -> str:
    return repr(float(x))


def _estimate_rate(ts: np.ndarray) -> float:
    if len(ts) < 2:
        return 1.0
    span = ts[-1] - ts[0]
    return float(np.round((len(ts) - 1) / span, 6))


def _check_monotone(ts: np.ndarray):
    bad = np.nonzero(np.diff(ts) <= 0)[0]
    if bad.size:
        raise OrderError(f"timestamps not strictly increasing at row {bad[0] + 2}")


def _float_row(cells, row_no):
    try:
        return [float(c) for c in cells]
    except ValueError:
        raise ParseError(f"non-numeric sensor value in row {row_no}", row=row_no) from None


def _label_ids(tokens, vocab: Vocabulary | None):
    if vocab is None:
        vocab = Vocabulary(sorted({t for t in tokens if t not in (NULL_TOKEN, "")}))
    ids = np.array([NULL_LABEL if t in (NULL_TOKEN, "") else vocab.id(t) for t in tokens], dtype=np.int64)
    return ids, vocab


def parse_dense_recording(text: str, channels=None, atomic_vocab: Vocabulary | None = None,
                          complex_vocab: Vocabulary | None = None,
                          sample_rate: float | None = None) -> Recording:
    """Parse a densely annotated CSV into a :class:`Recording`.

    ``channels`` selects (and requires) sensor columns by name; by default every
    column between ``timestamp`` and the label columns is used. Rows are
    numbered from 1 (the first data row) in error messages.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("empty CSV") from None
    for col in ("timestamp", ATOMIC_COL, COMPLEX_COL):
        if col not in header:
            raise FormatError(f"missing column {col!r}")
    if channels is None:
        channels = [h for h in header if h not in ("timestamp", ATOMIC_COL, COMPLEX_COL)]
    missing = [c for c in channels if c not in header]
    if missing:
        raise FormatError(f"missing column(s) {missing}")
    ts_i = header.index("timestamp")
    ch_i = [header.index(c) for c in channels]
    a_i, c_i = header.index(ATOMIC_COL), header.index(COMPLEX_COL)

    ts, rows, a_tok, c_tok = [], [], [], []
    for row_no, cells in enumerate(reader, 1):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            raise ParseError(f"row {row_no} has {len(cells)} cells, expected {len(header)}", row=row_no)
        vals = _float_row([cells[ts_i]] + [cells[i] for i in ch_i], row_no)
        ts.append(vals[0])
        rows.append(vals[1:])
        a_tok.append(cells[a_i].strip())
        c_tok.append(cells[c_i].strip())
    if not rows:
        raise FormatError("CSV has no data rows")
    ts = np.array(ts)
    _check_monotone(ts)
    a_ids, a_vocab = _label_ids(a_tok, atomic_vocab)
    c_ids, c_vocab = _label_ids(c_tok, complex_vocab)
    return Recording(np.array(rows).T, ts, sample_rate or _estimate_rate(ts), list(channels),
                     a_ids, c_ids, a_vocab, c_vocab)


def serialize_dense_recording(rec: Recording) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["timestamp", *rec.channels, ATOMIC_COL, COMPLEX_COL])

    def tok(track, vocab, i):
        if track is None or track[i] == NULL_LABEL:
            return NULL_TOKEN
        return vocab.name(int(track[i]))

    for i in range(rec.n_samples):
        w.writerow([_fmt(rec.timestamps[i]), *(_fmt(v) for v in rec.samples[:, i]),
                    tok(rec.atomic_track, rec.atomic_vocab, i),
                    tok(rec.complex_track, rec.complex_vocab, i)])
    return out.getvalue()


def parse_segment_file(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Headerless ``timestamp,ch...`` CSV -> (timestamps (T,), samples (C, T))."""
    ts, rows = [], []
    width = None
    for row_no, cells in enumerate(csv.reader(io.StringIO(text)), 1):
        if not cells:
            continue
        vals = _float_row(cells, row_no)
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"row {row_no} has {len(vals)} cells, expected {width}", row=row_no)
        ts.append(vals[0])
        rows.append(vals[1:])
    if not rows or width < 2:
        raise FormatError("segment file needs a timestamp and at least one channel")
    ts = np.array(ts)
    _check_monotone(ts)
    return ts, np.array(rows).T


def serialize_segment_file(window: SensorWindow, t0: float = 0.0) -> str:
    lines = []
    for i in range(window.values.shape[1]):
        cells = [_fmt(t0 + i / window.sample_rate)] + [_fmt(v) for v in window.values[:, i]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def parse_segment_manifest(manifest: str, segment_files: Mapping[str, str] | Callable[[str], str],
                           atomic_vocab: Vocabulary, complex_vocab: Vocabulary,
                           channel_meta: list[ChannelMeta] | None = None,
                           target_hz: float | None = None) -> list[Segment]:
    """One weakly labelled :class:`Segment` per manifest row.

    ``segment_files`` maps manifest paths to file contents (or is a loader
    called with the path). With ``target_hz`` each file is first linearly
    resampled to that uniform rate.
    """
    load = segment_files if callable(segment_files) else None
    segments = []
    for lineno, line in enumerate(manifest.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"manifest line {lineno}: expected 3 tab-separated fields")
        path, atoms, cplx = (p.strip() for p in parts)
        tokens = [a.strip() for a in atoms.split(";") if a.strip()]
        if not tokens:
            raise VocabularyError(f"manifest line {lineno}: empty atomic activity list")
        weak = frozenset(atomic_vocab.id(t) for t in tokens)
        label = complex_vocab.id(cplx)
        if load is not None:
            text = load(path)
        else:
            if path not in segment_files:
                raise FileNotFoundError(f"segment file {path!r} referenced on manifest line {lineno}")
            text = segment_files[path]
        ts, samples = parse_segment_file(text)
        names = [f"ch_{i}" for i in range(samples.shape[0])]
        rec = Recording(samples, ts, _estimate_rate(ts), names)
        if target_hz is not None:
            rec = resample_linear(rec, target_hz)
        meta = channel_meta if channel_meta is not None else [ChannelMeta(n) for n in names]
        if len(meta) != samples.shape[0]:
            raise FormatError(f"{path}: {samples.shape[0]} channels but {len(meta)} in channel map")
        window = SensorWindow(rec.samples, rec.sample_rate, list(meta))
        segments.append(Segment(window, label, weak, None, path))
    return segments


def serialize_manifest(segments, atomic_vocab: Vocabulary, complex_vocab: Vocabulary,
                       paths: list[str]) -> str:
    lines = []
    for seg, path in zip(segments, paths):
        atoms = ";".join(atomic_vocab.name(a) for a in sorted(seg.weak_atomics))
        lines.append(f"{path}\t{atoms}\t{complex_vocab.name(seg.complex_label)}")
    return "\n".join(lines) + "\n"


def channel_map_text(meta: list[ChannelMeta], names=None) -> str:
    names = names or [f"ch_{i}" for i in range(len(meta))]
    return "".join(f"{n}\t{m.sensor_id}\t{m.location}\n" for n, m in zip(names, meta))


def parse_channel_map(text: str) -> list[ChannelMeta]:
    meta = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise FormatError(f"channel map line {lineno}: expected channel<TAB>sensor[<TAB>location]")
        meta.append(ChannelMeta(parts[1], parts[2] if len(parts) > 2 else ""))
    return meta


# ---------------------------------------------------------------------------
# dataset folders


class DatasetDir:
    """Layout written by ``vchar synth`` and read by ``train``/``eval``::

        atomic.vocab  complex.vocab  channels.tsv
        train/manifest.tsv  train/<segment>.csv ...
        test/manifest.tsv   test/<segment>.csv ...
    """

    def __init__(self, root):
        self.root = Path(root)

    def vocabularies(self) -> tuple[Vocabulary, Vocabulary]:
        return (Vocabulary.from_text(self._read("atomic.vocab")),
                Vocabulary.from_text(self._read("complex.vocab")))

    def channel_meta(self) -> list[ChannelMeta] | None:
        p = self.root / "channels.tsv"
        return parse_channel_map(p.read_text(encoding="utf-8")) if p.exists() else None

    def split(self, name: str, target_hz: float | None = None) -> list[Segment]:
        base = self.root / name
        atomic, cplx = self.vocabularies()
        manifest = (base / "manifest.tsv").read_text(encoding="utf-8")
        return parse_segment_manifest(manifest, lambda p: (base / p).read_text(encoding="utf-8"),
                                      atomic, cplx, self.channel_meta(), target_hz)

    def _read(self, rel):
        return (self.root / rel).read_text(encoding="utf-8")

    def write(self, splits: dict, atomic_vocab: Vocabulary, complex_vocab: Vocabulary,
              channel_meta: list[ChannelMeta]):
        self.root.mkdir(parents=True, exist_ok=True)
        _write_text(self.root / "atomic.vocab", atomic_vocab.to_text())
        _write_text(self.root / "complex.vocab", complex_vocab.to_text())
        _write_text(self.root / "channels.tsv", channel_map_text(channel_meta))
        for name, segments in splits.items():
            base = self.root / name
            base.mkdir(exist_ok=True)
            paths = []
            for seg in segments:
                # segments read back from a manifest already carry their file name
                rel = seg.source_id if seg.source_id.endswith(".csv") else f"{seg.source_id}.csv"
                _write_text(base / rel, serialize_segment_file(seg.window))
                paths.append(rel)
            _write_text(base / "manifest.tsv", serialize_manifest(segments, atomic_vocab, complex_vocab, paths))


def _write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
