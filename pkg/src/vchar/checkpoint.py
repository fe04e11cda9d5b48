"""Self-describing binary checkpoint.

Layout (all integers little-endian)::

    bytes 0-7    magic b"VCHARCKP"
    bytes 8-11   uint32 format version (1)
    bytes 12-19  uint64 header length L
    bytes 20..   L bytes of UTF-8 JSON header (sorted keys, no whitespace)
    then         parameter payload: float64 little-endian, C order,
                 arrays concatenated in header order

The header holds ``config`` (EncoderConfig fields), ``seed``,
``atomic_vocab``/``atomic_locations``, ``complex_vocab``, ``channels``
(``[{"sensor_id", "location"}]`` per input channel) and ``params``
(``[{"name", "shape", "offset", "count"}]``, offsets in float64 elements)
and the training ``sample_rate`` (Hz, or null).
Writing the same model twice yields identical bytes.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ChannelMeta, Vocabulary
from .encoder import EncoderConfig, EncoderParams, layer_shapes
from .errors import FormatError

MAGIC = b"VCHARCKP"
VERSION = 1


@dataclass
class Checkpoint:
    params: EncoderParams
    atomic_vocab: Vocabulary
    complex_vocab: Vocabulary
    channels: list
    sample_rate: float | None = None

    @property
    def config(self) -> EncoderConfig:
        return self.params.config


def to_bytes(ckpt: Checkpoint) -> bytes:
    entries, offset, chunks = [], 0, []
    for name, arr in ckpt.params.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        offset += arr.size
    header = {
        "config": ckpt.config.to_dict(),
        "seed": ckpt.params.seed,
        "atomic_vocab": ckpt.atomic_vocab.names,
        "atomic_locations": ckpt.atomic_vocab.locations,
        "complex_vocab": ckpt.complex_vocab.names,
        "channels": [{"sensor_id": m.sensor_id, "location": m.location} for m in ckpt.channels],
        "params": entries,
        "sample_rate": ckpt.sample_rate,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(hb)) + hb + b"".join(chunks)


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < 20 or data[:8] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"corrupt checkpoint header: {e}") from None
    if len(data) < 20 + hlen or (len(data) - 20 - hlen) % 8:
        raise FormatError("checkpoint payload truncated")
    payload = np.frombuffer(data, dtype="<f8", offset=20 + hlen)
    try:
        cfg = EncoderConfig(**header["config"])
    except (TypeError, KeyError) as e:
        raise FormatError(f"bad encoder config in checkpoint: {e}") from None
    expected = layer_shapes(cfg)
    arrays = {}
    for e in header["params"]:
        if e["offset"] + e["count"] > payload.size:
            raise FormatError("checkpoint payload truncated")
        arr = payload[e["offset"]:e["offset"] + e["count"]].astype(np.float64).reshape(e["shape"])
        if tuple(e["shape"]) != expected.get(e["name"]):
            raise FormatError(f"parameter {e['name']!r} does not match the stored config")
        arrays[e["name"]] = arr
    if set(arrays) != set(expected):
        raise FormatError("checkpoint parameters do not match the stored config")
    params = EncoderParams(arrays, cfg, header["seed"])
    return Checkpoint(params,
                      Vocabulary(header["atomic_vocab"], header.get("atomic_locations")),
                      Vocabulary(header["complex_vocab"]),
                      [ChannelMeta(c["sensor_id"], c["location"]) for c in header["channels"]],
                      header.get("sample_rate"))


def save(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    os.replace(tmp, path)


def load(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
