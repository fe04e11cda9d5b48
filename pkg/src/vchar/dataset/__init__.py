"""Recordings, weak-label manifests, windowing, atomic targets and synthetic data."""
from .io import (DatasetDir, channel_map_text, parse_channel_map, parse_dense_recording,
                 parse_segment_file, parse_segment_manifest, serialize_dense_recording,
                 serialize_manifest, serialize_segment_file)
from .records import NULL_LABEL, ChannelMeta, Recording, Segment, SensorWindow, Vocabulary
from .synth import Signature, SynthSpec, synth_generate, synth_segment
from .windows import TARGET_MODES, build_atomic_target, resample_linear, slide_windows, window_count

__all__ = [
    "NULL_LABEL", "TARGET_MODES", "ChannelMeta", "DatasetDir", "Recording", "Segment",
    "SensorWindow", "Signature", "SynthSpec", "Vocabulary", "build_atomic_target",
    "channel_map_text", "parse_channel_map", "parse_dense_recording", "parse_segment_file",
    "parse_segment_manifest", "resample_linear", "serialize_dense_recording",
    "serialize_manifest", "serialize_segment_file", "slide_windows", "synth_generate",
    "synth_segment", "window_count",
]
