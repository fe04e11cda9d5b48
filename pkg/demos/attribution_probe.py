"""Where and when does the model look? Sensor attribution and burst localisation.

Trains on noiseless synthetic data, where every atomic action lives on a single
known sensor and occupies one half of the window, then compares the explanation
with that ground truth for a few test windows. Usage: python3 demos/attribution_probe.py
"""
import numpy as np

from vchar.dataset import SynthSpec, synth_generate
from vchar.encoder import encoder_forward
from vchar.experiments import desk_encoder_config
from vchar.explain import atomic_relevance, dominant_interval, sensor_attribution, temporal_localization
from vchar.training import TrainConfig, train

spec = SynthSpec(noise_sigma=0.0, segments_per_class=80)
train_segs, test_segs = synth_generate(spec)
params, history = train(train_segs, test_segs, desk_encoder_config(spec), TrainConfig(epochs=40, patience=8))
print(f"trained {len(history.records)} epochs, best {history.best_epoch}")

for seg in test_segs[:6]:
    pred = encoder_forward(params, seg.window)
    print(f"\n{seg.source_id}: complex {seg.complex_label} predicted {pred.complex_argmax}")
    for a in sorted(seg.weak_atomics):
        steps = np.flatnonzero(seg.dense_atomic == a)
        rep = sensor_attribution(params, seg.window, ("atomic", a))
        best = dominant_interval(temporal_localization(params, seg.window, a, pred=pred))
        found = f"{best.start_s:.1f}-{best.end_s:.1f} s" if best else "none"
        print(f"  atomic {a}: sensor s{spec.atomic_sensor(a)} -> attributed {rep.top()}; "
              f"burst {steps[0] / spec.sample_rate:.1f}-{(steps[-1] + 1) / spec.sample_rate:.1f} s -> {found}")
        # coarse relevance profile over the strided time axis, 8 bins
        rel = atomic_relevance(params, seg.window, a, pred=pred)
        bins = np.array_split(rel, 8)
        print("    relevance", " ".join(f"{b.mean() / (rel.max() or 1):.2f}" for b in bins))
