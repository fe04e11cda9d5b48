"""End-to-end tour: synthetic weak labels -> training -> metrics -> explanation prompt.

Runs in about a minute on one core. Usage: python3 demos/pipeline_tour.py [epochs]
"""
import sys

import numpy as np

from vchar.dataset import SynthSpec, synth_generate
from vchar.experiments import desk_encoder_config
from vchar.explain import explain_window
from vchar.training import TrainConfig, evaluate, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 60

# 3 complex activities, each a recipe of 3 atomic actions; every segment only
# says which atomics occur, never when.
spec = SynthSpec(segments_per_class=60)
train_segs, test_segs = synth_generate(spec)
atomic_vocab, complex_vocab = spec.vocabularies()
print(f"{len(train_segs)} train / {len(test_segs)} test segments, window {train_segs[0].window.values.shape}")
seg = test_segs[0]
print("example weak label:", complex_vocab.name(seg.complex_label), "with",
      sorted(atomic_vocab.name(a) for a in seg.weak_atomics))

ecfg = desk_encoder_config(spec)
params, history = train(train_segs, test_segs, ecfg, TrainConfig(epochs=epochs, patience=10),
                        on_epoch=lambda r: print(f"  epoch {r.epoch:3d} loss {r.loss:.3f} "
                                                 f"F1 {r.val_char_f1:.3f} acc {r.val_atomic_accuracy:.3f}"))
report = evaluate(params, test_segs, class_names=complex_vocab.names)
print(f"best epoch {history.best_epoch}: CHAR F1 {report.char_f1:.3f}, atomic accuracy {report.atomic_accuracy:.3f}")
print(report.confusion_tsv())

manifest = explain_window(params, seg.window, atomic_vocab, complex_vocab, window_id=seg.source_id)
print("atomic activities above cutoff:")
for a in manifest.atomic:
    iv = a["interval"]
    span = f"{iv['start_s']:.2f}-{iv['end_s']:.2f} s" if iv else "no interval"
    print(f"  {a['name']:<10} p={a['probability']:.2f}  {span}")
truth = [(atomic_vocab.name(a), (np.flatnonzero(seg.dense_atomic == a)[[0, -1]] + [0, 1]) / spec.sample_rate)
         for a in sorted(seg.weak_atomics)]
print("ground truth bursts:", ", ".join(f"{n} {lo:.2f}-{hi:.2f} s" for n, (lo, hi) in truth))
print("sensor relevance:", {s["id"]: round(s["score"], 2) for s in manifest.sensors})
print("prompt:", manifest.prompt_text)
