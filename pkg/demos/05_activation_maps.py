"""Which feature-map locations drive each personality class?

Trains the GAP-linear head variant on stacked person+group feature maps,
then renders per-class activation maps (the weighted sum of unit maps) and
their low/medium/high quartile quantization.
"""

import numpy as np

from percept.backbone import BackboneModel
from percept.config import RunConfig
from percept.fusion import cam, cam_head_train, gap, head_predict, quartile_quantize
from percept.pipeline import extract_descriptors, stream_features
from percept.synth import generate_scene, load_profiles

cfg = RunConfig(backbone_k=16).validate()
profiles = load_profiles()

samples, labels = [], {}
for si in range(4):
    scene = generate_scene(6, 90, "social", profiles, [0.34, 0.33, 0.33],
                           seed=50 + si, segment_len=cfg.t)
    sc, _ = extract_descriptors(scene.frames, cfg, ["pers", "group"],
                                assignments=scene.group_assignments,
                                clip_offset=si * 1000, subject_offset=si * 100)
    samples.extend(sc)
    for sid, lab in scene.types.items():
        labels[si * 100 + sid] = lab

classes = sorted(set(labels.values()))
y = np.array([classes.index(labels[s.subject_id]) for s in samples])
model = BackboneModel(k=cfg.backbone_k, seed=cfg.backbone_seed)
idx = np.arange(len(samples))
_, pers_maps = stream_features(samples, "pers", idx, cfg, model, want_maps=True)
_, group_maps = stream_features(samples, "group", idx, cfg, model, want_maps=True)
stacked = np.concatenate([pers_maps, group_maps], axis=3)
print(f"{len(samples)} samples; stacked person+group maps {stacked.shape[1:]} "
      f"(units K = {stacked.shape[3]})")

features = stacked.mean(axis=(1, 2))   # global average pool per unit
head = cam_head_train(features, y, epochs=150, lr=0.1, seed=0)
acc = (head_predict(features, head).argmax(axis=1) == y).mean()
print(f"GAP-linear head trained: accuracy {100 * acc:.1f}%, "
      f"final loss {head.final_loss:.3f}")

sample_idx = 0
for c, name in enumerate(classes):
    act = cam(stacked[sample_idx], head, c)
    logit = gap(stacked[sample_idx]) @ head.weights[c]
    print(f"\nclass {name!r}: activation map (mean {act.mean():+.3f} "
          f"= class logit {logit:+.3f})")
    for act_row, q_row in zip(np.round(act, 2), quartile_quantize(act)):
        print("  " + "  ".join(f"{v:+6.2f}" for v in act_row)
              + "   |  " + " ".join(f"{q:<6}" for q in q_row))
print("\nrows are the (pooled) temporal axis; columns the joint axis - high "
      "cells mark where the head finds class evidence")
