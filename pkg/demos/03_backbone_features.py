"""From descriptor tensors to a shared feature space.

Every stream, whatever its native size, is calibrated to 0-255, resized to
68 x 68 x 3, pushed through the frozen seeded conv stack to 4 x 4 x K maps,
and temporally mean-pooled to a length-4K vector. One feature space for all
streams is what makes the later fusion trivial.
"""

import numpy as np

from percept import (BackboneModel, backbone_forward, fit_calibration,
                     person_descriptor, quantize_and_resize, social_proxemics,
                     temporal_mean_pool, window)
from percept.config import RunConfig
from percept.synth import generate_scene, load_profiles

cfg = RunConfig(backbone_k=64).validate()
scene = generate_scene(3, 30, "social", load_profiles(), [0.34, 0.33, 0.33], seed=3)
clips = window(scene.frames, cfg.t, cfg.effective_stride())

streams = {
    "person": person_descriptor(clips[0], 0),
    "prox": social_proxemics(clips[0], 0, cfg.n_max, cfg.effective_r_far()),
}
model = BackboneModel(k=cfg.backbone_k, seed=cfg.backbone_seed)
print(f"frozen backbone: seed {cfg.backbone_seed}, K={cfg.backbone_k}, "
      f"{sum(w.size + b.size for w, b in model.params)} parameters")

for name, tensor in streams.items():
    calib = fit_calibration([tensor])
    image = quantize_and_resize(tensor, calib)
    maps = backbone_forward(image, model)
    vec = temporal_mean_pool(maps)
    print(f"\n{name}: {tensor.data.shape} -> image {image.pixels.shape} "
          f"-> maps {maps.values.shape} -> vector {vec.shape}")
    print(f"  pixel range [{image.pixels.min()}, {image.pixels.max()}], "
          f"vector mean {vec.mean():.4f}")

# determinism: same image, same model, bitwise identical features
tensor = streams["person"]
calib = fit_calibration([tensor])
image = quantize_and_resize(tensor, calib)
a = temporal_mean_pool(backbone_forward(image, model))
b = temporal_mean_pool(backbone_forward(image, BackboneModel(k=64, seed=0)))
print(f"\nrepeated forward bitwise identical: {np.array_equal(a, b)}")
c = temporal_mean_pool(backbone_forward(image, BackboneModel(k=64, seed=1)))
print(f"different seed gives different features: {not np.allclose(a, c)}")

# calibration belongs to the training fold: shifting it shifts the features
wide = fit_calibration([tensor])
wide.maxs = wide.maxs + 100.0
shifted = temporal_mean_pool(backbone_forward(quantize_and_resize(tensor, wide),
                                              model))
print(f"a different calibration changes the features: {not np.allclose(a, shifted)}")
