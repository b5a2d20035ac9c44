"""
Fine-tuning on color-overlay "makeup"
=====================================

A tinted overlay plays the role of makeup. A few fine-tuning steps move the
toy noise predictor toward outputs closer to the clean faces. Takes a
couple of minutes on a CPU.
"""

import numpy as np

from demakeup.age import TrainConfig, train_age_estimator
from demakeup.diffusion import ToyNoisePredictor
from demakeup.pipeline import Backends, FinetuneConfig, finetune, remove_makeup
from demakeup.synthetic import intensity_age_dataset, overlay_pairs

regressor, _ = train_age_estimator(intensity_age_dataset(200), TrainConfig(max_epochs=30, batch_size=10))
pairs = overlay_pairs(8, seed=0)
cfg = FinetuneConfig(epochs=2)

predictor, manifest = finetune(pairs, ToyNoisePredictor(), cfg, Backends.test_doubles(regressor))
for row in manifest.epochs:
    print(f"epoch {row['epoch']}: total {row['total']:.4f} "
          f"(clip {row['clip']:.3f}, id {row['id']:.3f}, lpips {row['lpips']:.3f}, "
          f"l1 {row['l1']:.4f}, age {row['age']:.3f})")

for p in pairs[:4]:
    out = remove_makeup(p.made_up, predictor, cfg).values
    before = np.abs(p.made_up.values - p.clean.values).mean()
    after = np.abs(out - p.clean.values).mean()
    print(f"{p.source_id}: distance to clean {before:.4f} -> {after:.4f}")
