"""
Training the proxy age regressor
================================

Synthetic faces whose brightness encodes age stand in for a labelled age
dataset. The loss weights teenagers and young adults three times as much.
"""

from demakeup.age import TrainConfig, predict_age, smoothed_l1, train_age_estimator, weighted_loss
from demakeup.synthetic import face_with_age, intensity_age_dataset

# Quadratic near zero error, linear further out.
for d in (0.25, 0.5, 1.0, 3.0):
    print(f"|error| {d}: smoothed L1 {smoothed_l1(0.0, d, 1.0):.4f}, "
          f"weighted at age 20 {weighted_loss(20.0, 20 + d, 1.0):.4f}")

data = intensity_age_dataset(200, seed=0)
model, history = train_age_estimator(data, TrainConfig(max_epochs=30, batch_size=10, patience=30))
for row in history[::5]:
    print(f"epoch {row.epoch:>2}: train {row.train_loss:.3f}  val MAE {row.val_mae:.3f}  beta {row.beta:.3f}")

ages = [8, 15, 25, 40, 60]
preds = [predict_age(model, face_with_age(a, seed=99)) for a in ages]
print("true:", ages)
print("pred:", [round(p, 1) for p in preds])
