"""
The terms of the fine-tuning objective
======================================

Each term is evaluated on one synthetic made-up face and its clean
counterpart, using the deterministic stand-in encoders.
"""

from demakeup import losses as L
from demakeup.encoders import IntensityAgeDouble, TestDoubleFace, TestDoubleImageText, TestDoublePerceptual
from demakeup.synthetic import overlay_pairs

pair = overlay_pairs(1, seed=3)[0]
clean, made_up = pair.clean.to_batch(), pair.made_up.to_batch()

clip_enc, face, perc = TestDoubleImageText(), TestDoubleFace(), TestDoublePerceptual()
age_pred = IntensityAgeDouble(offset=-15, slope=100)

# Pretend the model removed about half of the tint.
generated = 0.5 * (clean + made_up)
terms = dict(
    clip=L.clip_directional_loss(generated, made_up, clip_enc),
    id=L.identity_loss(clean, made_up, generated, face),
    lpips=L.perceptual_loss(generated, made_up, perc),
    l1=L.pixel_l1_loss(generated, made_up),
    age=L.ssrnet_age_loss([pair.age_years], generated, age_pred),
)
for name, value in terms.items():
    print(f"{name:>6}: {float(value):.4f}")

total = L.total_loss(**terms, weights=L.LossWeights.for_variant("ssrnet"))
print("regressor age term, total:", round(total.to_dict()["total"], 4))

# The alternative age term compares the image with a text prompt instead.
terms["age"] = L.clip_age_loss(generated, pair.age_years, clip_enc)
total = L.total_loss(**terms, weights=L.LossWeights.for_variant("clip"))
print(f"prompt age term {float(terms['age']):.4f}, total:", round(total.to_dict()["total"], 4))

print("age prompt for 23.4 years:", repr(L.age_prompt(23.4)))
