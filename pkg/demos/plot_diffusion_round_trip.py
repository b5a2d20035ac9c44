"""
Inverting an image and sampling it back
=======================================

Deterministic sampling can be run backwards: an image is pushed to a noisy
latent and then pulled back. This script measures how much is lost.
"""

import torch

from demakeup.diffusion import (ToyNoisePredictor, ZeroPredictor, ddim_invert, ddim_sample,
                                make_cosine_schedule, make_step_grid)

schedule = make_cosine_schedule(80)
print("alpha_bar at t=0, 40, 79:", schedule.alpha_bars[[0, 40, 79]].round(5))

x = torch.rand(1, 3, 32, 32, dtype=torch.float64) * 2 - 1

# With a predictor that always says "no noise", inversion only rescales.
grid = make_step_grid(40, 80)
latent = ddim_invert(x, ZeroPredictor(), schedule, grid)
print("zero predictor, latent / x:", float(latent[0, 0, 0, 0] / x[0, 0, 0, 0]))

# A real (here: toy) predictor makes the round trip approximate.
net = ToyNoisePredictor().double()
with torch.no_grad():
    for n_inv, n_samp in [(40, 40), (40, 6)]:
        g_inv = make_step_grid(n_inv, 80)
        g_samp = make_step_grid(n_samp, 80, last=g_inv[-1])
        back = ddim_sample(ddim_invert(x, net, schedule, g_inv), net, schedule, g_samp)
        print(f"{n_inv:>2} inversion / {n_samp:>2} sampling steps: max error {float((back - x).abs().max()):.2e}")

# Sampling on a grid that ends somewhere else starts from the wrong noise level.
with torch.no_grad():
    back = ddim_sample(ddim_invert(x, net, schedule, make_step_grid(40, 80)), net, schedule, make_step_grid(6, 80))
print(f"mismatched endpoints: max error {float((back - x).abs().max()):.2e}")
