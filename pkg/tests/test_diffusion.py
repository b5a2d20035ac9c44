import numpy as np
import pytest
import torch

from demakeup.diffusion import (
    ToyNoisePredictor,
    ZeroPredictor,
    ddim_invert,
    ddim_sample,
    make_cosine_schedule,
    make_step_grid,
)
from oracles import cosine_alpha_bars, ddim_roundtrip_oracle


def test_schedule_matches_oracle():
    s = make_cosine_schedule(80)
    assert s.T_total == 80 and len(s.alphas) == 80 and len(s.alpha_bars) == 80
    np.testing.assert_allclose(s.alpha_bars, cosine_alpha_bars(80), rtol=0, atol=1e-14)


def test_schedule_invariants():
    s = make_cosine_schedule(80)
    assert np.all(np.diff(s.alpha_bars) < 0)
    assert np.all((s.betas > 0) & (s.betas <= 0.999))
    assert 0.99 < s.alpha_bars[0] < 1.0
    assert s.betas[-1] == 0.999  # the cap is active at the end of a cosine schedule
    np.testing.assert_allclose(s.alphas, 1 - s.betas)


@pytest.mark.parametrize("T", [1, 0, 2.5])
def test_schedule_rejects_bad_length(T):
    with pytest.raises(ValueError):
        make_cosine_schedule(T)


def test_step_grids():
    assert make_step_grid(40, 80) == tuple(range(0, 80, 2))
    assert make_step_grid(80, 80) == tuple(range(80))
    g6 = make_step_grid(6, 80)
    assert len(g6) == 6 and len(set(np.diff(g6))) == 1 and g6[0] == 0
    with pytest.raises(ValueError):
        make_step_grid(81, 80)
    with pytest.raises(ValueError):
        make_step_grid(0, 80)


def test_step_grid_with_endpoint():
    g = make_step_grid(6, 80, last=78)
    assert g[0] == 0 and g[-1] == 78 and len(g) == 6
    assert all(b > a for a, b in zip(g, g[1:]))
    assert make_step_grid(40, 80, last=78) == make_step_grid(40, 80)


def _x(side=8, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(1, 3, side, side, generator=g, dtype=torch.float64) * 2 - 1


@pytest.mark.parametrize("n", [4, 40, 80])
def test_zero_predictor_closed_forms(n):
    s = make_cosine_schedule(80)
    grid = make_step_grid(n, 80)
    x = _x()
    lat = ddim_invert(x, ZeroPredictor(), s, grid)
    scale = np.sqrt(s.alpha_bars[grid[-1]])
    assert torch.max(torch.abs(lat - scale * x)) <= 1e-12
    back = ddim_sample(lat, ZeroPredictor(), s, grid)
    assert torch.max(torch.abs(back - lat / scale)) <= 1e-12


def test_invert_and_sample_are_deterministic():
    s = make_cosine_schedule(80)
    p = ToyNoisePredictor(out_scale=0.05).double()
    g = make_step_grid(10, 80)
    x = _x(16)
    with torch.no_grad():
        a, b = ddim_invert(x, p, s, g), ddim_invert(x, p, s, g)
        assert torch.equal(a, b)
        assert torch.equal(ddim_sample(a, p, s, g), ddim_sample(b, p, s, g))


def test_toy_predictor_rebuilds_identically():
    x, t = _x(16).float(), torch.tensor([10])
    with torch.no_grad():
        assert torch.equal(ToyNoisePredictor(seed=3)(x, t), ToyNoisePredictor(seed=3)(x, t))
        assert not torch.equal(ToyNoisePredictor(seed=3)(x, t), ToyNoisePredictor(seed=4)(x, t))


@pytest.mark.parametrize("direction", ["invert", "sample"])
def test_matches_step_by_step_oracle(direction):
    s = make_cosine_schedule(80)
    grid = make_step_grid(4, 80)
    p = ToyNoisePredictor(out_scale=0.05, seed=7).double()

    def eps_fn(x, t):
        with torch.no_grad():
            return p(torch.from_numpy(x), torch.tensor([t])).numpy()

    x = _x(8)
    with torch.no_grad():
        got = (ddim_invert if direction == "invert" else ddim_sample)(x, p, s, grid).numpy()
    want = ddim_roundtrip_oracle(x.numpy(), eps_fn, list(s.alpha_bars), grid, direction)
    assert np.max(np.abs(got - want)) <= 1e-5


def _roundtrip_error(p, n_inv, n_samp, last=None, side=32):
    s = make_cosine_schedule(80)
    gi = make_step_grid(n_inv, 80, last=last)
    gs = make_step_grid(n_samp, 80, last=gi[-1] if last is not None else None)
    x = _x(side, seed=1)
    with torch.no_grad():
        return float(torch.max(torch.abs(ddim_sample(ddim_invert(x, p, s, gi), p, s, gs) - x)))


def test_matched_round_trip_is_close():
    p = ToyNoisePredictor().double()
    assert _roundtrip_error(p, 40, 40) <= 1e-2


def test_round_trip_error_shrinks_with_more_steps():
    # grids share their last timestep so only the step count varies
    p = ToyNoisePredictor(out_scale=1e-3).double()
    errs = [_roundtrip_error(p, n, n, last=78) for n in (5, 10, 20, 40)]
    assert all(b < a for a, b in zip(errs, errs[1:])), errs


def test_asymmetric_grids_lose_information():
    p = ToyNoisePredictor().double()
    matched = _roundtrip_error(p, 40, 40, last=78)
    assert _roundtrip_error(p, 40, 6, last=78) > matched
    # without a shared endpoint the 6-step grid starts at the wrong noise level
    assert _roundtrip_error(p, 40, 6) > matched


def test_sample_keeps_gradients():
    s = make_cosine_schedule(80)
    p = ToyNoisePredictor()
    x = _x(16).float()
    g = make_step_grid(6, 80)
    out = ddim_sample(x, p, s, g)
    out.sum().backward()
    assert any(q.grad is not None and q.grad.abs().sum() > 0 for q in p.parameters())


def test_bad_grid_rejected():
    s = make_cosine_schedule(80)
    with pytest.raises(ValueError):
        ddim_invert(_x(), ZeroPredictor(), s, (0, 5, 5))
    with pytest.raises(ValueError):
        ddim_sample(_x(), ZeroPredictor(), s, (0, 80))
