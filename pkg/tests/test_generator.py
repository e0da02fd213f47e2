import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from lvcvc.config import GeneratorConfig
from lvcvc.features import MEDIAN_BINS, PNORM_DIM, one_hot
from lvcvc.generator import Generator, generate, generate_with_taps, sample_noise


@pytest.fixture(scope="module")
def G():
    torch.manual_seed(0)
    return Generator()


def _inputs(frames, seed=0, d=256):
    r = np.random.default_rng(seed)
    H = (r.standard_normal((frames, 80)) - 4).astype(np.float32)
    p = one_hot(r.integers(0, PNORM_DIM, frames), PNORM_DIM)
    s = r.standard_normal(d)
    s = (s / np.linalg.norm(s)).astype(np.float32)
    m = one_hot(20, MEDIAN_BINS)
    return sample_noise(frames, seed), H, p, s, m


def test_noise_contract():
    a, b = sample_noise(7, 3), sample_noise(7, 3)
    np.testing.assert_array_equal(a, b)
    assert sample_noise(1, 0).shape == (64, 1)
    with pytest.raises(ValueError):
        sample_noise(0, 0)


def test_noise_moments():
    z = sample_noise(15625, 11)  # 64 x 15625 = 1e6 draws
    assert abs(z.mean()) <= 0.01
    assert abs(z.var() - 1) <= 0.02


def test_ten_frames(G):
    audio = generate(G, *_inputs(10))
    assert audio.shape == (2560,)
    assert np.all(np.abs(audio) <= 1)
    np.testing.assert_array_equal(audio, generate(G, *_inputs(10)))


def test_taps(G):
    audio, taps = generate_with_taps(G, *_inputs(10))
    assert [t.shape for t in taps] == [(16, 80), (16, 640), (16, 2560)]
    np.testing.assert_array_equal(audio, generate(G, *_inputs(10)))


@settings(max_examples=8)
@given(st.integers(1, 100))
def test_length_law(G, frames):
    assert generate(G, *_inputs(frames)).shape == (256 * frames,)


def test_zeroed_groups_are_total(G):
    z, H, p, s, m = _inputs(6)
    normal = generate(G, z, H, p, s, m)
    spk0 = generate(G, z, H, p, np.zeros_like(s), np.zeros_like(m))
    cnt0 = generate(G, z, np.zeros_like(H), np.zeros_like(p), s, m)
    for out in (spk0, cnt0):
        assert out.shape == normal.shape and np.all(np.isfinite(out))
    assert not np.array_equal(spk0, normal) and not np.array_equal(cnt0, normal)


def test_frame_mismatch(G):
    z, H, p, s, m = _inputs(6)
    with pytest.raises(ValueError):
        generate(G, z[:, :5], H, p, s, m)
    with pytest.raises(ValueError):
        generate(G, z, H, p[:5], s, m)


def test_every_parameter_gets_gradient():
    torch.manual_seed(0)
    G = Generator(GeneratorConfig(kp_hidden=16, kp_residual=1))
    z, H, p, s, m = (torch.from_numpy(np.asarray(a))[None] for a in _inputs(4))
    out = G(z, H, p, s, m)
    weights = torch.randn_like(out)
    (out * weights).sum().backward()
    dead = [n for n, prm in G.named_parameters() if prm.grad is None or not prm.grad.abs().sum() > 0]
    assert not dead


@pytest.mark.parametrize("pn,mf,channels", [(True, True, 657), (False, True, 400), (True, False, 593)])
def test_ablated_conditioning_channels(pn, mf, channels):
    G = Generator(GeneratorConfig(kp_hidden=8, kp_residual=1), use_pnorm=pn, use_median_f0=mf)
    assert G.cond_channels == channels
    assert G.stacks[0].kernel_predictor.input_conv[0].in_channels == channels
    z, H, p, s, m = _inputs(3)
    audio = generate(G, z, H, p if pn else None, s, m if mf else None)
    assert audio.shape == (768,)


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(upsample_rates=(8, 8, 8))
    with pytest.raises(ValueError):
        GeneratorConfig(dilations=(1, 3, 3, 27))
