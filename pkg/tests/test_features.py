import numpy as np
import pytest
import torch
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import sine
from lvcvc.corpus import AudioClip
from lvcvc.errors import DataError
from lvcvc.features import (
    LOG_FLOOR,
    LogMel,
    build_conditioning,
    compute_log_mel,
    conditioning_channels,
    estimate_f0,
    extract_features,
    f0_to_median_bin,
    lifter_envelope,
    load_features,
    median_f0_bin,
    median_f0_onehot,
    mel_filterbank,
    mel_frequencies,
    one_hot,
    pnorm_f0,
    pnorm_indices,
    save_features,
    warp_envelope,
)

finite = st.floats(-20, 20, allow_nan=False)


# -- log-mel -------------------------------------------------------------------


def test_frame_count_and_shape():
    X = compute_log_mel(AudioClip(np.zeros(16000)))
    assert X.shape == (63, 80)
    assert X.dtype == np.float32


def test_silence_hits_the_log_floor():
    X = compute_log_mel(AudioClip(np.zeros(4000)))
    np.testing.assert_allclose(X, np.log(LOG_FLOOR), rtol=0, atol=1e-6)


def test_sine_peaks_at_nearest_mel_centre():
    X = compute_log_mel(AudioClip(sine(1000.0)))
    centres = mel_frequencies()[1:-1]
    expected = int(np.argmin(np.abs(centres - 1000.0)))
    assert np.all(np.argmax(X, axis=1) == expected)


def test_filterbank_rows_peak_at_their_centres():
    fb = mel_filterbank()
    freqs = np.linspace(0, 8000, fb.shape[1])
    centres = mel_frequencies()[1:-1]
    spacing = freqs[1]
    # every filter above the first few is wide enough to contain an FFT bin at its apex
    for i in range(10, 80):
        assert abs(freqs[np.argmax(fb[i])] - centres[i]) <= spacing


def test_empty_clip_rejected():
    with pytest.raises(DataError):
        compute_log_mel(np.zeros(0))


def test_torch_twin_matches_numpy(rng):
    x = (0.3 * rng.standard_normal(8000)).astype(np.float32)
    ref = compute_log_mel(AudioClip(x))
    out = LogMel()(torch.from_numpy(x)[None])[0].numpy()
    assert out.shape == ref.shape
    assert np.max(np.abs(out - ref)) < 1e-2


# -- liftering -----------------------------------------------------------------


def _dct_matrix(n):
    # orthonormal DCT-II written out from its definition
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    D = np.cos(np.pi * (i + 0.5) * k / n) * np.sqrt(2.0 / n)
    D[0] /= np.sqrt(2.0)
    return D


def test_lifter_matches_explicit_transform(rng):
    D = _dct_matrix(80)
    X = rng.standard_normal((7, 80))
    ceps = X @ D.T
    ceps[:, 20:] = 0
    np.testing.assert_allclose(lifter_envelope(X), ceps @ D, atol=1e-6)


def test_lifter_constant_frame_is_fixed_point():
    X = np.full((3, 80), -2.5)
    np.testing.assert_allclose(lifter_envelope(X), X, atol=1e-6)


def test_lifter_range_checked():
    with pytest.raises(ValueError):
        lifter_envelope(np.zeros((1, 80)), 0)
    with pytest.raises(ValueError):
        lifter_envelope(np.zeros((1, 80)), 81)


@given(arrays(np.float64, (4, 80), elements=finite), st.integers(1, 80))
def test_lifter_idempotent(X, n):
    once = lifter_envelope(X, n)
    np.testing.assert_allclose(lifter_envelope(once, n), once, atol=1e-6)


@given(arrays(np.float64, (3, 80), elements=finite), arrays(np.float64, (3, 80), elements=finite), finite, finite)
def test_lifter_linear(X, Y, a, b):
    lhs = lifter_envelope(a * X + b * Y)
    rhs = a * lifter_envelope(X) + b * lifter_envelope(Y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-6 * max(1.0, np.abs(lhs).max()))


# -- warping -------------------------------------------------------------------


def _warp_oracle(H, alpha):
    src = np.arange(H.shape[-1]) / alpha
    return np.stack([np.interp(src, np.arange(H.shape[-1]), row) for row in H])


def test_identity_warp():
    H = np.random.default_rng(0).standard_normal((5, 80)).astype(np.float32)
    out = warp_envelope(H, 1.0)
    assert np.array_equal(out, H)


def test_impulse_moves_to_scaled_position():
    H = np.zeros((1, 80))
    H[0, 20] = 1.0
    out = warp_envelope(H, 1.15)
    np.testing.assert_allclose(out, _warp_oracle(H, 1.15), atol=1e-12)
    assert int(np.argmax(out[0])) == 23


def test_ramp_compression_closed_form():
    H = np.arange(80, dtype=np.float64)[None]
    out = warp_envelope(H, 0.85)[0]
    b = np.arange(80)
    inside = b / 0.85 <= 79
    np.testing.assert_allclose(out[inside], b[inside] / 0.85, atol=1e-9)
    np.testing.assert_allclose(out[~inside], 79.0)


def test_warp_range_checked():
    with pytest.raises(ValueError):
        warp_envelope(np.zeros((1, 80)), 1.2)


@given(arrays(np.float64, (2, 80), elements=finite), st.floats(0.85, 1.15))
def test_warp_matches_oracle_and_stays_in_hull(H, alpha):
    out = warp_envelope(H, alpha)
    np.testing.assert_allclose(out, _warp_oracle(H, alpha), atol=1e-9)
    assert np.all(out <= H.max(axis=1, keepdims=True) + 1e-9)
    assert np.all(out >= H.min(axis=1, keepdims=True) - 1e-9)


# -- pitch ---------------------------------------------------------------------


def test_sine_220():
    f0 = estimate_f0(AudioClip(sine(220.0)))
    assert f0.shape == (63,)
    voiced = f0 > 0
    assert voiced.mean() >= 0.9
    assert np.all((f0[voiced] >= 218) & (f0[voiced] <= 222))


def test_silence_unvoiced():
    assert np.all(estimate_f0(AudioClip(np.zeros(16000))) == 0)


def test_white_noise_mostly_unvoiced(rng):
    f0 = estimate_f0(AudioClip(0.3 * rng.standard_normal(16000)))
    assert (f0 == 0).mean() >= 0.8


@pytest.mark.parametrize("freq", [80.0, 150.0, 400.0])
def test_f0_within_search_range(freq):
    f0 = estimate_f0(AudioClip(sine(freq, 0.5)))
    voiced = f0[f0 > 0]
    assert voiced.size and np.all((voiced >= 50) & (voiced <= 600))
    assert abs(np.median(voiced) - freq) < 0.02 * freq


def test_pnorm_constant_contour():
    idx = pnorm_indices(np.full(20, 220.0))
    assert np.all(idx == 128)


def test_pnorm_unvoiced_and_one_hot():
    P = pnorm_f0(np.zeros(5))
    assert P.shape == (5, 257)
    assert np.all(P[:, 256] == 1)
    P = pnorm_f0(np.array([0, 100.0, 200.0, 0, 150.0]))
    np.testing.assert_array_equal(P.sum(axis=1), 1.0)
    assert P[0, 256] == 1 and P[3, 256] == 1


def test_pnorm_formula():
    f0 = np.array([100.0, 200.0, 0.0, 140.0])
    logf = np.log(f0[f0 > 0])
    z = np.clip((logf - logf.mean()) / logf.std(), -3, 3)
    expected = np.floor(256 * (z + 3) / 6).astype(int)
    assert list(pnorm_indices(f0)) == [expected[0], expected[1], 256, expected[2]]


contours = arrays(np.float64, st.integers(2, 60), elements=st.one_of(st.just(0.0), st.floats(50, 600)))


@given(contours, st.floats(0.25, 4.0))
def test_pnorm_scale_invariant(f0, c):
    np.testing.assert_array_equal(pnorm_indices(f0), pnorm_indices(f0 * c))


def _median_bin_by_scan(hz):
    lo, hi = np.log(65.4), np.log(523.3)
    edges = [lo + (hi - lo) * b / 64 for b in range(64)]
    found = 0
    for b, e in enumerate(edges):
        if np.log(hz) >= e:
            found = b
    return found


@pytest.mark.parametrize("hz,expected", [(65.4, 0), (30.0, 0), (220.0, 37), (2000.0, 63)])
def test_median_bins(hz, expected):
    assert f0_to_median_bin(hz) == expected
    assert median_f0_bin(np.array([0.0, hz, hz])) == expected


@given(st.floats(20, 2000))
def test_median_bin_matches_scan(hz):
    assume(abs(64 * (np.log(hz) - np.log(65.4)) / (np.log(523.3) - np.log(65.4)) % 1) > 1e-9)
    assert f0_to_median_bin(hz) == _median_bin_by_scan(hz)


@given(st.floats(20, 2000), st.floats(20, 2000))
def test_median_bin_monotone(a, b):
    lo, hi = sorted((a, b))
    assert f0_to_median_bin(lo) <= f0_to_median_bin(hi)


def test_median_onehot_requires_voicing():
    m = median_f0_onehot(np.array([0.0, 110.0, 112.0]))
    assert m.shape == (64,) and m.sum() == 1
    with pytest.raises(DataError):
        median_f0_onehot(np.zeros(4))


# -- conditioning and cache ----------------------------------------------------


def test_conditioning_bundle(rng):
    H = rng.standard_normal((10, 80))
    p = pnorm_f0(np.full(10, 150.0))
    s = rng.standard_normal(256)
    m = one_hot(30, 64)
    C = build_conditioning(H, p, s, m)
    assert C.shape == (10, 657) == (10, conditioning_channels())
    np.testing.assert_array_equal(C, build_conditioning(H, p, s, m))
    content_only = build_conditioning(H, p, np.zeros(256), np.zeros(64))
    np.testing.assert_array_equal(content_only[:, :337], C[:, :337])
    assert not content_only[:, 337:].any()
    assert build_conditioning(H, None, s, None).shape == (10, 336)
    with pytest.raises(ValueError):
        build_conditioning(H, p[:9], s, m)


def test_ablated_channel_counts():
    assert conditioning_channels(256, use_pnorm=False) == 657 - 257
    assert conditioning_channels(256, use_median_f0=False) == 657 - 64


def test_feature_cache_round_trip(tmp_path):
    feats = extract_features(AudioClip(sine(180.0)))
    assert feats["X"].shape == feats["H"].shape == (63, 80)
    assert feats["p_norm"].shape == feats["f0_hz"].shape == (63,)
    save_features(feats, tmp_path / "a.npz")
    save_features(extract_features(AudioClip(sine(180.0))), tmp_path / "b.npz")
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    back = load_features(tmp_path / "a.npz")
    for k, v in feats.items():
        np.testing.assert_array_equal(back[k], v)


def test_unvoiced_clip_gets_sentinel_median():
    assert int(extract_features(AudioClip(np.zeros(4000)))["m"]) == -1
