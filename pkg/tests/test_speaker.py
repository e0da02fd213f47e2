import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lvcvc.config import TrainConfig
from lvcvc.errors import DataError
from lvcvc.speaker import (
    VAR_FLOOR,
    EncoderConfig,
    SpeakerEncoder,
    SpeakerGaussian,
    fit_gaussian,
    gaussian_direction,
    load_encoder,
    load_gaussians,
    pretrain_speaker_encoder,
    sample_embedding,
    save_encoder,
    save_gaussians,
)

SMALL = EncoderConfig(embed_dim=32, channels=16, attention_dim=8, pretrain_steps=3, pretrain_batch=4, crop_frames=8)


def _unit(v):
    return v / np.linalg.norm(v)


def test_embed_unit_norm_and_deterministic(rng):
    torch.manual_seed(0)
    enc = SpeakerEncoder(SMALL).freeze()
    X = rng.standard_normal((30, 80)).astype(np.float32) - 5
    e = enc.embed(X)
    assert e.shape == (32,)
    assert abs(np.linalg.norm(e) - 1) <= 1e-5
    np.testing.assert_array_equal(e, enc.embed(X))
    assert abs(np.linalg.norm(enc.embed(X[:1])) - 1) <= 1e-5


def test_embed_rejects_empty():
    with pytest.raises(DataError):
        SpeakerEncoder(SMALL).embed(np.zeros((0, 80)))


def test_frozen_encoder_has_no_trainable_parameters():
    enc = SpeakerEncoder(SMALL).freeze()
    assert enc.frozen and not any(p.requires_grad for p in enc.parameters())


def test_pretraining_needs_two_speakers(rng):
    with pytest.raises(DataError):
        pretrain_speaker_encoder({"a": [rng.standard_normal((20, 80))]}, SMALL)


def test_pretraining_deterministic(rng):
    mels = {s: [rng.standard_normal((20, 80)).astype(np.float32) for _ in range(2)] for s in "ab"}
    one = pretrain_speaker_encoder(mels, SMALL)
    two = pretrain_speaker_encoder(mels, SMALL)
    for (k, a), (_, b) in zip(one.state_dict().items(), two.state_dict().items()):
        assert torch.equal(a, b), k


def test_encoder_store_round_trip(tmp_path, rng):
    torch.manual_seed(1)
    enc = SpeakerEncoder(SMALL).freeze()
    save_encoder(enc, tmp_path / "enc")
    back = load_encoder(tmp_path / "enc")
    X = rng.standard_normal((12, 80)).astype(np.float32)
    np.testing.assert_array_equal(enc.embed(X), back.embed(X))
    assert back.frozen


@pytest.mark.slow
def test_toy_pretraining_separates_speakers(tmp_path):
    from lvcvc.toy import make_toy_corpus
    from lvcvc.trainer import load_utterances

    reg = make_toy_corpus(tmp_path, n_speakers=2, n_train=4, n_test=5, seed=0)
    train = load_utterances(reg.split("train"))
    test = load_utterances(reg.split("test"))
    mels = {}
    for u in train:
        mels.setdefault(u.speaker_id, []).append(u.X)
    enc = pretrain_speaker_encoder(mels, TrainConfig.toy().encoder)
    centroids = {s: _unit(np.mean([enc.embed(X) for X in v], axis=0)) for s, v in mels.items()}
    E = np.stack([enc.embed(u.X) for u in test])
    spk = np.array([u.speaker_id for u in test])
    pred = [max(centroids, key=lambda s: e @ centroids[s]) for e in E]
    assert np.mean(np.array(pred) == spk) >= 0.9
    C = E @ E.T
    same = (spk[:, None] == spk[None]) & ~np.eye(len(spk), dtype=bool)
    assert C[same].min() >= 0.7
    assert C[spk[:, None] != spk[None]].mean() < C[same].mean()


# -- Gaussians -----------------------------------------------------------------


def test_single_embedding_gaussian(rng):
    e = _unit(rng.standard_normal(16))
    g = fit_gaussian([e])
    np.testing.assert_array_equal(g.mean, e)
    np.testing.assert_array_equal(g.var, VAR_FLOOR)
    assert g.count == 1
    g = fit_gaussian([e] * 5)
    np.testing.assert_allclose(g.mean, e, atol=1e-15)
    np.testing.assert_array_equal(g.var, VAR_FLOOR)


def test_gaussian_matches_direct_statistics(rng):
    E = rng.standard_normal((100, 8))
    g = fit_gaussian(E)
    for j in range(8):
        col = [row[j] for row in E]
        mu = sum(col) / len(col)
        var = sum((c - mu) ** 2 for c in col) / len(col)
        assert abs(g.mean[j] - mu) <= 1e-6
        assert abs(g.var[j] - max(var, VAR_FLOOR)) <= 1e-6
    assert g.count == 100


def test_fit_gaussian_empty():
    with pytest.raises(DataError):
        fit_gaussian([])


@given(arrays(np.float64, (6, 4), elements=st.floats(-1, 1)), st.permutations(range(6)))
def test_fit_gaussian_permutation_invariant(E, perm):
    a, b = fit_gaussian(E), fit_gaussian(E[list(perm)])
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)
    np.testing.assert_allclose(a.var, b.var, atol=1e-12)


def test_degenerate_sample_is_mean_direction(rng):
    mean = rng.standard_normal(32)
    s = sample_embedding(SpeakerGaussian(mean, np.full(32, VAR_FLOOR), 1), rng)
    np.testing.assert_allclose(s, _unit(mean), atol=1e-2)


def test_sampling_seeded():
    g = SpeakerGaussian(np.ones(8), np.full(8, 0.1), 3)
    a = sample_embedding(g, np.random.default_rng(5))
    b = sample_embedding(g, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


@given(arrays(np.float64, 6, elements=st.floats(-2, 2)), arrays(np.float64, 6, elements=st.floats(1e-6, 1.0)),
       st.integers(0, 1000))
def test_samples_are_unit_norm(mean, var, seed):
    s = sample_embedding(SpeakerGaussian(mean + 3.0, var, 1), np.random.default_rng(seed))
    assert abs(np.linalg.norm(s) - 1) <= 1e-9


def test_monte_carlo_mean_direction():
    # with isotropic variance the expected sample points along the mean
    mean = np.array([0.6, -0.3, 0.2, 0.7])
    g = SpeakerGaussian(mean, np.full(4, 0.01), 10)
    r = np.random.default_rng(0)
    S = np.stack([sample_embedding(g, r) for _ in range(10_000)])
    est = S.mean(axis=0)
    se = S.std(axis=0) / np.sqrt(len(S))
    target = _unit(mean) * np.linalg.norm(est)
    assert np.all(np.abs(est - target) <= 3 * se + 1e-12)
    assert est @ _unit(mean) / np.linalg.norm(est) > 0.9999


def test_gaussian_store_round_trip(tmp_path, rng):
    gs = {"b": fit_gaussian(rng.standard_normal((3, 4))), "a": fit_gaussian(rng.standard_normal((2, 4)))}
    save_gaussians(gs, tmp_path / "g", median_bins={"a": 12})
    back, medians = load_gaussians(tmp_path / "g")
    assert sorted(back) == ["a", "b"] and medians == {"a": 12}
    np.testing.assert_allclose(back["b"].mean, gs["b"].mean, atol=1e-7)
    assert back["a"].count == 2
    np.testing.assert_allclose(gaussian_direction(back["a"]), _unit(gs["a"].mean), atol=1e-6)
