import numpy as np

from lvcvc.corpus import read_wav
from lvcvc.features import estimate_f0
from lvcvc.toy import SPEAKER_PROFILES, make_toy_corpus, speaker_profile


def test_corpus_layout(tmp_path):
    reg = make_toy_corpus(tmp_path, n_speakers=2, n_train=2, n_test=1, n_unseen_speakers=1, seconds=0.5, seed=1)
    assert sorted(reg.speakers) == ["spk00", "spk01", "spk02"]
    assert reg.unseen == {"spk02"}
    assert len(reg.split("train")) == 4 and len(reg.split("test")) == 2 and len(reg.split("unseen")) == 3
    clip = read_wav(reg.records[0].path)
    assert len(clip) == 8000
    assert np.max(np.abs(clip.samples)) <= 0.95 + 2**-15


def test_deterministic(tmp_path):
    a = make_toy_corpus(tmp_path / "a", n_speakers=2, n_train=1, seconds=0.3, seed=5)
    b = make_toy_corpus(tmp_path / "b", n_speakers=2, n_train=1, seconds=0.3, seed=5)
    for ra, rb in zip(a.records, b.records):
        assert ra.path.read_bytes() == rb.path.read_bytes()


def test_speakers_have_distinct_pitch(tmp_path):
    reg = make_toy_corpus(tmp_path, n_speakers=2, n_train=1, seconds=1.0, seed=0)
    medians = []
    for rec in reg.records:
        f0 = estimate_f0(read_wav(rec.path))
        medians.append(np.median(f0[f0 > 0]))
    assert abs(medians[0] - SPEAKER_PROFILES[0][0]) < 20
    assert abs(medians[1] - SPEAKER_PROFILES[1][0]) < 30


def test_profiles_beyond_table_are_seeded():
    assert speaker_profile(40) == speaker_profile(40)
    assert speaker_profile(40) != speaker_profile(41)
