"""Synthetic source-filter speech for smoke tests and desk-scale experiments.

Each toy speaker has its own pitch range, vocal-tract length (formant scale)
and spectral tilt; utterances are random sequences of vowel-like and
fricative-like segments.
"""

from pathlib import Path

import numpy as np
from scipy import signal

from .corpus import SAMPLE_RATE, AudioClip, UtteranceRecord, load_manifest, write_manifest, write_wav

# (F1, F2, F3) in Hz for a handful of vowels
VOWELS = np.array(
    [
        [730, 1090, 2440],
        [270, 2290, 3010],
        [530, 1840, 2480],
        [570, 840, 2410],
        [300, 870, 2240],
        [660, 1720, 2410],
        [490, 1350, 1690],
    ],
    dtype=np.float64,
)

SPEAKER_PROFILES = [
    # f0 (Hz), formant scale, tilt
    (105.0, 1.00, 1.0),
    (215.0, 1.17, 0.6),
    (150.0, 0.94, 0.8),
    (260.0, 1.22, 0.5),
    (125.0, 1.05, 1.2),
    (185.0, 1.10, 0.7),
    (95.0, 0.90, 1.1),
    (235.0, 1.15, 0.9),
    (165.0, 1.02, 0.6),
    (140.0, 0.97, 1.0),
]


def speaker_profile(index):
    if index < len(SPEAKER_PROFILES):
        return SPEAKER_PROFILES[index]
    rng = np.random.default_rng(1000 + index)
    return (float(rng.uniform(90, 260)), float(rng.uniform(0.9, 1.22)), float(rng.uniform(0.5, 1.2)))


def _resonator_sos(freq, bw):
    r = np.exp(-np.pi * bw / SAMPLE_RATE)
    theta = 2 * np.pi * freq / SAMPLE_RATE
    a = [1.0, -2 * r * np.cos(theta), r * r]
    b = [1.0 - r, 0.0, 0.0]
    return np.concatenate([b, a])


def synth_utterance(profile, seconds, rng):
    f0_base, scale, tilt = profile
    n = int(round(seconds * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    drift = 1.0 + 0.06 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * t + rng.uniform(0, 2 * np.pi))
    f0 = f0_base * drift * (1.0 + 0.004 * rng.standard_normal(n).cumsum() / np.sqrt(np.arange(1, n + 1)))
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    n_harm = int(7000 // f0.min())
    source = np.zeros(n)
    for k in range(1, n_harm + 1):
        mask = (k * f0) < 7500
        source += mask * np.sin(k * phase) / k**tilt

    out = np.zeros(n)
    pos = 0
    zi = None
    vowel_order = []
    while pos < n:
        seg = min(int(rng.uniform(0.12, 0.3) * SAMPLE_RATE), n - pos)
        kind = rng.uniform()
        if kind < 0.15:
            # fricative
            exc = 0.3 * rng.standard_normal(seg)
            sos = np.stack([_resonator_sos(scale * 4300, 900), _resonator_sos(scale * 5600, 1200),
                            _resonator_sos(scale * 3000, 1500)])
        elif kind < 0.22:
            exc = np.zeros(seg)
            sos = np.stack([_resonator_sos(500, 100)] * 3)
        else:
            if not vowel_order:
                vowel_order = list(rng.permutation(len(VOWELS)))
            formants = VOWELS[vowel_order.pop()] * scale
            exc = source[pos : pos + seg]
            sos = np.stack([_resonator_sos(f, 60 + 0.06 * f) for f in formants])
        if zi is None:
            zi = np.zeros((3, 2))
        y, zi = signal.sosfilt(sos, exc, zi=zi)
        ramp = min(160, seg // 2)
        env = np.ones(seg)
        if ramp:
            env[:ramp] = np.linspace(0.2, 1, ramp)
            env[-ramp:] = np.linspace(1, 0.2, ramp)
        out[pos : pos + seg] = y * env
        pos += seg
    out *= 0.12 / (np.sqrt(np.mean(out**2)) + 1e-9)
    peak = np.max(np.abs(out))
    if peak > 0.95:
        out *= 0.95 / peak
    return out.astype(np.float32)


def make_toy_corpus(root, n_speakers=2, n_train=4, n_test=0, n_unseen_speakers=0, seconds=2.0, seed=0):
    """Write WAVs under ``root/<speaker>/`` plus ``root/manifest.jsonl``; returns the registry."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    records = []
    total = n_speakers + n_unseen_speakers
    for s in range(total):
        spk = f"spk{s:02d}"
        profile = speaker_profile(s)
        unseen = s >= n_speakers
        n_utts = n_train + n_test
        for u in range(n_utts):
            clip = AudioClip(synth_utterance(profile, seconds, rng))
            path = root / spk / f"{u:03d}.wav"
            write_wav(clip, path)
            split = "unseen" if unseen else ("train" if u < n_train else "test")
            records.append(UtteranceRecord(f"{spk}_{u:03d}", spk, path, split))
    write_manifest(records, root / "manifest.jsonl")
    return load_manifest(root / "manifest.jsonl")
