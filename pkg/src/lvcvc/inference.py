"""Conversion and the objective proxies used by evaluation."""

import numpy as np
import torch

from .checkpoint import Checkpoint
from .config import DiscriminatorConfig
from .corpus import AudioClip
from .errors import DataError
from .features import MEDIAN_BINS, PNORM_DIM, compute_log_mel, one_hot
from .generator import generate, sample_noise
from .losses import loss_aux
from .speaker import gaussian_direction


def target_from_features(encoder, feats, embedding=None):
    """``(s, m_bin)`` for an ad-hoc target utterance: its raw embedding and own median F0 bin."""
    s = encoder.embed(feats["X"]) if embedding is None else np.asarray(embedding)
    return s.astype(np.float32), int(feats["m"])


def target_from_speaker(ckpt: Checkpoint, speaker_id):
    """``(s, m_bin)`` for a registered speaker: Gaussian mean direction and stored median bin."""
    if speaker_id not in ckpt.gaussians:
        raise DataError(f"speaker {speaker_id!r} has no Gaussian in this checkpoint")
    m = ckpt.median_bins.get(speaker_id, -1)
    return gaussian_direction(ckpt.gaussians[speaker_id]).astype(np.float32), int(m)


def convert(ckpt: Checkpoint, src_feats, s, m_bin, seed=0, return_taps=False):
    """Source ``H`` (never warped) and ``p_norm`` with target ``s`` and ``m``.

    Output length is ``256 * frames``; fixed ``seed`` gives bit-identical audio.
    """
    cfg = ckpt.config
    H = np.asarray(src_feats["H"], dtype=np.float32)
    frames = H.shape[0]
    p = one_hot(src_feats["p_norm"], PNORM_DIM) if cfg.use_pnorm else None
    m = None
    if cfg.use_median_f0:
        if m_bin is None or m_bin < 0:
            raise DataError("target has no voiced frames, so no median F0 is available")
        m = one_hot(int(m_bin), MEDIAN_BINS)
    z = sample_noise(frames, seed, cfg.generator.z_dim)
    return generate(ckpt.generator, z, H, p, s, m, return_taps=return_taps)


def stft_distance(x, y, resolutions=None):
    """Multi-resolution STFT distance (spectral convergence plus log magnitude)."""
    resolutions = resolutions or DiscriminatorConfig().resolutions
    n = min(len(x), len(y))
    with torch.no_grad():
        d = loss_aux(
            torch.as_tensor(np.asarray(x[:n], dtype=np.float32)),
            torch.as_tensor(np.asarray(y[:n], dtype=np.float32)),
            resolutions,
        )
    return float(d)


def embedding_cosine(encoder, audio, target):
    e = encoder.embed(compute_log_mel(AudioClip(np.clip(audio, -1.0, 1.0))))
    t = np.asarray(target, dtype=np.float64)
    return float(e @ t / (np.linalg.norm(e) * np.linalg.norm(t)))
