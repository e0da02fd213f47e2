"""Reconstruction, speaker-similarity and least-squares adversarial criteria."""

import torch
import torch.nn.functional as F

POWER_FLOOR = 1e-7


def stft_magnitude(x, n_fft, hop, win_length):
    """Magnitude STFT ``(B, frames, n_fft // 2 + 1)`` of ``(B, T)`` audio (Hann window,
    centered framing, zero padded). Power is floored at ``POWER_FLOOR`` so logs are finite."""
    window = torch.hann_window(win_length, dtype=x.dtype, device=x.device)
    spec = torch.stft(
        x, n_fft, hop, win_length, window=window, center=True, pad_mode="constant", return_complex=True
    )
    power = spec.real**2 + spec.imag**2
    return torch.sqrt(torch.clamp(power, min=POWER_FLOOR)).transpose(1, 2)


def loss_sc(s, s_hat):
    """Spectral convergence ``||s - s_hat||_F / ||s||_F``, averaged over any batch dims."""
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch {tuple(s.shape)} vs {tuple(s_hat.shape)}")
    ref = torch.linalg.norm(s.reshape(*s.shape[:-2], -1), dim=-1) if s.dim() > 2 else torch.linalg.norm(s)
    if torch.any(ref == 0):
        raise ValueError("spectral convergence is undefined for an all-zero reference")
    diff = s - s_hat
    num = torch.linalg.norm(diff.reshape(*diff.shape[:-2], -1), dim=-1) if s.dim() > 2 else torch.linalg.norm(diff)
    return torch.mean(num / ref)


def loss_mag(s, s_hat):
    """Mean absolute log-magnitude difference over all elements."""
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch {tuple(s.shape)} vs {tuple(s_hat.shape)}")
    if torch.any(s <= 0) or torch.any(s_hat <= 0):
        raise ValueError("log magnitude loss needs strictly positive magnitudes")
    return torch.mean(torch.abs(torch.log(s) - torch.log(s_hat)))


def loss_aux(x, x_hat, resolutions):
    """Multi-resolution STFT loss: mean over resolutions of ``loss_sc + loss_mag``."""
    if x.shape[-1] != x_hat.shape[-1]:
        raise ValueError(f"length mismatch {x.shape[-1]} vs {x_hat.shape[-1]}")
    if x.dim() == 1:
        x, x_hat = x[None], x_hat[None]
    total = 0.0
    for n_fft, hop, win in resolutions:
        s = stft_magnitude(x, n_fft, hop, win)
        s_hat = stft_magnitude(x_hat, n_fft, hop, win)
        total = total + loss_sc(s, s_hat) + loss_mag(s, s_hat)
    return total / len(resolutions)


def loss_ssc(converted, target, raw_cosine=False):
    """``1 - mean cos(converted_n, target)``; ``raw_cosine`` returns the bare mean cosine.

    ``converted`` is ``(N, d)``; ``target`` is ``(d,)`` or ``(N, d)``.
    """
    if converted.dim() == 1:
        converted = converted[None]
    if converted.shape[0] < 1:
        raise ValueError("need at least one converted embedding")
    target = target.expand_as(converted) if target.dim() == 1 else target
    if torch.any(torch.linalg.norm(converted, dim=-1) == 0) or torch.any(torch.linalg.norm(target, dim=-1) == 0):
        raise ValueError("cosine similarity is undefined for zero-norm embeddings")
    cos = F.cosine_similarity(converted, target, dim=-1, eps=1e-12).mean()
    return cos if raw_cosine else 1.0 - cos


def adversarial_g(fake_scores):
    if not fake_scores:
        raise ValueError("no sub-discriminator outputs")
    return sum(torch.mean((d - 1.0) ** 2) for d in fake_scores) / len(fake_scores)


def loss_generator(fake_scores, x, x_hat, ssc_term, lambda_aux, lambda_ssc, resolutions, n_sub=None):
    """LSGAN generator objective plus weighted auxiliary and SSC terms.

    ``ssc_term`` may be a tensor or a float (use 0.0 when the criterion is off).
    ``n_sub`` optionally asserts the number of sub-discriminator outputs.
    """
    if n_sub is not None and len(fake_scores) != n_sub:
        raise ValueError(f"expected {n_sub} sub-discriminator outputs, got {len(fake_scores)}")
    total = adversarial_g(fake_scores)
    if lambda_aux:
        total = total + lambda_aux * loss_aux(x, x_hat, resolutions)
    if lambda_ssc:
        total = total + lambda_ssc * ssc_term
    return total


def loss_discriminator(real_scores, fake_scores):
    """``(1/K) sum_k [mean((D_k(x) - 1)^2) + mean(D_k(x_hat)^2)]``."""
    if len(real_scores) != len(fake_scores):
        raise ValueError(f"{len(real_scores)} real vs {len(fake_scores)} fake sub-discriminator outputs")
    if not real_scores:
        raise ValueError("no sub-discriminator outputs")
    total = 0.0
    for r, f in zip(real_scores, fake_scores):
        total = total + torch.mean((r - 1.0) ** 2) + torch.mean(f**2)
    return total / len(real_scores)
