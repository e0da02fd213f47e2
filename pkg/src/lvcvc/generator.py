"""Waveform generator driven by location-variable convolutions."""

import numpy as np
import torch
from torch import nn

from .config import GeneratorConfig
from .features import MEDIAN_BINS, N_MELS, PNORM_DIM, conditioning_channels
from .lvc import KernelPredictor, lvc_block

TAPS_FORMAT = "lvcvc-taps"


def sample_noise(frames: int, seed: int, z_dim: int = 64) -> np.ndarray:
    """``(z_dim, frames)`` standard normal noise, deterministic per seed."""
    if frames < 1:
        raise ValueError("noise needs at least one frame")
    return np.random.default_rng(seed).standard_normal((z_dim, frames)).astype(np.float32)


class LVCStack(nn.Module):
    """Transposed-convolution upsampler followed by gated LVC layers."""

    def __init__(self, cond_channels, rate, cfg: GeneratorConfig):
        super().__init__()
        c = cfg.channels
        self.dilations = cfg.dilations
        self.upsample = nn.Sequential(
            nn.LeakyReLU(cfg.slope),
            nn.ConvTranspose1d(c, c, 2 * rate, stride=rate, padding=rate // 2),
        )
        self.kernel_predictor = KernelPredictor(
            cond_channels,
            channels=c,
            n_layers=len(cfg.dilations),
            kernel_size=cfg.kernel_size,
            hidden=cfg.kp_hidden,
            n_residual=cfg.kp_residual,
            conv_size=cfg.kp_conv_size,
        )

    def forward(self, x, cond):
        x = self.upsample(x)
        return lvc_block(x, self.kernel_predictor(cond), self.dilations)


class Generator(nn.Module):
    """``G(z, H, p_norm, s, m)`` -> waveform with 256 samples per frame.

    Conditioning channel layout is ``[H (80) | p_norm (257) | s (d) | m (64)]``;
    the ``p_norm`` and ``m`` groups are absent when disabled.
    """

    def __init__(self, cfg: GeneratorConfig = None, embed_dim=256, use_pnorm=True, use_median_f0=True):
        super().__init__()
        self.cfg = cfg = cfg or GeneratorConfig()
        self.embed_dim = embed_dim
        self.use_pnorm = use_pnorm
        self.use_median_f0 = use_median_f0
        self.cond_channels = conditioning_channels(embed_dim, use_pnorm, use_median_f0)
        self.input_conv = nn.Conv1d(cfg.z_dim, cfg.channels, 7, padding=3)
        self.stacks = nn.ModuleList(LVCStack(self.cond_channels, r, cfg) for r in cfg.upsample_rates)
        self.head = nn.Sequential(nn.LeakyReLU(cfg.slope), nn.Conv1d(cfg.channels, 1, 1), nn.Tanh())

    def conditioning(self, H, p=None, s=None, m=None):
        """Assemble ``(B, C_cond, frames)`` from ``H (B, F, 80)``, ``p (B, F, 257)``,
        ``s (B, d)`` and ``m (B, 64)``."""
        batch, frames, _ = H.shape
        parts = [H]
        if self.use_pnorm:
            if p is None or p.shape[:2] != (batch, frames):
                raise ValueError("p_norm must match H in batch and frame count")
            parts.append(p)
        parts.append(s[:, None, :].expand(batch, frames, s.shape[-1]))
        if self.use_median_f0:
            parts.append(m[:, None, :].expand(batch, frames, m.shape[-1]))
        cond = torch.cat(parts, dim=-1)
        if cond.shape[-1] != self.cond_channels:
            raise ValueError(f"conditioning has {cond.shape[-1]} channels, expected {self.cond_channels}")
        return cond.transpose(1, 2)

    def forward(self, z, H, p, s, m, return_taps=False):
        if z.shape[-1] != H.shape[1]:
            raise ValueError(f"noise has {z.shape[-1]} frames but content features have {H.shape[1]}")
        return self.forward_from_cond(z, self.conditioning(H, p, s, m), return_taps)

    def forward_from_cond(self, z, cond, return_taps=False):
        """Run on an already assembled ``(B, C_cond, frames)`` conditioning tensor."""
        x = self.input_conv(z)
        taps = []
        for stack in self.stacks:
            x = stack(x, cond)
            taps.append(x)
        audio = self.head(x).squeeze(1)
        return (audio, taps) if return_taps else audio


def _as_batch(arr, dims):
    t = torch.as_tensor(np.asarray(arr, dtype=np.float32))
    return t[None] if t.dim() == dims - 1 else t


@torch.no_grad()
def generate(G: Generator, z, H, p, s, m, return_taps=False):
    """Numpy convenience wrapper around one unbatched forward pass.

    ``z`` is ``(z_dim, F)``, ``H`` ``(F, 80)``, ``p`` ``(F, 257)`` one-hot or
    None, ``s`` ``(d,)``, ``m`` ``(64,)`` or None. Returns float32 samples of
    length ``256 * F`` (and per-stack ``(16, F * prod(rates[:i+1]))`` taps).
    """
    frames = np.asarray(H).shape[0]
    if np.asarray(z).shape[-1] != frames or (p is not None and np.asarray(p).shape[0] != frames):
        raise ValueError("z, H and p_norm must have the same frame count")
    was_training = G.training
    G.eval()
    zt = _as_batch(z, 3)
    Ht = _as_batch(H, 3)
    pt = _as_batch(p, 3) if p is not None else None
    st = _as_batch(s, 2)
    mt = _as_batch(m, 2) if m is not None else None
    out = G(zt, Ht, pt, st, mt, return_taps=return_taps)
    G.train(was_training)
    if return_taps:
        audio, taps = out
        return audio[0].numpy(), [t[0].numpy() for t in taps]
    return out[0].numpy()


def generate_with_taps(G, z, H, p, s, m):
    return generate(G, z, H, p, s, m, return_taps=True)


__all__ = ["Generator", "generate", "generate_with_taps", "sample_noise", "N_MELS", "PNORM_DIM", "MEDIAN_BINS"]
