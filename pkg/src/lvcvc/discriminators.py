"""Multi-resolution spectrogram and multi-period waveform discriminators."""

import torch
import torch.nn.functional as F
from torch import nn

from .config import DiscriminatorConfig
from .losses import stft_magnitude


class SpectrogramDiscriminator(nn.Module):
    """2-D conv stack over one STFT magnitude resolution."""

    def __init__(self, resolution, channels=32, slope=0.2):
        super().__init__()
        self.resolution = tuple(resolution)
        c = channels
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(1, c, (3, 9), padding=(1, 4)),
                nn.Conv2d(c, c, (3, 9), stride=(1, 2), padding=(1, 4)),
                nn.Conv2d(c, c, (3, 9), stride=(1, 2), padding=(1, 4)),
                nn.Conv2d(c, c, (3, 9), stride=(1, 2), padding=(1, 4)),
                nn.Conv2d(c, c, (3, 3), padding=(1, 1)),
            ]
        )
        self.out = nn.Conv2d(c, 1, (3, 3), padding=(1, 1))
        self.slope = slope

    def spectrogram(self, x):
        return stft_magnitude(x, *self.resolution)

    def forward(self, x):
        h = self.spectrogram(x)[:, None]
        for conv in self.convs:
            h = F.leaky_relu(conv(h), self.slope)
        return self.out(h)


def period_reshape(x, period):
    """``(B, T)`` -> ``(B, 1, ceil(T / period), period)``, reflect-padding the end."""
    batch, length = x.shape
    rem = length % period
    if rem:
        x = F.pad(x[:, None], (0, period - rem), mode="reflect")[:, 0]
    return x.view(batch, 1, -1, period)


class PeriodDiscriminator(nn.Module):
    """2-D conv stack over the waveform folded into ``period`` columns."""

    def __init__(self, period, channels=(32, 128, 512, 1024), slope=0.2):
        super().__init__()
        self.period = period
        layers = []
        c_in = 1
        for c in channels:
            layers.append(nn.Conv2d(c_in, c, (5, 1), stride=(3, 1), padding=(2, 0)))
            c_in = c
        layers.append(nn.Conv2d(c_in, c_in, (5, 1), padding=(2, 0)))
        self.convs = nn.ModuleList(layers)
        self.out = nn.Conv2d(c_in, 1, (3, 1), padding=(1, 0))
        self.slope = slope

    def forward(self, x):
        h = period_reshape(x, self.period)
        for conv in self.convs:
            h = F.leaky_relu(conv(h), self.slope)
        return self.out(h)


class Discriminators(nn.Module):
    """All ``K = M + len(periods)`` sub-discriminators; ``forward`` returns their score maps."""

    def __init__(self, cfg: DiscriminatorConfig = None):
        super().__init__()
        self.cfg = cfg = cfg or DiscriminatorConfig()
        self.mrsd = nn.ModuleList(SpectrogramDiscriminator(r, cfg.mrsd_channels, cfg.slope) for r in cfg.resolutions)
        self.mpwd = nn.ModuleList(PeriodDiscriminator(p, cfg.mpwd_channels, cfg.slope) for p in cfg.periods)

    @property
    def min_length(self):
        longest = max(max(win, n_fft // 2 + 1) for n_fft, _, win in self.cfg.resolutions)
        return max([longest] + [p + 1 for p in self.cfg.periods])

    def _check(self, x):
        if x.dim() == 1:
            x = x[None]
        if x.shape[-1] < self.min_length:
            raise ValueError(f"clip of {x.shape[-1]} samples is shorter than the minimum {self.min_length}")
        return x

    def mrsd_forward(self, x):
        x = self._check(x)
        return [d(x) for d in self.mrsd]

    def mpwd_forward(self, x):
        x = self._check(x)
        return [d(x) for d in self.mpwd]

    def forward(self, x):
        return self.mrsd_forward(x) + self.mpwd_forward(x)
