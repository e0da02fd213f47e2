"""Location-variable convolutions.

A location-variable convolution splits a length-``T`` signal into ``T_h``
equal intervals and convolves interval ``t`` with its own kernel ``W_t`` and
bias ``b_t``. Taps read the true neighbouring samples across interval
boundaries; only the two ends of the whole sequence are zero padded, so the
output has no seams at interval edges.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import _accel


def _check_shapes(length, n_intervals, kernel_size):
    if n_intervals < 1 or length % n_intervals:
        raise ValueError(f"signal length {length} is not divisible by {n_intervals} kernel frames")
    if kernel_size % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {kernel_size}")


def lvc_apply(x, weight, bias=None, dilation: int = 1):
    """Vectorized location-variable convolution.

    Args:
        x: ``(B, C_in, T)`` or ``(C_in, T)`` input.
        weight: ``(B, T_h, C_out, C_in, k)`` (or without batch) per-interval kernels.
        bias: ``(B, T_h, C_out)`` (or without batch), optional.
        dilation: tap spacing.

    Returns:
        ``(B, C_out, T)`` output (batch dim dropped if ``x`` had none).
    """
    squeeze = x.dim() == 2
    if squeeze:
        x, weight = x[None], weight[None]
        bias = None if bias is None else bias[None]
    batch, c_in, length = x.shape
    _, n_intervals, c_out, c_in_w, k = weight.shape
    if c_in_w != c_in:
        raise ValueError(f"kernel expects {c_in_w} input channels, signal has {c_in}")
    if dilation < 1:
        raise ValueError("dilation must be positive")
    _check_shapes(length, n_intervals, k)
    hop = length // n_intervals
    pad = dilation * (k - 1) // 2
    xp = torch.nn.functional.pad(x, (pad, pad))
    taps = torch.stack([xp[..., j * dilation : j * dilation + length] for j in range(k)], dim=-1)
    taps = taps.view(batch, c_in, n_intervals, hop, k)
    out = torch.einsum("bitlk,btoik->botl", taps, weight)
    if bias is not None:
        out = out + bias.permute(0, 2, 1)[..., None]
    out = out.reshape(batch, c_out, length)
    return out[0] if squeeze else out


def lvc_apply_oracle(x, weight, bias, dilation: int = 1) -> np.ndarray:
    """Reference loop over (interval, output position, tap) in float64.

    ``x`` is ``(C_in, T)``, ``weight`` ``(T_h, C_out, C_in, k)``, ``bias``
    ``(T_h, C_out)``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    n_intervals, c_out = weight.shape[:2]
    bias = np.zeros((n_intervals, c_out)) if bias is None else np.ascontiguousarray(bias, dtype=np.float64)
    if x.shape[0] != weight.shape[2]:
        raise ValueError(f"kernel expects {weight.shape[2]} input channels, signal has {x.shape[0]}")
    if bias.shape != (n_intervals, c_out):
        raise ValueError("bias must have one row per kernel frame")
    _check_shapes(x.shape[1], n_intervals, weight.shape[3])
    return _accel.lvc_loop(x, weight, bias, int(dilation))


@dataclass
class KernelSet:
    """Predicted kernels for every gated LVC layer of one stack.

    ``weight``: ``(B, L, T_h, 2C, C, k)``; rows ``[:C]`` of the output-channel
    axis are the filter kernels, ``[C:]`` the gate kernels.
    ``bias``: ``(B, L, T_h, 2C)`` with the same split.
    """

    weight: torch.Tensor
    bias: torch.Tensor

    @property
    def n_layers(self):
        return self.weight.shape[1]

    @property
    def n_frames(self):
        return self.weight.shape[2]

    @property
    def channels(self):
        return self.weight.shape[4]

    def layer(self, i):
        return self.weight[:, i], self.bias[:, i]

    def filter(self, i):
        c = self.channels
        return self.weight[:, i, :, :c], self.bias[:, i, :, :c]

    def gate(self, i):
        c = self.channels
        return self.weight[:, i, :, c:], self.bias[:, i, :, c:]


class KernelPredictor(nn.Module):
    """Residual 1-D conv net mapping conditioning frames to a :class:`KernelSet`."""

    def __init__(
        self,
        cond_channels,
        channels=16,
        n_layers=4,
        kernel_size=3,
        hidden=64,
        n_residual=3,
        conv_size=3,
        slope=0.1,
        head_scale=0.1,
        zero_init_head=False,
    ):
        super().__init__()
        self.channels = channels
        self.n_layers = n_layers
        self.kernel_size = kernel_size
        pad = (conv_size - 1) // 2
        self.input_conv = nn.Sequential(nn.Conv1d(cond_channels, hidden, 5, padding=2), nn.LeakyReLU(slope))
        self.residual = nn.ModuleList(
            nn.Sequential(
                nn.Conv1d(hidden, hidden, conv_size, padding=pad),
                nn.LeakyReLU(slope),
                nn.Conv1d(hidden, hidden, conv_size, padding=pad),
                nn.LeakyReLU(slope),
            )
            for _ in range(n_residual)
        )
        n_kernel = n_layers * 2 * channels * channels * kernel_size
        self.kernel_head = nn.Conv1d(hidden, n_kernel, conv_size, padding=pad)
        self.bias_head = nn.Conv1d(hidden, n_layers * 2 * channels, conv_size, padding=pad)
        with torch.no_grad():
            for head in (self.kernel_head, self.bias_head):
                if zero_init_head:
                    head.weight.zero_()
                    head.bias.zero_()
                else:
                    head.weight.mul_(head_scale)
                    head.bias.mul_(head_scale)

    def forward(self, cond) -> KernelSet:
        """``cond``: ``(B, C_cond, T_h)`` conditioning frames."""
        if cond.shape[-1] < 1:
            raise ValueError("empty conditioning sequence")
        batch, _, frames = cond.shape
        h = self.input_conv(cond)
        for block in self.residual:
            h = h + block(h)
        c, k, n = self.channels, self.kernel_size, self.n_layers
        w = self.kernel_head(h).view(batch, n, 2 * c, c, k, frames).permute(0, 1, 5, 2, 3, 4)
        b = self.bias_head(h).view(batch, n, 2 * c, frames).permute(0, 1, 3, 2)
        return KernelSet(w.contiguous(), b.contiguous())


def lvc_block(x, kernels: KernelSet, dilations=(1, 3, 9, 27)):
    """Gated residual LVC layers applied in dilation order.

    Each layer computes ``x + tanh(lvc(x, W_f)) * sigmoid(lvc(x, W_g))``.
    """
    if len(dilations) != kernels.n_layers:
        raise ValueError(f"{kernels.n_layers} kernel layers for {len(dilations)} dilations")
    if x.shape[1] != kernels.channels:
        raise ValueError(f"signal has {x.shape[1]} channels, kernels expect {kernels.channels}")
    c = kernels.channels
    for i, d in enumerate(dilations):
        w, b = kernels.layer(i)
        h = lvc_apply(x, w, b, d)
        x = x + torch.tanh(h[:, :c]) * torch.sigmoid(h[:, c:])
    return x
