"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``LVCVC_DISABLE_NUMBA=1`` in the environment before import to force the
numpy implementations. Both paths are importable directly for testing and
benchmarking (``*_numba`` / ``*_numpy``).
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("LVCVC_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# ---------------------------------------------------------------------------
# Cumulative mean normalized difference function (pitch detection)
# ---------------------------------------------------------------------------


@njit(cache=True)
def cmndf_numba(frames, tau_max, width):
    n_frames = frames.shape[0]
    out = np.ones((n_frames, tau_max + 1))
    for f in range(n_frames):
        x = frames[f]
        running = 0.0
        for tau in range(1, tau_max + 1):
            acc = 0.0
            for j in range(width):
                diff = x[j] - x[j + tau]
                acc += diff * diff
            running += acc
            if running > 0.0:
                out[f, tau] = acc * tau / running
            else:
                out[f, tau] = 1.0
    return out


def cmndf_numpy(frames, tau_max, width):
    frames = np.asarray(frames, dtype=np.float64)
    n_frames, length = frames.shape
    head = frames[:, :width]
    energy0 = np.sum(head * head, axis=1, keepdims=True)
    csum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames * frames, axis=1)], axis=1)
    taus = np.arange(tau_max + 1)
    energy_tau = csum[:, taus + width] - csum[:, taus]
    n_fft = 1 << int(np.ceil(np.log2(length + width)))
    spec_full = np.fft.rfft(frames, n_fft, axis=1)
    spec_head = np.fft.rfft(head, n_fft, axis=1)
    corr = np.fft.irfft(spec_full * np.conj(spec_head), n_fft, axis=1)[:, : tau_max + 1]
    diff = np.maximum(energy0 + energy_tau - 2.0 * corr, 0.0)
    diff[:, 0] = 0.0
    running = np.cumsum(diff[:, 1:], axis=1)
    out = np.ones((n_frames, tau_max + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = diff[:, 1:] * taus[1:] / running
    out[:, 1:] = np.where(running > 0.0, ratio, 1.0)
    return out


# ---------------------------------------------------------------------------
# Location-variable convolution, explicit-loop reference
# ---------------------------------------------------------------------------


@njit(cache=True)
def lvc_loop_numba(x, weight, bias, dilation):
    c_in, length = x.shape
    n_intervals, c_out, _, k = weight.shape
    hop = length // n_intervals
    half = (k - 1) // 2
    out = np.zeros((c_out, length))
    for t in range(n_intervals):
        for n in range(t * hop, (t + 1) * hop):
            for o in range(c_out):
                acc = bias[t, o]
                for j in range(k):
                    src = n + (j - half) * dilation
                    if src < 0 or src >= length:
                        continue
                    for i in range(c_in):
                        acc += weight[t, o, i, j] * x[i, src]
                out[o, n] = acc
    return out


def lvc_loop_numpy(x, weight, bias, dilation):
    c_in, length = x.shape
    n_intervals, c_out, _, k = weight.shape
    hop = length // n_intervals
    half = (k - 1) // 2
    out = np.zeros((c_out, length))
    for t in range(n_intervals):
        for n in range(t * hop, (t + 1) * hop):
            acc = bias[t].astype(np.float64).copy()
            for j in range(k):
                src = n + (j - half) * dilation
                if 0 <= src < length:
                    acc += weight[t, :, :, j] @ x[:, src]
            out[:, n] = acc
    return out


if USE_NUMBA and HAS_NUMBA:
    cmndf = cmndf_numba
    lvc_loop = lvc_loop_numba
else:
    cmndf = cmndf_numpy
    lvc_loop = lvc_loop_numpy
