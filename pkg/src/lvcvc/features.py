"""Content-side acoustic features.

All numpy functions here are deterministic and operate on one utterance.
Array conventions (frames first):

* log-mel spectrogram ``X``: ``(frames, 80)`` float32
* spectral envelope ``H``: same shape as ``X``
* F0 contour: ``(frames,)`` Hz, 0 for unvoiced
* normalized quantized F0 one-hot ``p_norm``: ``(frames, 257)``; index 256 is unvoiced
* median-F0 one-hot ``m``: ``(64,)``
"""

import numpy as np
import scipy.fft
import torch

from . import _accel
from .container import load_arrays, save_arrays
from .corpus import SAMPLE_RATE, AudioClip
from .errors import DataError

N_FFT = 1024
HOP = 256
WIN_LENGTH = 1024
N_MELS = 80
LOG_FLOOR = 1e-5
N_LIFTER = 20

F0_MIN = 50.0
F0_MAX = 600.0
F0_THRESHOLD = 0.3
F0_WIDTH = 512
SILENCE_RMS = 1e-4

PNORM_BINS = 256
PNORM_DIM = PNORM_BINS + 1
PNORM_CLIP = 3.0

MEDIAN_BINS = 64
MEDIAN_LO_HZ = 65.4  # C2
MEDIAN_HI_HZ = 523.3  # C5

WARP_RANGE = (0.85, 1.15)

FEATURE_FORMAT = "lvcvc-features"
FEATURE_VERSION = 1


def num_frames(n_samples, hop=HOP):
    return 1 + n_samples // hop


# ---------------------------------------------------------------------------
# Mel spectrogram
# ---------------------------------------------------------------------------


def _hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    f_sp = 200.0 / 3
    mel = f / f_sp
    min_log_hz = 1000.0
    logstep = np.log(6.4) / 27.0
    return np.where(f >= min_log_hz, min_log_hz / f_sp + np.log(np.maximum(f, 1e-10) / min_log_hz) / logstep, mel)


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(m >= min_log_mel, min_log_hz * np.exp(logstep * (m - min_log_mel)), f_sp * m)


def mel_frequencies(n_mels=N_MELS, fmin=0.0, fmax=SAMPLE_RATE / 2):
    """Edge/center frequencies (Hz) of an ``n_mels`` Slaney filterbank; length n_mels + 2."""
    return _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(sr=SAMPLE_RATE, n_fft=N_FFT, n_mels=N_MELS, fmin=0.0, fmax=None):
    """Slaney-style area-normalized triangular filterbank, shape ``(n_mels, n_fft // 2 + 1)``."""
    fmax = sr / 2 if fmax is None else fmax
    fft_freqs = np.linspace(0.0, sr / 2, 1 + n_fft // 2)
    edges = mel_frequencies(n_mels, fmin, fmax)
    fdiff = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    return weights


_MEL_BASIS = mel_filterbank().astype(np.float64)


def _stft_mag(x, n_fft=N_FFT, hop=HOP, win_length=WIN_LENGTH):
    pad = n_fft // 2
    xp = np.pad(np.asarray(x, dtype=np.float64), (pad, pad))
    frames = np.lib.stride_tricks.sliding_window_view(xp, n_fft)[::hop]
    window = np.zeros(n_fft)
    off = (n_fft - win_length) // 2
    window[off : off + win_length] = np.hanning(win_length + 1)[:-1]
    return np.abs(np.fft.rfft(frames * window, axis=1))


def compute_log_mel(clip: AudioClip) -> np.ndarray:
    """80-bin log-mel spectrogram with centered (zero-padded) framing.

    Returns ``(1 + len // 256, 80)`` float32. Magnitudes are floored at
    ``LOG_FLOOR`` before the log.
    """
    x = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip)
    if x.size == 0:
        raise DataError("cannot compute a spectrogram of an empty clip")
    mag = _stft_mag(x)
    mel = mag @ _MEL_BASIS.T
    return np.log(np.maximum(mel, LOG_FLOOR)).astype(np.float32)


class LogMel(torch.nn.Module):
    """Differentiable torch twin of :func:`compute_log_mel` for ``(B, T)`` waveforms."""

    def __init__(self):
        super().__init__()
        self.register_buffer("mel_basis", torch.from_numpy(_MEL_BASIS.astype(np.float32)), persistent=False)
        self.register_buffer("window", torch.hann_window(WIN_LENGTH), persistent=False)

    def forward(self, x):
        spec = torch.stft(
            x, N_FFT, HOP, WIN_LENGTH, window=self.window, center=True, pad_mode="constant", return_complex=True
        )
        power = spec.real**2 + spec.imag**2
        mag = torch.sqrt(torch.clamp(power, min=1e-14))
        mel = torch.matmul(self.mel_basis, mag)
        return torch.log(torch.clamp(mel, min=LOG_FLOOR)).transpose(1, 2)


# ---------------------------------------------------------------------------
# Spectral envelope
# ---------------------------------------------------------------------------


def lifter_envelope(X, n_coeffs: int = N_LIFTER) -> np.ndarray:
    """Keep the ``n_coeffs`` lowest-quefrency coefficients of each frame.

    The cepstrum here is the orthonormal DCT-II over the mel axis, so the
    operation is an orthogonal projection (linear and idempotent).
    """
    X = np.asarray(X)
    n_bins = X.shape[-1]
    if not 1 <= n_coeffs <= n_bins:
        raise ValueError(f"n_coeffs must be in [1, {n_bins}], got {n_coeffs}")
    ceps = scipy.fft.dct(X.astype(np.float64), type=2, norm="ortho", axis=-1)
    ceps[..., n_coeffs:] = 0.0
    out = scipy.fft.idct(ceps, type=2, norm="ortho", axis=-1)
    return out.astype(X.dtype) if X.dtype.kind == "f" else out


def warp_envelope(H, alpha: float) -> np.ndarray:
    """Stretch (alpha > 1) or compress (alpha < 1) each frame along the bin axis.

    ``out[:, b] = H[:, b / alpha]`` with linear interpolation; reads past the
    last bin take the edge value.
    """
    lo, hi = WARP_RANGE
    if not lo <= alpha <= hi:
        raise ValueError(f"warp factor {alpha} outside [{lo}, {hi}]")
    H = np.asarray(H)
    if alpha == 1.0:
        return H.copy()
    n_bins = H.shape[-1]
    src = np.arange(n_bins) / alpha
    i0 = np.clip(np.floor(src).astype(np.int64), 0, n_bins - 1)
    i1 = np.minimum(i0 + 1, n_bins - 1)
    frac = np.where(src >= n_bins - 1, 0.0, src - i0)
    out = H[..., i0] * (1.0 - frac) + H[..., i1] * frac
    return out.astype(H.dtype)


# ---------------------------------------------------------------------------
# Pitch
# ---------------------------------------------------------------------------


def estimate_f0(clip: AudioClip, threshold: float = F0_THRESHOLD) -> np.ndarray:
    """Per-frame F0 in Hz (0 = unvoiced) via the cumulative mean normalized
    difference function, one value per spectrogram frame."""
    x = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float32)
    x = x.astype(np.float64)
    n = num_frames(x.size)
    tau_min = int(np.floor(SAMPLE_RATE / F0_MAX))
    tau_max = int(np.ceil(SAMPLE_RATE / F0_MIN))
    span = F0_WIDTH + tau_max
    half = span // 2
    xp = np.pad(x, (half, half + span))
    starts = np.arange(n) * HOP
    frames = np.stack([xp[s : s + span + 1] for s in starts])
    d = _accel.cmndf(np.ascontiguousarray(frames), tau_max, F0_WIDTH)
    rms = np.sqrt(np.mean(frames[:, :F0_WIDTH] ** 2, axis=1))

    f0 = np.zeros(n)
    for t in range(n):
        if rms[t] < SILENCE_RMS:
            continue
        row = d[t]
        below = np.nonzero(row[tau_min : tau_max + 1] < threshold)[0]
        if below.size == 0:
            continue
        tau = tau_min + below[0]
        while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
            tau += 1
        shift = 0.0
        if tau_min < tau < tau_max:
            a, b, c = row[tau - 1], row[tau], row[tau + 1]
            denom = a - 2 * b + c
            if denom > 0:
                shift = 0.5 * (a - c) / denom
        hz = SAMPLE_RATE / (tau + shift)
        if F0_MIN <= hz <= F0_MAX:
            f0[t] = hz
    return f0


def pnorm_indices(f0) -> np.ndarray:
    """Class index per frame: z-normalized log F0 over voiced frames, clipped to
    +-3 and binned uniformly into 256 classes; unvoiced frames get 256."""
    f0 = np.asarray(f0, dtype=np.float64)
    out = np.full(f0.shape, PNORM_BINS, dtype=np.int64)
    voiced = f0 > 0
    if not voiced.any():
        return out
    logf = np.log(f0[voiced])
    mu = logf.mean()
    sd = logf.std()
    z = (logf - mu) / sd if sd > 1e-6 else np.zeros_like(logf)
    # rounding keeps the bins scale-invariant despite float error near bin edges
    z = np.clip(np.round(z, 9), -PNORM_CLIP, PNORM_CLIP)
    bins = np.floor(PNORM_BINS * (z + PNORM_CLIP) / (2 * PNORM_CLIP)).astype(np.int64)
    out[voiced] = np.clip(bins, 0, PNORM_BINS - 1)
    return out


def one_hot(indices, depth) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros(indices.shape + (depth,), dtype=np.float32)
    np.put_along_axis(out, indices[..., None], 1.0, axis=-1)
    return out


def pnorm_f0(f0) -> np.ndarray:
    return one_hot(pnorm_indices(f0), PNORM_DIM)


def median_f0_bin(f0) -> int:
    f0 = np.asarray(f0, dtype=np.float64)
    voiced = f0[f0 > 0]
    if voiced.size == 0:
        raise DataError("no voiced frames: median F0 is undefined")
    return f0_to_median_bin(np.exp(np.median(np.log(voiced))))


def f0_to_median_bin(hz: float) -> int:
    lo, hi = np.log(MEDIAN_LO_HZ), np.log(MEDIAN_HI_HZ)
    b = int(np.floor(MEDIAN_BINS * (np.log(hz) - lo) / (hi - lo)))
    return min(max(b, 0), MEDIAN_BINS - 1)


def median_f0_onehot(f0) -> np.ndarray:
    return one_hot(median_f0_bin(f0), MEDIAN_BINS)


# ---------------------------------------------------------------------------
# Conditioning and cache
# ---------------------------------------------------------------------------


def conditioning_channels(embed_dim=256, use_pnorm=True, use_median_f0=True) -> int:
    return N_MELS + (PNORM_DIM if use_pnorm else 0) + embed_dim + (MEDIAN_BINS if use_median_f0 else 0)


def build_conditioning(H, p, s, m) -> np.ndarray:
    """Frame-wise concatenation ``[H | p | s | m]`` with ``s`` and ``m`` broadcast.

    ``p`` or ``m`` may be None (ablated models drop those channels).
    """
    H = np.asarray(H, dtype=np.float32)
    frames = H.shape[0]
    parts = [H]
    if p is not None:
        p = np.asarray(p, dtype=np.float32)
        if p.shape[0] != frames:
            raise ValueError(f"frame-count mismatch: H has {frames}, p_norm has {p.shape[0]}")
        parts.append(p)
    parts.append(np.broadcast_to(np.asarray(s, dtype=np.float32), (frames, len(s))))
    if m is not None:
        parts.append(np.broadcast_to(np.asarray(m, dtype=np.float32), (frames, len(m))))
    return np.concatenate(parts, axis=1)


def extract_features(clip: AudioClip, n_coeffs: int = N_LIFTER) -> dict:
    """All cached per-utterance features. ``m`` is None-safe: -1 if unvoiced."""
    X = compute_log_mel(clip)
    f0 = estimate_f0(clip)
    try:
        m = median_f0_bin(f0)
    except DataError:
        m = -1
    return {
        "X": X,
        "H": lifter_envelope(X, n_coeffs).astype(np.float32),
        "p_norm": pnorm_indices(f0).astype(np.int64),
        "f0_hz": f0.astype(np.float32),
        "m": np.int64(m),
    }


def save_features(feats: dict, path, meta=None) -> None:
    """Write a feature cache file (container format ``lvcvc-features`` v1).

    Arrays: ``X`` and ``H`` float32 (frames, 80); ``p_norm`` int64 class
    indices (frames,); ``f0_hz`` float32 (frames,); ``m`` int64 scalar
    median-F0 bin (-1 if unvoiced); optional ``speaker_embedding`` float32 (d,).
    """
    save_arrays(path, feats, fmt=FEATURE_FORMAT, version=FEATURE_VERSION, meta=meta)


def load_features(path) -> dict:
    arrays, _ = load_arrays(path, fmt=FEATURE_FORMAT, version=FEATURE_VERSION)
    for key in ("X", "H", "p_norm", "f0_hz", "m"):
        if key not in arrays:
            raise DataError(f"{path}: feature cache missing array {key!r}")
    return arrays
