"""Speaker embeddings, per-speaker Gaussians and embedding sampling."""

import logging
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .container import load_arrays, save_arrays
from .errors import DataError

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
ENCODER_FORMAT = "lvcvc-encoder"
GAUSSIAN_FORMAT = "lvcvc-gaussians"
STORE_VERSION = 1


@dataclass
class EncoderConfig:
    embed_dim: int = 256
    channels: int = 128
    attention_dim: int = 64
    pretrain_steps: int = 300
    pretrain_batch: int = 16
    crop_frames: int = 48
    gain_jitter: float = 2.0
    lr: float = 1e-3
    seed: int = 0


class SelfAttentivePooling(nn.Module):
    """Attention-weighted mean over time of frame-level features."""

    def __init__(self, channels, attention_dim):
        super().__init__()
        self.proj = nn.Linear(channels, attention_dim)
        self.score = nn.Linear(attention_dim, 1, bias=False)

    def forward(self, h):
        # h: (B, T, C)
        w = torch.softmax(self.score(torch.tanh(self.proj(h))), dim=1)
        return torch.sum(w * h, dim=1)


class SpeakerEncoder(nn.Module):
    """Small convolutional encoder with self-attentive pooling.

    Maps a log-mel spectrogram ``(B, frames, 80)`` to unit-norm embeddings
    ``(B, embed_dim)``. Stands in for a large pretrained speaker-verification
    model; anything that produces unit-norm vectors can replace it.
    """

    def __init__(self, config: EncoderConfig = None, n_mels=80):
        super().__init__()
        self.config = config or EncoderConfig()
        c = self.config.channels
        self.frontend = nn.Sequential(
            nn.Conv1d(n_mels, c, 5, padding=2),
            nn.ReLU(),
            nn.Conv1d(c, c, 3, padding=2, dilation=2),
            nn.ReLU(),
            nn.Conv1d(c, c, 3, padding=3, dilation=3),
            nn.ReLU(),
        )
        self.pool = SelfAttentivePooling(c, self.config.attention_dim)
        self.out = nn.Linear(c, self.config.embed_dim)
        self.frozen = False

    @property
    def embed_dim(self):
        return self.config.embed_dim

    def forward(self, mel):
        x = (mel + 5.0) / 5.0
        h = self.frontend(x.transpose(1, 2)).transpose(1, 2)
        return F.normalize(self.out(self.pool(h)), dim=-1)

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        self.frozen = True
        return self

    @torch.no_grad()
    def embed(self, X) -> np.ndarray:
        """Embedding of one ``(frames, 80)`` log-mel spectrogram."""
        X = np.asarray(X, dtype=np.float32)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError("speaker embedding needs at least one spectrogram frame")
        was_training = self.training
        self.eval()
        e = self(torch.from_numpy(X)[None])[0].numpy()
        self.train(was_training)
        return e


def save_encoder(encoder: SpeakerEncoder, path):
    arrays = {k: v.detach().cpu().numpy() for k, v in encoder.state_dict().items()}
    save_arrays(path, arrays, fmt=ENCODER_FORMAT, version=STORE_VERSION, meta={"config": asdict(encoder.config)})


def load_encoder(path) -> SpeakerEncoder:
    arrays, meta = load_arrays(path, fmt=ENCODER_FORMAT, version=STORE_VERSION)
    enc = SpeakerEncoder(EncoderConfig(**meta["config"]))
    enc.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    return enc.freeze()


def _random_crop(X, frames, rng):
    if X.shape[0] <= frames:
        return np.pad(X, ((0, frames - X.shape[0]), (0, 0)), mode="edge")
    start = int(rng.integers(0, X.shape[0] - frames + 1))
    return X[start : start + frames]


def pretrain_speaker_encoder(mels_by_speaker: dict, config: EncoderConfig = None) -> SpeakerEncoder:
    """Train the encoder as a speaker classifier on random spectrogram crops.

    Args:
        mels_by_speaker: speaker_id -> list of ``(frames, 80)`` log-mel arrays
            from the training split.
        config: encoder hyperparameters; ``config.seed`` fixes everything.

    Returns:
        The frozen encoder (classification head discarded).
    """
    config = config or EncoderConfig()
    speakers = sorted(k for k, v in mels_by_speaker.items() if len(v))
    if len(speakers) < 2:
        raise DataError(f"speaker encoder pretraining needs >= 2 speakers, got {len(speakers)}")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    enc = SpeakerEncoder(config)
    head = nn.Linear(config.embed_dim, len(speakers))
    opt = torch.optim.Adam(list(enc.parameters()) + list(head.parameters()), lr=config.lr)
    scale = 10.0
    for step in range(config.pretrain_steps):
        labels = rng.integers(0, len(speakers), size=config.pretrain_batch)
        batch = []
        for lab in labels:
            utts = mels_by_speaker[speakers[lab]]
            X = utts[int(rng.integers(0, len(utts)))]
            gain = rng.uniform(-config.gain_jitter, config.gain_jitter)
            batch.append(_random_crop(X, config.crop_frames, rng) + gain)
        mel = torch.from_numpy(np.stack(batch).astype(np.float32))
        logits = scale * head(enc(mel))
        loss = F.cross_entropy(logits, torch.from_numpy(labels))
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 50 == 0:
            logger.info("encoder step %d loss %.4f", step, loss.item())
    return enc.freeze()


@dataclass
class SpeakerGaussian:
    mean: np.ndarray
    var: np.ndarray
    count: int


def fit_gaussian(embeddings) -> SpeakerGaussian:
    """Maximum-likelihood diagonal Gaussian with variance floored at ``VAR_FLOOR``."""
    E = np.asarray(embeddings, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] == 0:
        raise DataError("fit_gaussian needs at least one embedding")
    mean = E.mean(axis=0)
    var = np.maximum(E.var(axis=0), VAR_FLOOR)
    return SpeakerGaussian(mean, var, E.shape[0])


def sample_embedding(g: SpeakerGaussian, rng: np.random.Generator) -> np.ndarray:
    draw = g.mean + np.sqrt(g.var) * rng.standard_normal(g.mean.shape[0])
    return draw / np.linalg.norm(draw)


def gaussian_direction(g: SpeakerGaussian) -> np.ndarray:
    return g.mean / np.linalg.norm(g.mean)


def save_gaussians(gaussians: dict, path, median_bins: dict = None):
    """Gaussian store: ``<speaker>/mean``, ``<speaker>/var`` float32 (d,),
    ``<speaker>/count`` int64, optional ``<speaker>/median_f0_bin`` int64."""
    arrays = {}
    for spk, g in gaussians.items():
        arrays[f"{spk}/mean"] = np.asarray(g.mean, dtype=np.float32)
        arrays[f"{spk}/var"] = np.asarray(g.var, dtype=np.float32)
        arrays[f"{spk}/count"] = np.int64(g.count)
        if median_bins and spk in median_bins:
            arrays[f"{spk}/median_f0_bin"] = np.int64(median_bins[spk])
    save_arrays(path, arrays, fmt=GAUSSIAN_FORMAT, version=STORE_VERSION, meta={"speakers": sorted(gaussians)})


def load_gaussians(path):
    """Returns ``(gaussians, median_bins)`` keyed by speaker id."""
    arrays, meta = load_arrays(path, fmt=GAUSSIAN_FORMAT, version=STORE_VERSION)
    gaussians, medians = {}, {}
    for spk in meta["speakers"]:
        gaussians[spk] = SpeakerGaussian(
            arrays[f"{spk}/mean"].astype(np.float64),
            arrays[f"{spk}/var"].astype(np.float64),
            int(arrays[f"{spk}/count"]),
        )
        if f"{spk}/median_f0_bin" in arrays:
            medians[spk] = int(arrays[f"{spk}/median_f0_bin"])
    return gaussians, medians
