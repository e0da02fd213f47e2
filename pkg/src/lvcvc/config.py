"""Experiment configuration.

``TrainConfig()`` is the desk-scale default. ``TrainConfig.full_scale()``
holds the full-size schedule and ``TrainConfig.toy()`` the CPU schedule for
the synthetic toy corpus (under 20 minutes on one core).
"""

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from math import prod
from pathlib import Path

from .speaker import EncoderConfig


@dataclass
class GeneratorConfig:
    z_dim: int = 64
    channels: int = 16
    upsample_rates: tuple = (8, 8, 4)
    kernel_size: int = 3
    dilations: tuple = (1, 3, 9, 27)
    kp_hidden: int = 64
    kp_residual: int = 3
    kp_conv_size: int = 3
    slope: float = 0.2

    def __post_init__(self):
        self.upsample_rates = tuple(self.upsample_rates)
        self.dilations = tuple(self.dilations)
        if prod(self.upsample_rates) != 256:
            raise ValueError(f"upsample rates {self.upsample_rates} must multiply to the hop length 256")
        if any(r % 2 for r in self.upsample_rates):
            raise ValueError("upsample rates must be even")
        if len(self.dilations) != 4 or list(self.dilations) != sorted(set(self.dilations)):
            raise ValueError("expected four strictly increasing dilations")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd")


@dataclass
class DiscriminatorConfig:
    # (n_fft, hop, win_length) per MRSD sub-discriminator
    resolutions: tuple = ((1024, 120, 600), (2048, 240, 1200), (512, 50, 240))
    periods: tuple = (2, 3, 5, 7, 11)
    mrsd_channels: int = 32
    mpwd_channels: tuple = (32, 128, 512, 1024)
    slope: float = 0.2

    def __post_init__(self):
        self.resolutions = tuple(tuple(int(v) for v in r) for r in self.resolutions)
        self.periods = tuple(self.periods)
        self.mpwd_channels = tuple(self.mpwd_channels)
        if not self.resolutions:
            raise ValueError("need at least one STFT resolution")
        if len(set(self.resolutions)) != len(self.resolutions):
            raise ValueError("STFT resolutions must be distinct")
        for n_fft, hop, win in self.resolutions:
            if not hop < win <= n_fft:
                raise ValueError(f"invalid STFT resolution {(n_fft, hop, win)}: need hop < win <= n_fft")
        if len(set(self.periods)) != len(self.periods):
            raise ValueError("periods must be distinct")

    @property
    def n_sub(self):
        return len(self.resolutions) + len(self.periods)


@dataclass
class TrainConfig:
    lr_phase1: float = 1e-4
    lr_phase2: float = 5e-5
    betas: tuple = (0.5, 0.9)
    weight_decay: float = 0.01
    batch: int = 32
    iters_phase1: int = 20000
    iters_phase2: int = 1000
    anneal_steps: int = 400
    lambda_aux: float = 2.5
    lambda_ssc: float = 0.9
    n_ssc: int = 8
    ssc_raw_cosine: bool = False
    warp_range: tuple = (0.85, 1.15)
    crop_frames: int = 32
    n_lifter: int = 20
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 1
    use_gaussian_embeddings: bool = True
    use_ssc: bool = True
    use_warping: bool = True
    use_pnorm: bool = True
    use_median_f0: bool = True
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        self.betas = tuple(self.betas)
        self.warp_range = tuple(self.warp_range)
        for name in ("lr_phase1", "lr_phase2", "lambda_aux"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.lambda_ssc < 0:
            raise ValueError("lambda_ssc must be >= 0")
        if self.anneal_steps > self.iters_phase2:
            raise ValueError("anneal_steps must not exceed iters_phase2")
        if self.n_ssc < 1 or self.batch < 1 or self.crop_frames < 1:
            raise ValueError("n_ssc, batch and crop_frames must be >= 1")
        lo, hi = self.warp_range
        if not 0 < lo <= 1.0 <= hi:
            raise ValueError(f"invalid warp range {self.warp_range}")
        for name in ("use_gaussian_embeddings", "use_ssc", "use_warping", "use_pnorm", "use_median_f0", "ssc_raw_cosine"):
            if not isinstance(getattr(self, name), bool):
                raise ValueError(f"{name} must be a boolean")

    @classmethod
    def full_scale(cls, **overrides):
        base = dict(batch=32, iters_phase1=1_800_000, iters_phase2=5000, anneal_steps=2000, checkpoint_every=10000)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def toy(cls, **overrides):
        base = dict(
            lr_phase1=2e-4,
            lr_phase2=1e-4,
            batch=4,
            iters_phase1=1000,
            iters_phase2=400,
            anneal_steps=100,
            n_ssc=1,
            crop_frames=16,
            checkpoint_every=100,
            discriminator=DiscriminatorConfig(mrsd_channels=8, mpwd_channels=(8, 16, 32, 32)),
            encoder=EncoderConfig(embed_dim=256, channels=64, pretrain_steps=150),
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return _build(cls, data, "config")


def lambda_ssc_at(config: TrainConfig, phase2_step: int) -> float:
    """Linearly annealed SSC weight, ``phase2_step`` counted from the start of phase 2."""
    if not config.use_ssc:
        return 0.0
    if config.anneal_steps <= 0 or phase2_step >= config.anneal_steps:
        return config.lambda_ssc
    return config.lambda_ssc * max(phase2_step, 0) / config.anneal_steps


_NESTED = {"generator": GeneratorConfig, "discriminator": DiscriminatorConfig, "encoder": EncoderConfig}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValueError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is TrainConfig and key in _NESTED:
            value = _build(_NESTED[key], value, f"{where}.{key}")
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path) -> TrainConfig:
    """Read a JSON config file; every key must name a TrainConfig field."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc.msg})") from exc
    preset = data.pop("preset", None) if isinstance(data, dict) else None
    if preset is None:
        return TrainConfig.from_dict(data)
    factories = {"desk": TrainConfig, "full": TrainConfig.full_scale, "toy": TrainConfig.toy}
    if preset not in factories:
        raise ValueError(f"{path}: unknown preset {preset!r}")
    merged = asdict(factories[preset]())
    for key, value in data.items():
        if key in _NESTED and isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return TrainConfig.from_dict(merged)


def save_config(config: TrainConfig, path):
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
