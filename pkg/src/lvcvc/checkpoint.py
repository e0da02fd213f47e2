"""Versioned checkpoints: all model weights, optimizer and RNG state, config snapshot."""

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import TrainConfig
from .container import ContainerError, load_arrays, save_arrays
from .discriminators import Discriminators
from .errors import CheckpointError
from .generator import Generator
from .speaker import EncoderConfig, SpeakerEncoder, SpeakerGaussian

CHECKPOINT_FORMAT = "lvcvc-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: TrainConfig
    generator: Generator
    discriminators: Discriminators
    encoder: SpeakerEncoder
    gaussians: dict
    median_bins: dict = field(default_factory=dict)
    opt_g: dict = None
    opt_d: dict = None
    rng_state: dict = None
    step: int = 0

    @property
    def phase(self):
        return 1 if self.step < self.config.iters_phase1 else 2


def build_models(config: TrainConfig):
    G = Generator(config.generator, config.encoder.embed_dim, config.use_pnorm, config.use_median_f0)
    D = Discriminators(config.discriminator)
    return G, D


def _state_arrays(prefix, module):
    return {f"{prefix}/{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def _optimizer_arrays(prefix, state):
    arrays = {}
    for idx, pstate in state["state"].items():
        for key, value in pstate.items():
            arrays[f"{prefix}/{idx}/{key}"] = torch.as_tensor(value).detach().cpu().numpy()
    return arrays, state["param_groups"]


def save_checkpoint(ckpt: Checkpoint, path):
    arrays = {}
    arrays.update(_state_arrays("generator", ckpt.generator))
    arrays.update(_state_arrays("discriminators", ckpt.discriminators))
    arrays.update(_state_arrays("encoder", ckpt.encoder))
    groups = {}
    for name, state in (("opt_g", ckpt.opt_g), ("opt_d", ckpt.opt_d)):
        if state is not None:
            opt_arrays, groups[name] = _optimizer_arrays(name, state)
            arrays.update(opt_arrays)
    for spk, g in ckpt.gaussians.items():
        arrays[f"gaussian/{spk}/mean"] = np.asarray(g.mean, dtype=np.float64)
        arrays[f"gaussian/{spk}/var"] = np.asarray(g.var, dtype=np.float64)
        arrays[f"gaussian/{spk}/count"] = np.int64(g.count)
    meta = {
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "phase": ckpt.phase,
        "speakers": sorted(ckpt.gaussians),
        "median_bins": {k: int(v) for k, v in sorted(ckpt.median_bins.items())},
        "param_groups": groups,
        "rng_state": ckpt.rng_state,
    }
    save_arrays(path, arrays, fmt=CHECKPOINT_FORMAT, version=CHECKPOINT_VERSION, meta=meta)


def _load_module(module, arrays, prefix):
    state = {k[len(prefix) + 1 :]: torch.from_numpy(np.array(v)) for k, v in arrays.items() if k.startswith(prefix + "/")}
    module.load_state_dict(state)


def _load_optimizer(arrays, prefix, groups):
    if groups is None:
        return None
    state = {}
    for key, value in arrays.items():
        if key.startswith(prefix + "/"):
            _, idx, name = key.split("/", 2)
            state.setdefault(int(idx), {})[name] = torch.from_numpy(np.array(value))
    return {"state": state, "param_groups": groups}


def load_checkpoint(path) -> Checkpoint:
    try:
        arrays, meta = load_arrays(path, fmt=CHECKPOINT_FORMAT, version=CHECKPOINT_VERSION)
    except ContainerError as exc:
        raise CheckpointError(str(exc)) from exc
    try:
        config = TrainConfig.from_dict(meta["config"])
        G, D = build_models(config)
        _load_module(G, arrays, "generator")
        _load_module(D, arrays, "discriminators")
        enc = SpeakerEncoder(EncoderConfig(**meta["config"]["encoder"]))
        _load_module(enc, arrays, "encoder")
        enc.freeze()
        gaussians = {
            spk: SpeakerGaussian(
                arrays[f"gaussian/{spk}/mean"], arrays[f"gaussian/{spk}/var"], int(arrays[f"gaussian/{spk}/count"])
            )
            for spk in meta["speakers"]
        }
        groups = meta.get("param_groups", {})
        return Checkpoint(
            config=config,
            generator=G,
            discriminators=D,
            encoder=enc,
            gaussians=gaussians,
            median_bins=dict(meta.get("median_bins", {})),
            opt_g=_load_optimizer(arrays, "opt_g", groups.get("opt_g")),
            opt_d=_load_optimizer(arrays, "opt_d", groups.get("opt_d")),
            rng_state=meta.get("rng_state"),
            step=int(meta["step"]),
        )
    except (KeyError, RuntimeError, ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: incompatible checkpoint contents ({exc})") from exc


def rng_state_to_json(rng: np.random.Generator):
    return json.loads(json.dumps(rng.bit_generator.state))


def rng_from_state(state) -> np.random.Generator:
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return np.random.Generator(bitgen)
