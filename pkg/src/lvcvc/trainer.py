"""Two-phase adversarial training.

Phase 1 trains on self-reconstruction only. Phase 2 lowers the learning rate
and adds the speaker-similarity criterion, whose weight ramps linearly from 0
over ``anneal_steps``. Every iteration runs one discriminator update followed
by one generator update.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, build_models, load_checkpoint, rng_from_state, rng_state_to_json, save_checkpoint
from .config import TrainConfig, lambda_ssc_at
from .corpus import SpeakerRegistry, read_wav
from .errors import DataError
from .features import (
    HOP,
    MEDIAN_BINS,
    PNORM_DIM,
    LogMel,
    extract_features,
    f0_to_median_bin,
    load_features,
    one_hot,
    warp_envelope,
)
from .losses import adversarial_g, loss_aux, loss_discriminator, loss_ssc
from .speaker import SpeakerEncoder, fit_gaussian, pretrain_speaker_encoder, sample_embedding

logger = logging.getLogger(__name__)


@dataclass
class Utterance:
    utt_id: str
    speaker_id: str
    audio: np.ndarray
    X: np.ndarray
    H: np.ndarray
    p_idx: np.ndarray
    f0_hz: np.ndarray
    m_bin: int
    embedding: np.ndarray = None

    @property
    def frames(self):
        return self.H.shape[0]


def load_utterances(records, cache_dir=None, n_lifter=20):
    """Audio plus cached (or freshly computed) features for each record."""
    out = []
    for rec in records:
        clip = read_wav(rec.path)
        cache = Path(cache_dir) / f"{rec.utt_id}.npz" if cache_dir else None
        feats = load_features(cache) if cache is not None and cache.exists() else extract_features(clip, n_lifter)
        out.append(
            Utterance(
                rec.utt_id,
                rec.speaker_id,
                clip.samples,
                feats["X"],
                feats["H"],
                feats["p_norm"],
                feats["f0_hz"],
                int(feats["m"]),
                feats.get("speaker_embedding"),
            )
        )
    return out


def speaker_median_bins(utterances):
    by_spk = {}
    for u in utterances:
        by_spk.setdefault(u.speaker_id, []).append(u.f0_hz[u.f0_hz > 0])
    medians = {}
    for spk, parts in by_spk.items():
        voiced = np.concatenate(parts)
        if voiced.size:
            medians[spk] = f0_to_median_bin(np.exp(np.median(np.log(voiced))))
    return medians


def embed_utterances(encoder: SpeakerEncoder, utterances):
    for u in utterances:
        if u.embedding is None:
            u.embedding = encoder.embed(u.X)


def fit_speaker_gaussians(utterances):
    by_spk = {}
    for u in utterances:
        by_spk.setdefault(u.speaker_id, []).append(u.embedding)
    return {spk: fit_gaussian(np.stack(embs)) for spk, embs in sorted(by_spk.items())}


def prepare_training_data(registry: SpeakerRegistry, config: TrainConfig, cache_dir=None, encoder=None):
    """Load the training split, pretrain the encoder if needed, embed and fit Gaussians.

    Returns ``(utterances, encoder, gaussians, median_bins)``.
    """
    records = registry.split("train")
    if len({r.speaker_id for r in records}) < 2:
        raise DataError("training needs at least two speakers in the train split")
    utterances = load_utterances(records, cache_dir, config.n_lifter)
    if encoder is None:
        mels = {}
        for u in utterances:
            mels.setdefault(u.speaker_id, []).append(u.X)
        encoder = pretrain_speaker_encoder(mels, config.encoder)
    embed_utterances(encoder, utterances)
    return utterances, encoder, fit_speaker_gaussians(utterances), speaker_median_bins(utterances)


class Trainer:
    """Owns the generator, discriminators, optimizers and the sampling RNG."""

    def __init__(self, config: TrainConfig, utterances, encoder, gaussians, median_bins=None, run_dir=None):
        self.config = config
        self.utterances = list(utterances)
        if not self.utterances:
            raise DataError("no training utterances")
        self.encoder = encoder.freeze()
        self.gaussians = gaussians
        self.median_bins = median_bins or {}
        self.run_dir = Path(run_dir) if run_dir else None
        for u in self.utterances:
            if config.use_gaussian_embeddings and u.speaker_id not in gaussians:
                raise DataError(f"no speaker Gaussian for {u.speaker_id!r}")
            if u.embedding is None:
                raise DataError(f"utterance {u.utt_id!r} has no speaker embedding")
        self.speakers = sorted({u.speaker_id for u in self.utterances})
        self.by_speaker = {s: [i for i, u in enumerate(self.utterances) if u.speaker_id == s] for s in self.speakers}

        torch.manual_seed(config.seed)
        self.G, self.D = build_models(config)
        self.opt_g = torch.optim.AdamW(
            self.G.parameters(), lr=config.lr_phase1, betas=config.betas, weight_decay=config.weight_decay
        )
        self.opt_d = torch.optim.AdamW(
            self.D.parameters(), lr=config.lr_phase1, betas=config.betas, weight_decay=config.weight_decay
        )
        self.logmel = LogMel()
        self.rng = np.random.default_rng(config.seed)
        self.step = 0
        self.resolutions = config.discriminator.resolutions

    # -- state ---------------------------------------------------------------

    @property
    def total_steps(self):
        return self.config.iters_phase1 + self.config.iters_phase2

    @property
    def phase(self):
        return 1 if self.step < self.config.iters_phase1 else 2

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=self.config,
            generator=self.G,
            discriminators=self.D,
            encoder=self.encoder,
            gaussians=self.gaussians,
            median_bins=self.median_bins,
            opt_g=self.opt_g.state_dict(),
            opt_d=self.opt_d.state_dict(),
            rng_state=rng_state_to_json(self.rng),
            step=self.step,
        )

    def save(self, path):
        save_checkpoint(self.checkpoint(), path)

    @classmethod
    def from_checkpoint(cls, ckpt, utterances, run_dir=None):
        if isinstance(ckpt, (str, Path)):
            ckpt = load_checkpoint(ckpt)
        trainer = cls(ckpt.config, utterances, ckpt.encoder, ckpt.gaussians, ckpt.median_bins, run_dir)
        trainer.G.load_state_dict(ckpt.generator.state_dict())
        trainer.D.load_state_dict(ckpt.discriminators.state_dict())
        if ckpt.opt_g is not None:
            trainer.opt_g.load_state_dict(ckpt.opt_g)
            trainer.opt_d.load_state_dict(ckpt.opt_d)
        if ckpt.rng_state is not None:
            trainer.rng = rng_from_state(ckpt.rng_state)
        trainer.step = ckpt.step
        return trainer

    # -- batching ------------------------------------------------------------

    def _crop(self, u: Utterance):
        n = self.config.crop_frames
        start = int(self.rng.integers(0, max(u.frames - n, 0) + 1))
        H = u.H[start : start + n]
        p = u.p_idx[start : start + n]
        audio = u.audio[start * HOP : (start + n) * HOP]
        if H.shape[0] < n:
            H = np.pad(H, ((0, n - H.shape[0]), (0, 0)), mode="edge")
            p = np.pad(p, (0, n - p.shape[0]), constant_values=PNORM_DIM - 1)
        if audio.shape[0] < n * HOP:
            audio = np.pad(audio, (0, n * HOP - audio.shape[0]))
        return H, p, audio

    def _median_onehot(self, u: Utterance):
        m = u.m_bin if u.m_bin >= 0 else self.median_bins.get(u.speaker_id, -1)
        if m < 0:
            raise DataError(f"utterance {u.utt_id!r} has no voiced frames and no speaker median F0")
        return one_hot(m, MEDIAN_BINS)

    def sample_batch(self):
        cfg = self.config
        lo, hi = cfg.warp_range
        idx = self.rng.integers(0, len(self.utterances), size=cfg.batch)
        H, P, X, S, M, alphas = [], [], [], [], [], []
        for i in idx:
            u = self.utterances[int(i)]
            h, p, audio = self._crop(u)
            alpha = float(self.rng.uniform(lo, hi)) if cfg.use_warping else 1.0
            H.append(warp_envelope(h, alpha) if alpha != 1.0 else h)
            P.append(one_hot(p, PNORM_DIM))
            X.append(audio)
            if cfg.use_gaussian_embeddings:
                S.append(sample_embedding(self.gaussians[u.speaker_id], self.rng))
            else:
                S.append(u.embedding)
            M.append(self._median_onehot(u))
            alphas.append(alpha)
        z = self.rng.standard_normal((cfg.batch, cfg.generator.z_dim, cfg.crop_frames))
        return {
            "idx": idx,
            "x": torch.from_numpy(np.stack(X).astype(np.float32)),
            "H": torch.from_numpy(np.stack(H).astype(np.float32)),
            "p": torch.from_numpy(np.stack(P)),
            "s": torch.from_numpy(np.stack(S).astype(np.float32)),
            "m": torch.from_numpy(np.stack(M)),
            "z": torch.from_numpy(z.astype(np.float32)),
            "alphas": alphas,
        }

    def sample_ssc(self, batch):
        """For each batch item, ``n_ssc`` crops from distinct other speakers."""
        cfg = self.config
        H, P = [], []
        for i in batch["idx"]:
            spk = self.utterances[int(i)].speaker_id
            others = [s for s in self.speakers if s != spk]
            if len(others) < cfg.n_ssc:
                raise DataError(f"speaker similarity needs {cfg.n_ssc + 1} training speakers, have {len(self.speakers)}")
            chosen = self.rng.choice(len(others), size=cfg.n_ssc, replace=False)
            for c in chosen:
                utts = self.by_speaker[others[int(c)]]
                u = self.utterances[utts[int(self.rng.integers(0, len(utts)))]]
                h, p, _ = self._crop(u)
                H.append(h)
                P.append(one_hot(p, PNORM_DIM))
        n = cfg.n_ssc
        z = self.rng.standard_normal((len(H), cfg.generator.z_dim, cfg.crop_frames))
        return {
            "H": torch.from_numpy(np.stack(H).astype(np.float32)),
            "p": torch.from_numpy(np.stack(P)),
            "s": batch["s"].repeat_interleave(n, dim=0),
            "m": batch["m"].repeat_interleave(n, dim=0),
            "z": torch.from_numpy(z.astype(np.float32)),
        }

    # -- steps ---------------------------------------------------------------

    def _set_lr(self):
        lr = self.config.lr_phase1 if self.phase == 1 else self.config.lr_phase2
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr

    def _content(self, b):
        p = b["p"] if self.config.use_pnorm else None
        m = b["m"] if self.config.use_median_f0 else None
        return p, m

    def _update(self, batch, ssc=None, lam_ssc=0.0):
        cfg = self.config
        p, m = self._content(batch)
        x = batch["x"]
        x_hat = self.G(batch["z"], batch["H"], p, batch["s"], m)

        real = self.D(x)
        fake = self.D(x_hat.detach())
        l_d = loss_discriminator(real, fake)
        self.opt_d.zero_grad(set_to_none=True)
        l_d.backward()
        self.opt_d.step()

        adv = adversarial_g(self.D(x_hat))
        l_aux = loss_aux(x, x_hat, self.resolutions)
        l_g = adv + cfg.lambda_aux * l_aux
        l_ssc = torch.zeros(())
        if ssc is not None:
            sp, sm = self._content(ssc)
            converted = self.G(ssc["z"], ssc["H"], sp, ssc["s"], sm)
            emb = self.encoder(self.logmel(converted))
            l_ssc = loss_ssc(emb, ssc["s"], raw_cosine=cfg.ssc_raw_cosine)
            if lam_ssc:
                l_g = l_g + lam_ssc * l_ssc
        self.opt_g.zero_grad(set_to_none=True)
        l_g.backward()
        self.opt_g.step()
        return {
            "step": self.step,
            "phase": self.phase,
            "L_D": l_d.item(),
            "L_G": l_g.item(),
            "L_adv": adv.item(),
            "L_aux": l_aux.item(),
            "L_ssc": l_ssc.item(),
            "lambda_ssc": lam_ssc,
            "alphas": batch["alphas"],
        }

    def training_step_recon(self, batch=None):
        self._set_lr()
        batch = batch if batch is not None else self.sample_batch()
        record = self._update(batch)
        self.step += 1
        return record

    def training_step_ssc(self, batch=None):
        if self.phase != 2:
            raise RuntimeError("the speaker-similarity step is only valid in phase 2")
        self._set_lr()
        batch = batch if batch is not None else self.sample_batch()
        lam = lambda_ssc_at(self.config, self.step - self.config.iters_phase1)
        ssc = self.sample_ssc(batch)
        record = self._update(batch, ssc, lam)
        self.step += 1
        return record

    def train_step(self):
        if self.phase == 2 and self.config.use_ssc:
            return self.training_step_ssc()
        return self.training_step_recon()

    # -- loop ----------------------------------------------------------------

    def _log_path(self):
        return self.run_dir / "losses.jsonl" if self.run_dir else None

    def _truncate_log(self):
        path = self._log_path()
        if path is None or not path.exists():
            return
        keep = [ln for ln in path.read_text().splitlines() if ln and json.loads(ln)["step"] < self.step]
        path.write_text("".join(ln + "\n" for ln in keep))

    def run(self, until=None):
        """Train up to global step ``until`` (default: end of phase 2); returns the records."""
        until = self.total_steps if until is None else min(until, self.total_steps)
        records = []
        if self.run_dir:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            self._truncate_log()
        log = open(self._log_path(), "a") if self.run_dir else None
        try:
            while self.step < until:
                rec = self.train_step()
                records.append(rec)
                if log is not None and rec["step"] % self.config.log_every == 0:
                    log.write(json.dumps(rec) + "\n")
                    log.flush()
                if rec["step"] % 50 == 0:
                    logger.info(
                        "step %d phase %d L_D %.4f L_G %.4f L_aux %.4f L_ssc %.4f",
                        rec["step"], rec["phase"], rec["L_D"], rec["L_G"], rec["L_aux"], rec["L_ssc"],
                    )
                if self.run_dir:
                    if self.step == self.config.iters_phase1:
                        self.save(self.run_dir / "phase1.ckpt")
                    if self.config.checkpoint_every and self.step % self.config.checkpoint_every == 0:
                        self.save(self.run_dir / f"step_{self.step:08d}.ckpt")
        finally:
            if log is not None:
                log.close()
        if self.run_dir and self.step == self.total_steps:
            self.save(self.run_dir / "final.ckpt")
        return records


def run_training(config, utterances, encoder, gaussians, median_bins=None, run_dir=None, resume=None, until=None):
    """Run (or resume) the full two-phase schedule; returns ``(checkpoint, records)``."""
    if resume is not None:
        trainer = Trainer.from_checkpoint(resume, utterances, run_dir)
    else:
        if len({u.speaker_id for u in utterances}) < 2:
            raise DataError("training needs at least two speakers")
        trainer = Trainer(config, utterances, encoder, gaussians, median_bins, run_dir)
    records = trainer.run(until)
    return trainer.checkpoint(), records
