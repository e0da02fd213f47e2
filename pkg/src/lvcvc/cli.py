"""Command-line entry point: ``lvcvc <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 checkpoint error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint
from .config import TrainConfig, load_config
from .container import ContainerError, save_arrays
from .corpus import AudioClip, load_manifest, read_wav, write_wav
from .errors import CheckpointError, DataError
from .features import MEDIAN_BINS, PNORM_DIM, compute_log_mel, extract_features, load_features, one_hot, save_features
from .generator import TAPS_FORMAT, generate, sample_noise
from .inference import convert, embedding_cosine, stft_distance, target_from_features, target_from_speaker
from .losses import stft_magnitude
from .speaker import load_encoder, load_gaussians, pretrain_speaker_encoder, save_encoder, save_gaussians
from .trainer import (
    embed_utterances,
    fit_speaker_gaussians,
    load_utterances,
    prepare_training_data,
    run_training,
    speaker_median_bins,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECKPOINT = 0, 1, 2, 3
PROBE_FORMAT = "lvcvc-probes"
SPECTRA_FORMAT = "lvcvc-spectrograms"
PROBE_VERSION = 1

logger = logging.getLogger("lvcvc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _config(args) -> TrainConfig:
    if not getattr(args, "config", None):
        return TrainConfig()
    try:
        return load_config(args.config)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {args.config}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad config: {exc}") from exc


def _checkpoint(path):
    if not Path(path).exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _features_of(path, n_lifter):
    try:
        clip = read_wav(path)
    except FileNotFoundError as exc:
        raise DataError(f"audio file not found: {path}") from exc
    return clip, extract_features(clip, n_lifter)


def _load_utts(registry, args, n_lifter):
    try:
        return load_utterances(registry.split("train"), getattr(args, "features", None), n_lifter)
    except ContainerError as exc:
        raise DataError(f"unreadable feature cache: {exc}") from exc


# -- subcommands ---------------------------------------------------------------


def cmd_extract(args):
    cfg = _config(args)
    registry = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for rec in registry.records:
        try:
            feats = extract_features(read_wav(rec.path), cfg.n_lifter)
            save_features(feats, out / f"{rec.utt_id}.npz", meta={"utt_id": rec.utt_id, "speaker_id": rec.speaker_id})
        except (DataError, OSError) as exc:
            failures += 1
            logger.error("%s: %s", rec.utt_id, exc)
    logger.info("extracted %d of %d utterances", len(registry.records) - failures, len(registry.records))
    return EXIT_DATA if failures else EXIT_OK


def cmd_pretrain_encoder(args):
    cfg = _config(args)
    utts = _load_utts(load_manifest(args.manifest), args, cfg.n_lifter)
    mels = {}
    for u in utts:
        mels.setdefault(u.speaker_id, []).append(u.X)
    save_encoder(pretrain_speaker_encoder(mels, cfg.encoder), args.out)
    return EXIT_OK


def cmd_fit_gaussians(args):
    cfg = _config(args)
    encoder = load_encoder(args.encoder)
    utts = _load_utts(load_manifest(args.manifest), args, cfg.n_lifter)
    embed_utterances(encoder, utts)
    save_gaussians(fit_speaker_gaussians(utts), args.out, speaker_median_bins(utts))
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    registry = load_manifest(args.manifest)
    resume = _checkpoint(args.checkpoint) if args.checkpoint else None
    if resume is not None:
        utts = _load_utts(registry, args, resume.config.n_lifter)
        embed_utterances(resume.encoder, utts)
        ckpt, _ = run_training(resume.config, utts, None, None, run_dir=args.out, resume=resume, until=args.until)
    else:
        encoder = load_encoder(args.encoder) if args.encoder else None
        if args.gaussians:
            if encoder is None:
                raise UsageError("--gaussians requires --encoder")
            utts = _load_utts(registry, args, cfg.n_lifter)
            embed_utterances(encoder, utts)
            gaussians, medians = load_gaussians(args.gaussians)
            medians = {**speaker_median_bins(utts), **medians}
        else:
            utts, encoder, gaussians, medians = prepare_training_data(registry, cfg, args.features, encoder)
        ckpt, _ = run_training(cfg, utts, encoder, gaussians, medians, run_dir=args.out, until=args.until)
    logger.info("stopped at step %d", ckpt.step)
    return EXIT_OK


def _target(ckpt, args):
    if args.target_speaker is not None:
        return target_from_speaker(ckpt, args.target_speaker)
    _, feats = _features_of(args.target, ckpt.config.n_lifter)
    return target_from_features(ckpt.encoder, feats)


def cmd_convert(args):
    ckpt = _checkpoint(args.checkpoint)
    _, src = _features_of(args.source, ckpt.config.n_lifter)
    s, m = _target(ckpt, args)
    audio = convert(ckpt, src, s, m, seed=args.seed)
    write_wav(AudioClip(np.clip(audio, -1.0, 1.0)), args.out)
    return EXIT_OK


def probe_matrices(taps, rates):
    """STFT magnitude per stack and channel. Stack ``i`` uses ``n_fft = 4 r`` and
    ``hop = r`` where ``r`` is its cumulative samples per frame, so every matrix
    has ``frames + 1`` columns."""
    out, lengths = {}, []
    r = 1
    for i, (tap, rate) in enumerate(zip(taps, rates), start=1):
        r *= rate
        lengths.append(tap.shape[-1])
        spec = stft_magnitude(torch.from_numpy(np.ascontiguousarray(tap)), 4 * r, r, 4 * r)
        for c in range(tap.shape[0]):
            out[f"stack{i}/channel{c:02d}"] = spec[c].T.numpy().astype(np.float32)
    return out, lengths


def _render_grid(matrices, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib is not installed; skipping %s", path)
        return
    stacks = sorted({k.split("/")[0] for k in matrices})
    channels = sorted({k.split("/")[1] for k in matrices})
    fig, axes = plt.subplots(len(stacks), len(channels), figsize=(len(channels) * 1.2, len(stacks) * 1.4))
    for i, st in enumerate(stacks):
        for j, ch in enumerate(channels):
            ax = axes[i, j]
            ax.imshow(np.log(matrices[f"{st}/{ch}"] + 1e-5), origin="lower", aspect="auto")
            ax.set_axis_off()
    fig.savefig(path, dpi=80)
    plt.close(fig)


def _own_target(ckpt, feats):
    s, m = target_from_features(ckpt.encoder, feats)
    if ckpt.config.use_median_f0 and m < 0:
        raise DataError("utterance has no voiced frames, so no median F0 is available")
    return s, m


def cmd_probe_stacks(args):
    ckpt = _checkpoint(args.checkpoint)
    _, feats = _features_of(args.source, ckpt.config.n_lifter)
    s, m = _own_target(ckpt, feats)
    _, taps = convert(ckpt, feats, s, m, seed=args.seed, return_taps=True)
    matrices, lengths = probe_matrices(taps, ckpt.config.generator.upsample_rates)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = feats["H"].shape[0]
    meta = {"frames": frames, "tap_lengths": lengths, "upsample_rates": list(ckpt.config.generator.upsample_rates)}
    save_arrays(out / "probes.npz", matrices, fmt=PROBE_FORMAT, version=PROBE_VERSION, meta=meta)
    save_arrays(
        out / "taps.npz", {f"stack{i}": t for i, t in enumerate(taps, start=1)}, fmt=TAPS_FORMAT, version=1, meta=meta
    )
    if args.plot:
        _render_grid(matrices, out / "probes.png")
    return EXIT_OK


def zero_ablations(ckpt, feats, s, m_bin, seed=0):
    """Normal, speaker-zeroed (``s = 0, m = 0``) and content-zeroed (``H = 0, p = 0``) audio."""
    cfg = ckpt.config
    H = np.asarray(feats["H"], dtype=np.float32)
    frames = H.shape[0]
    p = one_hot(feats["p_norm"], PNORM_DIM) if cfg.use_pnorm else None
    m = one_hot(m_bin, MEDIAN_BINS) if cfg.use_median_f0 else None
    z = sample_noise(frames, seed, cfg.generator.z_dim)
    G = ckpt.generator
    return {
        "normal": generate(G, z, H, p, s, m),
        "speaker_zeroed": generate(G, z, H, p, np.zeros_like(s), None if m is None else np.zeros_like(m)),
        "content_zeroed": generate(G, z, np.zeros_like(H), None if p is None else np.zeros_like(p), s, m),
    }


def cmd_zero_ablate(args):
    ckpt = _checkpoint(args.checkpoint)
    clip, feats = _features_of(args.source, ckpt.config.n_lifter)
    s, m = _own_target(ckpt, feats)
    outputs = zero_ablations(ckpt, feats, s, m, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spectra = {"original": compute_log_mel(clip)}
    frames = spectra["original"].shape[0]
    for name in ("speaker_zeroed", "content_zeroed"):
        audio = outputs[name]
        if not np.all(np.isfinite(audio)):
            raise DataError(f"{name} synthesis produced non-finite samples")
        clip_out = AudioClip(np.clip(audio, -1.0, 1.0))
        write_wav(clip_out, out / f"{name}.wav")
        spectra[name] = compute_log_mel(clip_out)[:frames]
    save_arrays(out / "spectrograms.npz", spectra, fmt=SPECTRA_FORMAT, version=PROBE_VERSION,
                meta={"order": ["original", "speaker_zeroed", "content_zeroed"]})
    return EXIT_OK


def read_pairs(path):
    """Pairs file: JSON lines ``{"pair_id", "source", "target" | "target_speaker"}``;
    relative paths resolve against the file's directory."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise DataError(f"pairs file not found: {path}") from exc
    pairs = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{n}: invalid JSON") from exc
        if not isinstance(row, dict) or "source" not in row or ("target" in row) == ("target_speaker" in row):
            raise DataError(f"{path}:{n}: need 'source' and exactly one of 'target' / 'target_speaker'")
        row.setdefault("pair_id", f"pair{n:04d}")
        for key in ("source", "target"):
            if key in row and not Path(row[key]).is_absolute():
                row[key] = str(path.parent / row[key])
        pairs.append(row)
    return pairs


def cmd_eval(args):
    ckpt = _checkpoint(args.checkpoint)
    pairs = read_pairs(args.manifest)
    out = Path(args.out)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    rows, failures = [], 0
    for pair in pairs:
        pid = str(pair["pair_id"])
        try:
            clip, src = _features_of(pair["source"], ckpt.config.n_lifter)
            if "target_speaker" in pair:
                s, m = target_from_speaker(ckpt, pair["target_speaker"])
            else:
                s, m = target_from_features(ckpt.encoder, _features_of(pair["target"], ckpt.config.n_lifter)[1])
            audio = np.clip(convert(ckpt, src, s, m, seed=args.seed), -1.0, 1.0)
            write_wav(AudioClip(audio), out / "wav" / f"{pid}.wav")
            rows.append({
                "pair_id": pid,
                "cosine": embedding_cosine(ckpt.encoder, audio, s),
                "stft_distance": stft_distance(clip.samples, audio),
            })
        except DataError as exc:
            failures += 1
            logger.error("%s: %s", pid, exc)
            rows.append({"pair_id": pid, "cosine": None, "stft_distance": None, "error": str(exc)})
    with open(out / "report.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    ok = [r for r in rows if r["cosine"] is not None]
    summary = {
        "pairs": len(rows),
        "failed": failures,
        "mean_cosine": float(np.mean([r["cosine"] for r in ok])) if ok else None,
        "mean_stft_distance": float(np.mean([r["stft_distance"] for r in ok])) if ok else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return EXIT_DATA if failures else EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="lvcvc", description="Zero-shot voice conversion with location-variable convolutions.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="compute feature caches for every utterance in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="cache directory")
    p.add_argument("--config")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("pretrain-encoder", help="train the speaker encoder on the train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--features", help="feature cache directory")
    p.set_defaults(func=cmd_pretrain_encoder)

    p = sub.add_parser("fit-gaussians", help="fit per-speaker embedding Gaussians")
    p.add_argument("--manifest", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--features")
    p.set_defaults(func=cmd_fit_gaussians)

    p = sub.add_parser("train", help="run or resume two-phase training")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config")
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--encoder")
    p.add_argument("--gaussians")
    p.add_argument("--features")
    p.add_argument("--until", type=int, help="stop at this global step")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert one utterance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source", required=True)
    tgt = p.add_mutually_exclusive_group(required=True)
    tgt.add_argument("--target", help="target utterance WAV")
    tgt.add_argument("--target-speaker", help="registered speaker id")
    p.add_argument("--out", required=True, help="output WAV")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_convert)

    for name, func, help_ in (
        ("probe-stacks", cmd_probe_stacks, "per-stack per-channel STFT matrices"),
        ("zero-ablate", cmd_zero_ablate, "synthesis with speaker or content features zeroed"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--source", required=True)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        if name == "probe-stacks":
            p.add_argument("--plot", action="store_true", help="also render probes.png (needs matplotlib)")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="convert a pairs list and report objective proxies")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True, help="pairs file (JSON lines)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"lvcvc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lvcvc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"lvcvc: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ContainerError as exc:
        print(f"lvcvc: unreadable model file: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except DataError as exc:
        print(f"lvcvc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
