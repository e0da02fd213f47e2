"""Waveform I/O, dataset manifests and the speaker registry."""

import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AudioFormatError, DataError, ManifestError

SAMPLE_RATE = 16000
SPLITS = ("train", "test", "unseen")
_PCM_SCALE = 32768.0


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 1 or samples.size == 0:
            raise AudioFormatError("audio clip must be a non-empty 1-D sequence")
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(f"wrong sample rate {self.sample_rate} (expected {SAMPLE_RATE})")
        if not np.all(np.isfinite(samples)):
            raise AudioFormatError("audio clip contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def read_wav(path) -> AudioClip:
    """Read a 16-bit mono 16 kHz PCM WAV file into an :class:`AudioClip`.

    No resampling is performed; files at any other rate are rejected and must
    be resampled offline first.
    """
    path = Path(path)
    if not path.exists():
        raise AudioFormatError(f"{path}: no such file")
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: corrupt WAV header ({exc})") from exc
    if channels != 1:
        raise AudioFormatError(f"{path}: expected mono audio, found {channels} channels")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: wrong sample rate {rate} (expected {SAMPLE_RATE})")
    if width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, found {8 * width}-bit")
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size == 0:
        raise AudioFormatError(f"{path}: no samples")
    return AudioClip(pcm.astype(np.float32) / _PCM_SCALE)


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as 16-bit mono PCM, clipping to [-1, 1] first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x = np.clip(clip.samples.astype(np.float64), -1.0, 1.0)
    pcm = np.clip(np.round(x * _PCM_SCALE), -32768, 32767).astype("<i2")
    try:
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(SAMPLE_RATE)
            wf.writeframes(pcm.tobytes())
    except OSError as exc:
        raise DataError(f"{path}: cannot write ({exc})") from exc


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    speaker_id: str
    path: Path
    split: str

    def to_json(self, base=None):
        p = Path(self.path)
        if base is not None:
            try:
                p = p.relative_to(base)
            except ValueError:
                pass
        return {"utt_id": self.utt_id, "speaker_id": self.speaker_id, "path": str(p), "split": self.split}


@dataclass
class SpeakerRegistry:
    speakers: dict = field(default_factory=dict)  # speaker_id -> [UtteranceRecord]
    unseen: set = field(default_factory=set)

    @property
    def records(self):
        return [r for recs in self.speakers.values() for r in recs]

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def by_id(self):
        return {r.utt_id: r for r in self.records}

    @property
    def seen(self):
        return [s for s in self.speakers if s not in self.unseen]

    def training_speakers(self):
        return [s for s in self.speakers if any(r.split == "train" for r in self.speakers[s])]


_FIELDS = ("utt_id", "speaker_id", "path", "split")


def load_manifest(path) -> SpeakerRegistry:
    """Parse a JSON-lines manifest. Relative paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"{path}: no such file")
    base = path.parent
    registry = SpeakerRegistry()
    seen_ids = set()
    splits_by_speaker = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: malformed record ({exc.msg})") from exc
        if not isinstance(obj, dict) or set(obj) != set(_FIELDS):
            raise ManifestError(f"{path}:{lineno}: malformed record, expected fields {', '.join(_FIELDS)}")
        if not all(isinstance(obj[k], str) and obj[k] for k in _FIELDS):
            raise ManifestError(f"{path}:{lineno}: malformed record, fields must be non-empty strings")
        if obj["split"] not in SPLITS:
            raise ManifestError(f"{path}:{lineno}: unknown split tag {obj['split']!r}")
        if obj["utt_id"] in seen_ids:
            raise ManifestError(f"{path}:{lineno}: duplicate utt_id {obj['utt_id']!r}")
        seen_ids.add(obj["utt_id"])
        rec_path = Path(obj["path"])
        if not rec_path.is_absolute():
            rec_path = base / rec_path
        rec = UtteranceRecord(obj["utt_id"], obj["speaker_id"], rec_path, obj["split"])
        registry.speakers.setdefault(rec.speaker_id, []).append(rec)
        splits_by_speaker.setdefault(rec.speaker_id, set()).add(rec.split)
    for spk, splits in splits_by_speaker.items():
        if "unseen" in splits:
            if splits != {"unseen"}:
                raise ManifestError(f"{path}: speaker {spk!r} mixes unseen and seen splits")
            registry.unseen.add(spk)
    return registry


def write_manifest(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    lines = [json.dumps(r.to_json(base), sort_keys=True) for r in records]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def manifest_from_tree(root, out_path, *, n_unseen=0, train_ratio=0.9, seed=0) -> SpeakerRegistry:
    """Build a manifest from ``root/<speaker_id>/<utt>.wav`` with a seeded split.

    ``n_unseen`` speakers are held out entirely; the remaining speakers'
    utterances are split train/test at ``train_ratio``.
    """
    root = Path(root)
    speakers = sorted(p.name for p in root.iterdir() if p.is_dir())
    if n_unseen >= len(speakers) and speakers:
        raise ManifestError("n_unseen must leave at least one seen speaker")
    rng = np.random.default_rng(seed)
    unseen = set(rng.permutation(speakers)[:n_unseen].tolist()) if n_unseen else set()
    records = []
    for spk in speakers:
        wavs = sorted((root / spk).glob("*.wav"))
        if spk in unseen:
            records += [UtteranceRecord(f"{spk}_{w.stem}", spk, w, "unseen") for w in wavs]
            continue
        order = rng.permutation(len(wavs))
        n_test = int(round(len(wavs) * (1.0 - train_ratio)))
        test_idx = set(order[:n_test].tolist())
        for i, w in enumerate(wavs):
            records.append(UtteranceRecord(f"{spk}_{w.stem}", spk, w, "test" if i in test_idx else "train"))
    write_manifest(records, out_path)
    return load_manifest(out_path)
