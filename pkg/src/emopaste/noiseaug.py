"""Additive noise augmentation of corpora at calibrated SNRs."""

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from .audio import Waveform, mix_at_snr, read_wav, write_wav
from .copypaste import Utterance

TAGS = ("noise", "music")
TRAIN_SNRS_DB = (10.0, 5.0, 0.0)

_SEED_BOUND = 2**63


@dataclass(frozen=True)
class MixRecord:
    """Provenance of one noisy copy, enough to re-create or re-measure the mix."""

    out_id: str
    source_id: str
    tag: str
    noise_path: str
    snr_db: float
    noise_gain: float
    noise_offset: int
    peak_rescale: float


@dataclass(eq=False)
class NoiseCorpus:
    """Tagged pools of interference recordings, loaded lazily and cached."""

    noise_paths: list[str]
    music_paths: list[str]
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.noise_paths or not self.music_paths:
            raise ValueError("need at least one file per tag (noise and music)")

    @classmethod
    def from_manifest(cls, path) -> "NoiseCorpus":
        """Read `<tag> <path>` lines; relative paths resolve against the manifest."""
        base = os.path.dirname(os.path.abspath(path))
        pools = {tag: [] for tag in TAGS}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected '<tag> <path>'")
                tag, file_path = parts
                if tag not in pools:
                    raise ValueError(f"{path}:{lineno}: unknown tag {tag!r}")
                if not os.path.isabs(file_path):
                    file_path = os.path.join(base, file_path)
                pools[tag].append(file_path)
        return cls(noise_paths=pools["noise"], music_paths=pools["music"])

    def paths(self, tag: str) -> list[str]:
        if tag == "noise":
            return self.noise_paths
        if tag == "music":
            return self.music_paths
        raise ValueError(f"unknown tag {tag!r}")

    def load(self, tag: str, index: int) -> Waveform:
        key = (tag, index)
        if key not in self._cache:
            self._cache[key] = read_wav(self.paths(tag)[index])
        return self._cache[key]


def derive_copy_seed(base_seed: int, utt_id: str, tag: str, snr_db: float) -> int:
    """Stable per-copy seed so copies are order- and subset-independent."""
    digest = hashlib.sha256(f"{base_seed}|{utt_id}|{tag}|{snr_db!r}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % _SEED_BOUND


def copy_id(utt_id: str, tag: str, snr_db: float) -> str:
    return f"{utt_id}#{tag}{snr_db:g}"


def _load_source(utt: Utterance) -> Waveform:
    if isinstance(utt.audio_ref, Waveform):
        return utt.audio_ref
    return read_wav(utt.audio_ref)


def _make_copy(utt, wave_in, corpus, tag, snr_db, seed, out_dir):
    rng = np.random.default_rng(seed)
    pool = corpus.paths(tag)
    noise_index = int(rng.integers(0, len(pool)))
    noise = corpus.load(tag, noise_index)
    mixed, info = mix_at_snr(wave_in, noise, snr_db, rng, with_info=True)

    out_id = copy_id(utt.id, tag, snr_db)
    if out_dir is None:
        audio_ref = mixed
    else:
        audio_ref = os.path.join(out_dir, f"{out_id.replace('#', '_')}.wav")
        write_wav(mixed, audio_ref)
    record = MixRecord(
        out_id=out_id,
        source_id=utt.id,
        tag=tag,
        noise_path=pool[noise_index],
        snr_db=snr_db,
        noise_gain=info.noise_gain,
        noise_offset=info.noise_offset,
        peak_rescale=info.peak_rescale,
    )
    new_utt = Utterance(id=out_id, speaker_id=utt.speaker_id, label=utt.label, split=utt.split, audio_ref=audio_ref)
    return new_utt, record


def build_augmented_trainset(train_utts, corpus: NoiseCorpus, seed: int, out_dir=None):
    """Originals plus six noisy copies each: both tags at 10, 5, and 0 dB.

    Returns (utterances, mix_records). With out_dir=None copies carry their
    waveforms in memory; otherwise they are written as WAV files there.
    """
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    out_utts = []
    records = []
    for utt in train_utts:
        out_utts.append(utt)
        wave_in = _load_source(utt)
        for tag in TAGS:
            for snr_db in TRAIN_SNRS_DB:
                copy_seed = derive_copy_seed(seed, utt.id, tag, snr_db)
                new_utt, record = _make_copy(utt, wave_in, corpus, tag, snr_db, copy_seed, out_dir)
                out_utts.append(new_utt)
                records.append(record)
    return out_utts, records


def make_noisy_testset(test_utts, corpus: NoiseCorpus, snr_db: float, seed: int, out_dir=None):
    """One noisy version per utterance at a single SNR, random tag per item."""
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    out_utts = []
    records = []
    for utt in test_utts:
        wave_in = _load_source(utt)
        tag_rng = np.random.default_rng(derive_copy_seed(seed, utt.id, "tag-choice", snr_db))
        tag = TAGS[int(tag_rng.integers(0, len(TAGS)))]
        copy_seed = derive_copy_seed(seed, utt.id, tag, snr_db)
        new_utt, record = _make_copy(utt, wave_in, corpus, tag, snr_db, copy_seed, out_dir)
        out_utts.append(new_utt)
        records.append(record)
    return out_utts, records


def save_mix_records(records, path) -> None:
    """Tab-separated augmentation log, one row per generated copy."""
    header = "out_id\tsource_id\ttag\tnoise_path\tsnr_db\tnoise_gain\tnoise_offset\tpeak_rescale"
    lines = [header]
    for r in records:
        lines.append(
            f"{r.out_id}\t{r.source_id}\t{r.tag}\t{r.noise_path}\t{r.snr_db!r}\t"
            f"{r.noise_gain!r}\t{r.noise_offset}\t{r.peak_rescale!r}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mix_records(path) -> list[MixRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("out_id\t"):
        raise ValueError(f"{path}: missing augmentation log header")
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 8:
            raise ValueError(f"{path}: malformed row {line!r}")
        records.append(
            MixRecord(
                out_id=parts[0],
                source_id=parts[1],
                tag=parts[2],
                noise_path=parts[3],
                snr_db=float(parts[4]),
                noise_gain=float(parts[5]),
                noise_offset=int(parts[6]),
                peak_rescale=float(parts[7]),
            )
        )
    return records
