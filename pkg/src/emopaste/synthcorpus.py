"""Synthetic emotion corpus with controllable, learnable class structure.

Each class is a harmonic-stack timbre with its own pitch, amplitude-modulation
rate and depth, and spectral tilt. Emotional utterances carry the class
signature only inside a random 30-60% sub-span and are neutral elsewhere, so
whole-utterance averages are diluted by a random factor while the span itself
stays clean. Everything derives from numpy SeedSequences, so a given config
reproduces bit-identical audio.
"""

import os
from dataclasses import dataclass

import numpy as np

from .audio import Waveform, write_wav
from .copypaste import Utterance, make_label_set
from .manifest import write_manifest


@dataclass(frozen=True)
class ClassTimbre:
    f0_hz: float
    am_rate_hz: float
    am_depth: float
    spectral_tilt: float
    level_gain: float = 0.0


# Order matters: the first n_classes entries are used. am_depth is the
# amplitude of a zero-mean log-domain modulation, exp(depth * sin), so
# modulation changes the shape of the frame-energy distribution without
# moving its log-domain mean. Angry and happy sit in the same direction away
# from neutral (pitch up, deeper modulation, flatter tilt) at roughly 1x and
# 2x strength: averaged over a whole utterance the cue scales with the
# random sub-span fraction, so a wide-span angry and a narrow-span happy
# look alike globally while staying cleanly apart inside the span.
CLASS_TABLE = (
    ("neutral", ClassTimbre(140.0, 1.0, 0.25, 1.0, 0.0)),
    ("angry", ClassTimbre(152.0, 3.0, 0.50, 0.95, 0.8)),
    ("happy", ClassTimbre(163.0, 3.0, 0.75, 0.90, 1.6)),
    ("sad", ClassTimbre(124.0, 0.6, 0.50, 1.10, -0.9)),
    ("disgust", ClassTimbre(145.0, 2.0, 0.60, 1.06, 0.7)),
    ("fear", ClassTimbre(168.0, 7.0, 0.65, 0.92, 1.2)),
)

N_HARMONICS = 6
BLEND_RAMP_S = 0.010
PITCH_SPREAD_SEMITONES = 0.2
JITTER_SEMITONES = 0.65
FLOOR_SNR_RANGE_DB = (25.0, 32.0)
RMS_RANGE = (0.02, 0.05)

# Each speaker carries a persistent energy wobble of their own. Its depth
# rivals the class modulation depths, so reading modulation as a class cue
# requires untangling it from the speaker's habit; being zero-mean in the
# log domain it leaves per-utterance mean features alone.
SPEAKER_TREMOLO_RATE_HZ = (0.5, 8.0)
SPEAKER_TREMOLO_LOG_DEPTH = (0.3, 0.55)

# One extra random wobble per utterance blurs the line further.
N_NUISANCE_AM = 1
NUISANCE_AM_RATE_HZ = (0.3, 9.0)
NUISANCE_AM_LOG_DEPTH = (0.1, 0.25)

# Speaker index ranges are split 60/20/20 into train/dev/test.
SPLIT_FRACTIONS = (0.6, 0.2)


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 4
    n_speakers: int = 20
    utts_per_speaker_per_class: int = 5
    duration_range_s: tuple = (2.0, 6.0)
    sample_rate_hz: int = 16000
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.n_classes <= len(CLASS_TABLE):
            raise ValueError(f"n_classes must be in [2, {len(CLASS_TABLE)}], got {self.n_classes}")
        if self.n_speakers < 5:
            raise ValueError("need at least 5 speakers to populate all splits")
        lo, hi = self.duration_range_s
        if not 0 < lo <= hi:
            raise ValueError(f"bad duration range {self.duration_range_s}")

    @property
    def class_names(self) -> tuple:
        return tuple(name for name, _ in CLASS_TABLE[: self.n_classes])


@dataclass(frozen=True)
class SpeakerTraits:
    pitch_factor: float
    tremolo_rate_hz: float
    tremolo_log_depth: float


def _harmonic_stack(t, f0_hz, tilt, phases):
    out = np.zeros_like(t)
    for k in range(1, N_HARMONICS + 1):
        out += (1.0 / k**tilt) * np.sin(2.0 * np.pi * k * f0_hz * t + phases[k - 1])
    return out


def _log_am(t, rate_hz, log_depth, phase) -> np.ndarray:
    """Zero-mean log-domain amplitude modulation term: depth * sin."""
    return log_depth * np.sin(2.0 * np.pi * rate_hz * t + phase)


def _jitter(timbre: ClassTimbre, rng, scale: float = 1.0) -> ClassTimbre:
    """Per-utterance wobble so class examples are not carbon copies."""
    semis = JITTER_SEMITONES * scale
    return ClassTimbre(
        f0_hz=timbre.f0_hz * 2.0 ** (rng.uniform(-semis, semis) / 12.0),
        am_rate_hz=timbre.am_rate_hz * rng.uniform(0.9, 1.1),
        am_depth=max(timbre.am_depth + rng.uniform(-0.12, 0.12) * scale, 0.05),
        spectral_tilt=timbre.spectral_tilt + rng.uniform(-0.06, 0.06) * scale,
        level_gain=timbre.level_gain + rng.uniform(-0.25, 0.25) * scale,
    )


def _class_signal(t, timbre: ClassTimbre, speaker: SpeakerTraits, rng, jitter_scale: float = 1.0):
    """Returns (carrier, log_envelope); the caller applies exp(log_envelope)."""
    timbre = _jitter(timbre, rng, jitter_scale)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=N_HARMONICS)
    am_phase = rng.uniform(0.0, 2.0 * np.pi)
    carrier = _harmonic_stack(t, timbre.f0_hz * speaker.pitch_factor, timbre.spectral_tilt, phases)
    log_env = _log_am(t, timbre.am_rate_hz, timbre.am_depth, am_phase) + timbre.level_gain
    return carrier, log_env


def _speaker_tremolo(t, speaker: SpeakerTraits, rng) -> np.ndarray:
    return _log_am(t, speaker.tremolo_rate_hz, speaker.tremolo_log_depth, rng.uniform(0.0, 2.0 * np.pi))


def _nuisance_envelope(t, rng) -> np.ndarray:
    env = np.zeros_like(t)
    for _ in range(N_NUISANCE_AM):
        rate = rng.uniform(*NUISANCE_AM_RATE_HZ)
        depth = rng.uniform(*NUISANCE_AM_LOG_DEPTH)
        env += _log_am(t, rate, depth, rng.uniform(0.0, 2.0 * np.pi))
    return env


def _blend_mask(n_samples, start, stop, ramp) -> np.ndarray:
    """1 inside [start, stop) with linear ramps of `ramp` samples at both edges."""
    mask = np.zeros(n_samples)
    mask[start:stop] = 1.0
    ramp = min(ramp, (stop - start) // 2)
    if ramp > 0:
        slope = (np.arange(ramp) + 1.0) / ramp
        mask[start : start + ramp] = slope
        mask[stop - ramp : stop] = slope[::-1]
    return mask


def synth_utterance(
    label_name: str,
    speaker: SpeakerTraits,
    config: SynthConfig,
    rng,
    span_range: tuple = (0.3, 0.6),
) -> Waveform:
    """One utterance; emotional classes get their timbre only in a random sub-span.

    Carriers blend linearly across the span boundary while modulation blends
    in the log domain, so the overall envelope stays exp(zero-mean) and the
    average log energy carries no modulation-depth information. Level is set
    from the unmodulated carrier for the same reason. span_range sets the
    sub-span fraction bounds; (1.0, 1.0) makes the emotion cover everything.
    """
    timbres = dict(CLASS_TABLE)
    sr = config.sample_rate_hz
    lo, hi = config.duration_range_s
    duration = rng.uniform(lo, hi)
    n = int(round(duration * sr))
    t = np.arange(n) / sr

    # The resting voice wanders less than the emotional delivery does.
    carrier, log_env = _class_signal(t, timbres["neutral"], speaker, rng, jitter_scale=0.3)
    if label_name != "neutral":
        emo_carrier, emo_log_env = _class_signal(t, timbres[label_name], speaker, rng)
        span = int(round(rng.uniform(*span_range) * n))
        start = int(rng.integers(0, n - span + 1))
        mask = _blend_mask(n, start, start + span, int(round(BLEND_RAMP_S * sr)))
        carrier = (1.0 - mask) * carrier + mask * emo_carrier
        log_env = (1.0 - mask) * log_env + mask * emo_log_env
    log_env = log_env + _speaker_tremolo(t, speaker, rng) + _nuisance_envelope(t, rng)

    rms = rng.uniform(*RMS_RANGE)
    carrier = carrier * (rms / np.sqrt(np.mean(carrier**2)))
    out = carrier * np.exp(log_env)

    floor_snr_db = rng.uniform(*FLOOR_SNR_RANGE_DB)
    noise = rng.standard_normal(n)
    noise *= np.sqrt(np.mean(out**2) / np.mean(noise**2) * 10.0 ** (-floor_snr_db / 10.0))
    out = out + noise
    return Waveform(samples=out, sample_rate_hz=sr)


def _split_for_speaker(index: int, n_speakers: int) -> str:
    n_train = int(round(SPLIT_FRACTIONS[0] * n_speakers))
    n_dev = int(round(SPLIT_FRACTIONS[1] * n_speakers))
    if index < n_train:
        return "train"
    if index < n_train + n_dev:
        return "dev"
    return "test"


def build_corpus(config: SynthConfig):
    """Synthesize all utterances in memory. Returns (utterances, labels)."""
    labels = make_label_set(sorted(config.class_names), neutral_name="neutral")
    by_name = {lab.name: lab for lab in labels}

    speaker_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    spread = PITCH_SPREAD_SEMITONES
    pitch_factors = 2.0 ** (speaker_rng.uniform(-spread, spread, size=config.n_speakers) / 12.0)
    trem_rates = speaker_rng.uniform(*SPEAKER_TREMOLO_RATE_HZ, size=config.n_speakers)
    trem_depths = speaker_rng.uniform(*SPEAKER_TREMOLO_LOG_DEPTH, size=config.n_speakers)
    traits = [
        SpeakerTraits(
            pitch_factor=pitch_factors[i],
            tremolo_rate_hz=trem_rates[i],
            tremolo_log_depth=trem_depths[i],
        )
        for i in range(config.n_speakers)
    ]

    utts = []
    utt_index = 0
    for spk in range(config.n_speakers):
        split = _split_for_speaker(spk, config.n_speakers)
        for class_name in config.class_names:
            for k in range(config.utts_per_speaker_per_class):
                rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1, utt_index]))
                wave_out = synth_utterance(class_name, traits[spk], config, rng)
                utts.append(
                    Utterance(
                        id=f"s{spk:02d}_{class_name}_{k:02d}",
                        speaker_id=f"s{spk:02d}",
                        label=by_name[class_name],
                        split=split,
                        audio_ref=wave_out,
                    )
                )
                utt_index += 1
    return utts, labels


def generate_corpus(config: SynthConfig, out_dir):
    """Write the corpus as WAV files plus a corpus.tsv manifest in out_dir."""
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    utts, labels = build_corpus(config)
    on_disk = []
    rows = []
    for utt in utts:
        # manifest rows stay relative to out_dir so the corpus dir can move
        rel = os.path.join("wav", f"{utt.id}.wav")
        write_wav(utt.audio_ref, os.path.join(out_dir, rel))
        rows.append(Utterance(id=utt.id, speaker_id=utt.speaker_id, label=utt.label, split=utt.split, audio_ref=rel))
        on_disk.append(
            Utterance(
                id=utt.id,
                speaker_id=utt.speaker_id,
                label=utt.label,
                split=utt.split,
                audio_ref=os.path.join(out_dir, rel),
            )
        )
    manifest_path = os.path.join(out_dir, "corpus.tsv")
    write_manifest(rows, manifest_path)
    return on_disk, labels, manifest_path


def _synth_noise_file(rng, config: SynthConfig) -> Waveform:
    """Band-limited white noise with a random passband."""
    sr = config.sample_rate_hz
    n = int(round(rng.uniform(10.0, 30.0) * sr))
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / sr)
    lo = rng.uniform(100.0, 2000.0)
    hi = min(lo + rng.uniform(500.0, 4000.0), 7800.0)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spectrum, n)
    out = out * (0.5 / np.max(np.abs(out)))
    return Waveform(samples=out, sample_rate_hz=sr)


def _synth_music_file(rng, config: SynthConfig) -> Waveform:
    """Arpeggiated triad with decaying harmonics, looped for the duration."""
    sr = config.sample_rate_hz
    n = int(round(rng.uniform(10.0, 30.0) * sr))
    root_midi = rng.uniform(45.0, 69.0)
    offsets = (0.0, 4.0, 7.0, 12.0)
    note_len = int(round(0.25 * sr))
    t_note = np.arange(note_len) / sr
    decay = np.exp(-3.0 * t_note)

    out = np.zeros(n)
    pos = 0
    step = 0
    while pos < n:
        f0 = 440.0 * 2.0 ** ((root_midi + offsets[step % len(offsets)] - 69.0) / 12.0)
        note = np.zeros(note_len)
        for k in (1, 2, 3):
            note += (1.0 / k) * np.sin(2.0 * np.pi * k * f0 * t_note + rng.uniform(0.0, 2.0 * np.pi))
        chunk = min(note_len, n - pos)
        out[pos : pos + chunk] = (note * decay)[:chunk]
        pos += note_len
        step += 1
    out = out * (0.5 / np.max(np.abs(out)))
    return Waveform(samples=out, sample_rate_hz=sr)


def generate_noise_proxy(config: SynthConfig, out_dir, n_per_tag: int = 10):
    """Write interference files (noise and music) plus a noise.tsv manifest."""
    if n_per_tag < 1:
        raise ValueError("n_per_tag must be positive")
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    lines = []
    for tag, offset, synth in (("noise", 0, _synth_noise_file), ("music", n_per_tag, _synth_music_file)):
        for j in range(n_per_tag):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2, offset + j]))
            wave_out = synth(rng, config)
            rel = os.path.join("wav", f"{tag}_{j:02d}.wav")
            write_wav(wave_out, os.path.join(out_dir, rel))
            lines.append(f"{tag} {rel}")
    manifest_path = os.path.join(out_dir, "noise.tsv")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest_path
