"""Waveform container, 16-bit PCM WAV I/O, power measurement, SNR-calibrated mixing.

All amplitudes are dimensionless floats in [-1, 1]; integer PCM is converted
on read by dividing by 32768. SNR throughout is 10*log10(P_signal / P_noise)
over full-file mean power.
"""

import math
import wave
from dataclasses import dataclass

import numpy as np

INT16_FULL_SCALE = 32768.0


class AudioError(Exception):
    """Base class for audio-layer failures."""


class UnsupportedChannelsError(AudioError):
    """WAV file is not mono."""


class UnsupportedFormatError(AudioError):
    """WAV file is not uncompressed 16-bit PCM (or not RIFF/WAVE at all)."""


class SilentSignalError(AudioError):
    """Operation undefined on a zero-power waveform."""


class SampleRateMismatchError(AudioError):
    """Waveforms in one operation must share a sample rate."""


@dataclass(eq=False)
class Waveform:
    """Mono audio samples in [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample rate must be positive")
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class MixInfo:
    """Bookkeeping from one mix_at_snr call, enough to re-measure the SNR.

    The pre-rescale mixture is recovered as mixed.samples / peak_rescale, and
    the scaled noise as that minus the clean signal.
    """

    noise_gain: float
    noise_offset: int
    peak_rescale: float


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM RIFF/WAVE file, scaling samples by 1/32768."""
    try:
        reader = wave.open(str(path), "rb")
    except FileNotFoundError:
        raise
    except (wave.Error, EOFError) as exc:
        raise UnsupportedFormatError(f"{path}: not a readable RIFF/WAVE file ({exc})") from exc
    with reader:
        if reader.getnchannels() != 1:
            raise UnsupportedChannelsError(
                f"{path}: unsupported channel count {reader.getnchannels()} (mono required)"
            )
        if reader.getcomptype() != "NONE":
            raise UnsupportedFormatError(f"{path}: compressed WAV ({reader.getcomptype()}) not supported")
        if reader.getsampwidth() != 2:
            raise UnsupportedFormatError(
                f"{path}: unsupported sample width {8 * reader.getsampwidth()} bit (16-bit required)"
            )
        rate = reader.getframerate()
        raw = reader.readframes(reader.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / INT16_FULL_SCALE
    return Waveform(samples, rate)


def write_wav(wave_out: Waveform, path) -> None:
    """Write a mono 16-bit PCM RIFF/WAVE file.

    Samples are clamped to [-1, 1], then quantized with round-half-away-from-zero.
    """
    clamped = np.clip(wave_out.samples, -1.0, 1.0) * INT16_FULL_SCALE
    quantized = np.sign(clamped) * np.floor(np.abs(clamped) + 0.5)
    pcm = np.clip(quantized, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(wave_out.sample_rate_hz)
        writer.writeframes(pcm.tobytes())


def mean_power(wave_in: Waveform) -> float:
    """Arithmetic mean of squared samples (amplitude^2)."""
    return float(np.mean(np.square(wave_in.samples)))


def loop_noise(noise: Waveform, n_samples: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Extract n_samples from noise, circularly, from a uniform random start offset.

    Covers both cases: longer noise is cropped, shorter noise wraps around.
    Returns the segment and the offset used.
    """
    offset = int(rng.integers(0, noise.n_samples))
    idx = (offset + np.arange(n_samples)) % noise.n_samples
    return noise.samples[idx], offset


def mix_at_snr(
    signal: Waveform,
    noise: Waveform,
    snr_db: float,
    rng: np.random.Generator,
    with_info: bool = False,
):
    """Mix noise into signal so the measured SNR equals snr_db exactly.

    The noise is looped/cropped to the signal length at a random offset and
    scaled by g = sqrt(P_signal / P_noise * 10^(-snr_db/10)), where P_noise is
    the mean power of the extracted segment. If the sum peaks above 1.0, the
    whole mixture is rescaled to peak 0.99 (SNR is unaffected by the rescale).

    With with_info=True, returns (Waveform, MixInfo).
    """
    if signal.sample_rate_hz != noise.sample_rate_hz:
        raise SampleRateMismatchError(
            f"signal at {signal.sample_rate_hz} Hz vs noise at {noise.sample_rate_hz} Hz"
        )
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    p_signal = mean_power(signal)
    if p_signal <= 0.0:
        raise SilentSignalError("signal is silent; SNR undefined")
    if mean_power(noise) <= 0.0:
        raise SilentSignalError("noise file is silent")

    segment, offset = loop_noise(noise, signal.n_samples, rng)
    p_segment = float(np.mean(np.square(segment)))
    if p_segment <= 0.0:
        raise SilentSignalError("drawn noise segment is silent")

    gain = math.sqrt(p_signal / p_segment * 10.0 ** (-snr_db / 10.0))
    mixture = signal.samples + gain * segment
    peak = float(np.max(np.abs(mixture)))
    rescale = 0.99 / peak if peak > 1.0 else 1.0
    mixed = Waveform(mixture * rescale, signal.sample_rate_hz)
    if with_info:
        return mixed, MixInfo(noise_gain=gain, noise_offset=offset, peak_rescale=rescale)
    return mixed
