"""23-dim MFCC front-end with energy-based VAD and per-utterance mean normalization.

Recipe per frame (25 ms window, 10 ms shift): remove DC, pre-emphasize with
coefficient 0.97, apply a Hamming window, take the 512-point DFT magnitude
spectrum, apply 23 triangular mel filters spanning 20-7600 Hz, log the
filterbank energies (floored), DCT-II orthonormal, and replace coefficient 0
with the log frame energy (natural log of the frame's sum of squares).
"""

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .audio import Waveform

# Filterbank energies are floored at 1e-10 before the log. The frame-energy
# floor is the same 1e-10 expressed in the [-1, 1] amplitude convention
# (energies scale by 1/32768^2 relative to integer sample values), keeping it
# consistent with the VAD threshold below.
FILTERBANK_FLOOR = 1e-10
FRAME_ENERGY_FLOOR = 1e-10 / 32768.0**2

# Energy-VAD constants: keep a frame iff logE > threshold + 0.5 * mean(logE).
# 5.5 is the conventional threshold on integer-scaled log energies; the
# 2*ln(1/32768) term moves it to this pipeline's [-1, 1] amplitude scale.
VAD_ENERGY_THRESHOLD = 5.5 + 2.0 * math.log(1.0 / 32768.0)
VAD_ENERGY_MEAN_SCALE = 0.5


@dataclass(frozen=True)
class MfccConfig:
    sample_rate_hz: int = 16000
    frame_length_s: float = 0.025
    frame_shift_s: float = 0.010
    n_fft: int = 512
    n_mels: int = 23
    fmin_hz: float = 20.0
    fmax_hz: float = 7600.0
    preemphasis: float = 0.97
    n_ceps: int = 23


@dataclass(eq=False)
class FeatureMatrix:
    """T x D matrix of per-frame coefficients; coefficient 0 is log energy."""

    values: np.ndarray
    frame_shift_s: float = 0.010
    frame_length_s: float = 0.025

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("feature matrix must be 2-D with at least one frame")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_frames * self.frame_shift_s


@dataclass(eq=False)
class VadMask:
    """Boolean keep-flag per frame of a paired FeatureMatrix."""

    keep: np.ndarray

    def __post_init__(self):
        self.keep = np.asarray(self.keep, dtype=bool)
        if self.keep.ndim != 1:
            raise ValueError("VAD mask must be 1-D")

    def __len__(self) -> int:
        return len(self.keep)


def hz_to_mel(f):
    return 1127.0 * np.log(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_filterbank(config: MfccConfig) -> np.ndarray:
    """Triangular mel filters evaluated at DFT bin centers; shape (n_mels, n_fft//2 + 1)."""
    edges = np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.n_mels + 2)
    bin_hz = np.arange(config.n_fft // 2 + 1) * config.sample_rate_hz / config.n_fft
    bin_mel = hz_to_mel(bin_hz)
    bank = np.zeros((config.n_mels, len(bin_mel)))
    for j in range(config.n_mels):
        left, center, right = edges[j], edges[j + 1], edges[j + 2]
        rising = (bin_mel - left) / (center - left)
        falling = (right - bin_mel) / (right - center)
        bank[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row k dotted with a length-n vector gives coefficient k."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * k * (m + 0.5) / n)
    mat[0] /= math.sqrt(2.0)
    return mat


def frame_count(n_samples: int, config: MfccConfig | None = None) -> int:
    config = config or MfccConfig()
    frame = round(config.frame_length_s * config.sample_rate_hz)
    shift = round(config.frame_shift_s * config.sample_rate_hz)
    if n_samples < frame:
        raise ValueError(f"waveform of {n_samples} samples is shorter than one {frame}-sample frame")
    return 1 + (n_samples - frame) // shift


def compute_mfcc(wave_in: Waveform, config: MfccConfig | None = None) -> FeatureMatrix:
    """Extract the MFCC matrix for one waveform. Deterministic."""
    config = config or MfccConfig()
    if wave_in.sample_rate_hz != config.sample_rate_hz:
        raise ValueError(
            f"waveform at {wave_in.sample_rate_hz} Hz; front-end configured for {config.sample_rate_hz} Hz"
        )
    frame_samples = round(config.frame_length_s * config.sample_rate_hz)
    shift_samples = round(config.frame_shift_s * config.sample_rate_hz)
    n_frames = frame_count(wave_in.n_samples, config)

    frames = np.lib.stride_tricks.sliding_window_view(wave_in.samples, frame_samples)
    frames = frames[:: shift_samples][:n_frames].copy()

    frames -= frames.mean(axis=1, keepdims=True)
    log_energy = np.log(np.maximum(np.sum(frames**2, axis=1), FRAME_ENERGY_FLOOR))

    emphasized = np.empty_like(frames)
    emphasized[:, 0] = frames[:, 0] * (1.0 - config.preemphasis)
    emphasized[:, 1:] = frames[:, 1:] - config.preemphasis * frames[:, :-1]
    windowed = emphasized * np.hamming(frame_samples)

    magnitude = np.abs(np.fft.rfft(windowed, n=config.n_fft, axis=1))
    fbank = magnitude @ mel_filterbank(config).T
    log_fbank = np.log(np.maximum(fbank, FILTERBANK_FLOOR))

    ceps = log_fbank @ dct_matrix(config.n_mels).T[:, : config.n_ceps]
    ceps[:, 0] = log_energy
    return FeatureMatrix(ceps, config.frame_shift_s, config.frame_length_s)


def energy_vad(
    feats: FeatureMatrix,
    threshold: float = VAD_ENERGY_THRESHOLD,
    mean_scale: float = VAD_ENERGY_MEAN_SCALE,
) -> VadMask:
    """Keep frames whose log energy clears threshold + mean_scale * mean(logE).

    Expects coefficient 0 to be the log frame energy, as compute_mfcc produces.
    If the rule would drop every frame, all frames are kept and a warning is
    raised so downstream never sees an empty utterance.
    """
    log_energy = feats.values[:, 0]
    keep = log_energy > threshold + mean_scale * float(np.mean(log_energy))
    if not keep.any():
        warnings.warn("energy VAD would drop every frame; keeping all frames", stacklevel=2)
        keep = np.ones(feats.n_frames, dtype=bool)
    return VadMask(keep)


def mean_normalize(feats: FeatureMatrix, mask: VadMask | None = None) -> FeatureMatrix:
    """Drop masked-out frames and subtract each coefficient's mean over the kept ones."""
    if mask is None:
        kept = feats.values
    else:
        if len(mask) != feats.n_frames:
            raise ValueError(f"mask length {len(mask)} != frame count {feats.n_frames}")
        if not mask.keep.any():
            raise ValueError("mean normalization needs at least one kept frame")
        kept = feats.values[mask.keep]
    return FeatureMatrix(kept - kept.mean(axis=0), feats.frame_shift_s, feats.frame_length_s)


def extract_features(wave_in: Waveform, config: MfccConfig | None = None) -> FeatureMatrix:
    """Full front-end: MFCC, energy VAD, then mean normalization over kept frames."""
    feats = compute_mfcc(wave_in, config)
    return mean_normalize(feats, energy_vad(feats))


# Feature cache: little-endian header (T, D as uint32) then T*D float32, row-major.

def save_feature_file(path, feats: FeatureMatrix) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<II", feats.n_frames, feats.dim))
        f.write(feats.values.astype("<f4").tobytes())


def load_feature_file(path) -> FeatureMatrix:
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated feature file header")
        n_frames, dim = struct.unpack("<II", header)
        data = np.frombuffer(f.read(4 * n_frames * dim), dtype="<f4")
    if data.size != n_frames * dim:
        raise ValueError(f"{path}: feature file shorter than its header claims")
    return FeatureMatrix(data.astype(np.float64).reshape(n_frames, dim))
