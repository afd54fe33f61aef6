"""CopyPaste primitives: random 4 s crops, feature concatenation, label assignment.

Two feature matrices are concatenated along time and the result labelled by
the scheme rule: pairing an emotional utterance with a neutral one keeps the
emotional label (N-CP); pairing two utterances of the same emotion keeps the
shared label (SE-CP).
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio import Waveform
from .features import FeatureMatrix


class Scheme(Enum):
    NONE = "none"
    N_CP = "n-cp"
    SE_CP = "se-cp"
    N_PLUS_SE_CP = "n+se-cp"


def parse_scheme(token: str) -> Scheme:
    normalized = token.strip().lower().replace("_", "-")
    for scheme in Scheme:
        if scheme.value == normalized:
            return scheme
    raise ValueError(f"unknown scheme {token!r}; expected one of {[s.value for s in Scheme]}")


@dataclass(frozen=True)
class EmotionLabel:
    name: str
    is_neutral: bool = False


@dataclass(eq=False)
class Utterance:
    """One corpus item: id, speaker, label, split, and where its audio lives."""

    id: str
    speaker_id: str
    label: EmotionLabel
    split: str
    audio_ref: str | Waveform


def make_label_set(names, neutral_name: str = "neutral") -> tuple[EmotionLabel, ...]:
    """Build a label set with exactly one neutral member, preserving order."""
    names = list(names)
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate label names in {names}")
    if names.count(neutral_name) != 1:
        raise ValueError(f"label set {names} must contain the neutral label {neutral_name!r} exactly once")
    return tuple(EmotionLabel(n, is_neutral=(n == neutral_name)) for n in names)


def random_crop(
    feats: FeatureMatrix,
    crop_seconds: float = 4.0,
    rng: np.random.Generator | None = None,
) -> FeatureMatrix:
    """Take a contiguous crop of crop_seconds at a uniform random frame offset.

    Inputs no longer than the crop are returned whole.
    """
    if crop_seconds <= 0:
        raise ValueError("crop_seconds must be positive")
    crop_frames = int(np.floor(crop_seconds / feats.frame_shift_s + 1e-9))
    if feats.n_frames <= crop_frames:
        return feats
    rng = rng if rng is not None else np.random.default_rng()
    offset = int(rng.integers(0, feats.n_frames - crop_frames + 1))
    return FeatureMatrix(
        feats.values[offset : offset + crop_frames], feats.frame_shift_s, feats.frame_length_s
    )


def concat_features(a: FeatureMatrix, b: FeatureMatrix, order_swap: bool = False) -> FeatureMatrix:
    """Row-wise concatenation; with order_swap the second input comes first."""
    if a.dim != b.dim:
        raise ValueError(f"feature dimension mismatch: {a.dim} vs {b.dim}")
    first, second = (b, a) if order_swap else (a, b)
    return FeatureMatrix(
        np.concatenate([first.values, second.values], axis=0), a.frame_shift_s, a.frame_length_s
    )


def concat_label(la: EmotionLabel, lb: EmotionLabel, scheme: Scheme) -> EmotionLabel:
    """Label for the concatenation of two utterances under a CopyPaste scheme.

    N-CP requires at least one neutral member and returns the non-neutral
    label when present; SE-CP requires matching labels and returns the shared
    one. Violations signal a pairing bug upstream.
    """
    if scheme is Scheme.N_CP:
        if not (la.is_neutral or lb.is_neutral):
            raise ValueError(f"N-CP pair needs a neutral member, got ({la.name}, {lb.name})")
        if not la.is_neutral:
            return la
        if not lb.is_neutral:
            return lb
        return la
    if scheme is Scheme.SE_CP:
        if la != lb:
            raise ValueError(f"SE-CP pair must share one emotion, got ({la.name}, {lb.name})")
        return la
    raise ValueError(f"no concatenation label rule for scheme {scheme}")
