"""Shared fixtures: the default synthetic corpus is expensive, build it once."""

import numpy as np
import pytest

from emopaste.features import compute_mfcc, extract_features
from emopaste.synthcorpus import SynthConfig, build_corpus


@pytest.fixture(scope="session")
def corpus7():
    """(utterances, labels) for the default in-memory corpus at seed 7."""
    return build_corpus(SynthConfig(seed=7))


@pytest.fixture(scope="session")
def raw_mfcc7(corpus7):
    """id -> plain MFCC matrices (no VAD, no mean normalization)."""
    utts, _ = corpus7
    return {u.id: compute_mfcc(u.audio_ref) for u in utts}


@pytest.fixture(scope="session")
def feats7(corpus7):
    """id -> full front-end features (MFCC + energy VAD + mean normalization)."""
    utts, _ = corpus7
    return {u.id: extract_features(u.audio_ref) for u in utts}


def split(utts, name):
    return [u for u in utts if u.split == name]


@pytest.fixture(scope="session")
def splits7(corpus7):
    utts, _ = corpus7
    return split(utts, "train"), split(utts, "dev"), split(utts, "test")


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
