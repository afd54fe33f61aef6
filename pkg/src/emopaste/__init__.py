"""Concatenation-based augmentation pipeline for speech emotion classifiers."""

from .audio import MixInfo, Waveform, loop_noise, mean_power, mix_at_snr, read_wav, write_wav
from .batcher import BatchItem, EpochPlan, materialize_batch, pair_ncp, pair_secp, plan_epoch
from .copypaste import (
    EmotionLabel,
    Scheme,
    Utterance,
    concat_features,
    concat_label,
    make_label_set,
    parse_scheme,
    random_crop,
)
from .evaluate import EvalReport, average_runs, kfold_plan, weighted_f1
from .features import FeatureMatrix, MfccConfig, VadMask, compute_mfcc, energy_vad, extract_features, mean_normalize
from .model import (
    AttentionParams,
    ModelParams,
    TrainConfig,
    attention_pool,
    attention_weights,
    forward,
    load_checkpoint,
    loss_and_grad,
    predict_label,
    save_checkpoint,
    train,
    validate_table1_shapes,
)
from .noiseaug import MixRecord, NoiseCorpus, build_augmented_trainset, make_noisy_testset
from .synthcorpus import SynthConfig, build_corpus, generate_corpus, generate_noise_proxy

__version__ = "0.1.0"

__all__ = [
    "AttentionParams",
    "BatchItem",
    "EmotionLabel",
    "EpochPlan",
    "EvalReport",
    "FeatureMatrix",
    "MfccConfig",
    "MixInfo",
    "MixRecord",
    "ModelParams",
    "NoiseCorpus",
    "Scheme",
    "SynthConfig",
    "TrainConfig",
    "Utterance",
    "VadMask",
    "Waveform",
    "attention_pool",
    "attention_weights",
    "average_runs",
    "build_augmented_trainset",
    "build_corpus",
    "compute_mfcc",
    "concat_features",
    "concat_label",
    "energy_vad",
    "extract_features",
    "forward",
    "generate_corpus",
    "generate_noise_proxy",
    "kfold_plan",
    "load_checkpoint",
    "loop_noise",
    "loss_and_grad",
    "make_label_set",
    "make_noisy_testset",
    "materialize_batch",
    "mean_normalize",
    "mean_power",
    "mix_at_snr",
    "pair_ncp",
    "pair_secp",
    "parse_scheme",
    "plan_epoch",
    "predict_label",
    "random_crop",
    "read_wav",
    "save_checkpoint",
    "train",
    "validate_table1_shapes",
    "weighted_f1",
    "write_wav",
]
