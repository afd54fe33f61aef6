"""Command-line pipeline: synth | features | train | eval | noisify | shapes.

Each subcommand accepts --config FILE with `key = value` lines naming the
command's own flags; explicit flags win over file values. Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .audio import read_wav
from .copypaste import parse_scheme
from .evaluate import average_runs, format_report, kfold_plan, report_to_kv
from .features import MfccConfig, extract_features, load_feature_file, save_feature_file
from .manifest import read_manifest, write_manifest
from .model import (
    TrainConfig,
    format_stage_table,
    load_checkpoint,
    save_checkpoint,
    score_utterances,
    train,
    validate_table1_shapes,
)
from .noiseaug import NoiseCorpus, build_augmented_trainset, make_noisy_testset, save_mix_records
from .synthcorpus import SynthConfig, generate_corpus, generate_noise_proxy

CACHE_ENV_VAR = "EMOPASTE_CACHE_DIR"


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _scheme_arg(token):
    try:
        return parse_scheme(token)
    except ValueError as e:
        # surface the library's message instead of argparse's callable name
        raise argparse.ArgumentTypeError(str(e)) from None


def _read_config_file(path, parser) -> dict:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        parser.error(f"cannot read config file: {e}")
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            parser.error(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_BOOL_TOKENS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _apply_config(subparser, config_values, parser) -> None:
    """Install file values as defaults so explicit flags still win."""
    actions = {a.dest: a for a in subparser._actions}
    converted = {}
    for key, raw in config_values.items():
        if key == "config":
            continue
        action = actions.get(key)
        if action is None:
            parser.error(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            token = raw.lower()
            if token not in _BOOL_TOKENS:
                parser.error(f"config key {key!r}: expected a boolean, got {raw!r}")
            converted[key] = _BOOL_TOKENS[token]
        elif action.type is not None:
            try:
                converted[key] = action.type(raw)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as e:
                parser.error(f"config key {key!r}: {e}")
        else:
            converted[key] = raw
    subparser.set_defaults(**converted)


def _require(args, parser, *names) -> None:
    for name in names:
        if getattr(args, name) is None:
            parser.error(f"--{name.replace('_', '-')} is required")


def _cache_dir(args, parser):
    cache = args.cache_dir or os.environ.get(CACHE_ENV_VAR)
    if not cache:
        parser.error(f"--cache-dir is required (or set {CACHE_ENV_VAR})")
    return cache


def _cache_path(cache_dir, utt_id):
    return os.path.join(cache_dir, f"{utt_id}.feat")


def _load_store(utts, cache_dir) -> dict:
    store = {}
    for utt in utts:
        path = _cache_path(cache_dir, utt.id)
        if not os.path.exists(path):
            raise FileNotFoundError(f"no cached features for {utt.id!r}; run the features command first")
        store[utt.id] = load_feature_file(path)
    return store


def cmd_synth(args, parser) -> int:
    _require(args, parser, "out")
    config = SynthConfig(n_classes=args.classes, n_speakers=args.speakers, seed=args.seed)
    utts, _, manifest_path = generate_corpus(config, args.out)
    noise_manifest = generate_noise_proxy(config, args.out)
    _log(f"wrote {len(utts)} utterances, manifest {manifest_path}, noise manifest {noise_manifest}")
    print(manifest_path)
    return 0


def cmd_features(args, parser) -> int:
    _require(args, parser, "manifest")
    cache_dir = _cache_dir(args, parser)
    os.makedirs(cache_dir, exist_ok=True)
    utts, _ = read_manifest(args.manifest)
    mfcc = MfccConfig()
    computed = skipped = 0
    for utt in utts:
        out_path = _cache_path(cache_dir, utt.id)
        if (
            not args.force
            and os.path.exists(out_path)
            and os.path.getmtime(out_path) >= os.path.getmtime(utt.audio_ref)
        ):
            skipped += 1
            continue
        feats = extract_features(read_wav(utt.audio_ref), mfcc)
        save_feature_file(out_path, feats)
        computed += 1
    _log(f"features: {computed} computed, {skipped} cached")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size,
        scheme=args.scheme,
        aug_fraction=args.aug_fraction,
        crop_seconds=args.crop_seconds,
        learning_rate=args.learning_rate,
    )


def _splits(utts):
    return (
        [u for u in utts if u.split == "train"],
        [u for u in utts if u.split == "dev"],
        [u for u in utts if u.split == "test"],
    )


def cmd_train(args, parser) -> int:
    _require(args, parser, "manifest", "out")
    cache_dir = _cache_dir(args, parser)
    utts, _ = read_manifest(args.manifest)
    train_utts, dev_utts, _ = _splits(utts)
    store = _load_store(train_utts + dev_utts, cache_dir)
    params, history = train(train_utts, dev_utts, store, _train_config(args))
    save_checkpoint(params, args.out)
    if args.history:
        with open(args.history, "w", encoding="utf-8") as fh:
            for epoch, f1 in enumerate(history):
                fh.write(f"{epoch}\t{f1!r}\n")
    best = max(history) if history else float("nan")
    _log(f"trained {args.epochs} epochs, best dev F1 {best:.4f}, checkpoint {args.out}")
    return 0


def _session_of(speaker_id, sessions) -> str:
    for name, members in sessions.items():
        if speaker_id in members:
            return name
    raise ValueError(f"speaker {speaker_id!r} not covered by the session grouping")


def _eval_folds(args, parser, utts, store) -> int:
    speakers = sorted({u.speaker_id for u in utts})
    if len(speakers) < 5:
        parser.error(f"5-fold mode needs at least 5 speakers, found {len(speakers)}")
    groups = {f"g{i}": set() for i in range(5)}
    for i, spk in enumerate(speakers):
        groups[f"g{i * 5 // len(speakers)}"].add(spk)
    plan = kfold_plan(sorted(groups))
    scores = []
    for fold_index, fold in enumerate(plan.folds):
        train_utts = [u for u in utts if _session_of(u.speaker_id, groups) in fold.train_sessions]
        dev_utts = [u for u in utts if _session_of(u.speaker_id, groups) == fold.dev_session]
        test_utts = [u for u in utts if _session_of(u.speaker_id, groups) == fold.test_session]
        params, _ = train(train_utts, dev_utts, store, _train_config(args))
        report = score_utterances(test_utts, store, params)
        scores.append(report.weighted_f1)
        print(f"fold {fold_index}: test session {fold.test_session}, weighted F1 {report.weighted_f1:.4f}")
    mean, std = average_runs(scores)
    print(f"5-fold mean weighted F1 {mean:.4f} (std {std:.4f})")
    return 0


def cmd_eval(args, parser) -> int:
    _require(args, parser, "manifest")
    cache_dir = _cache_dir(args, parser)
    utts, _ = read_manifest(args.manifest)
    store = _load_store(utts, cache_dir)

    if args.folds:
        if args.folds != 5:
            parser.error("only --folds 5 is supported")
        return _eval_folds(args, parser, utts, store)

    train_utts, dev_utts, test_utts = _splits(utts)
    target = {"train": train_utts, "dev": dev_utts, "test": test_utts}[args.split]
    if not target:
        parser.error(f"manifest has no utterances in split {args.split!r}")

    if args.runs:
        scores = []
        for run in range(args.runs):
            run_args = argparse.Namespace(**vars(args))
            run_args.seed = args.seed + run
            params, _ = train(train_utts, dev_utts, store, _train_config(run_args))
            report = score_utterances(target, store, params)
            scores.append(report.weighted_f1)
            print(f"run {run} (seed {run_args.seed}): weighted F1 {report.weighted_f1:.4f}")
        mean, std = average_runs(scores)
        print(f"mean weighted F1 {mean:.4f} (std {std:.4f}) over {args.runs} runs")
        return 0

    _require(args, parser, "checkpoint")
    params = load_checkpoint(args.checkpoint)
    report = score_utterances(target, store, params)
    print(format_report(report), end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report_to_kv(report))
    return 0


def cmd_noisify(args, parser) -> int:
    _require(args, parser, "manifest", "noise_manifest", "out")
    utts, _ = read_manifest(args.manifest)
    corpus = NoiseCorpus.from_manifest(args.noise_manifest)
    os.makedirs(args.out, exist_ok=True)
    wav_dir = os.path.join(args.out, "wav")

    if args.mode == "train":
        train_utts, dev_utts, test_utts = _splits(utts)
        if not train_utts:
            parser.error("manifest has no train split to augment")
        aug_utts, records = build_augmented_trainset(train_utts, corpus, args.seed, out_dir=wav_dir)
        out_utts = aug_utts + dev_utts + test_utts
        manifest_path = os.path.join(args.out, "augmented.tsv")
    else:
        if args.snr is None:
            parser.error("--snr is required in test mode")
        test_utts = [u for u in utts if u.split == "test"]
        if not test_utts:
            parser.error("manifest has no test split to noisify")
        out_utts, records = make_noisy_testset(test_utts, corpus, args.snr, args.seed, out_dir=wav_dir)
        manifest_path = os.path.join(args.out, f"noisy_test_{args.snr:g}db.tsv")

    # fresh copies carry paths joined from --out; rebase those onto the
    # manifest's own directory so the rows resolve from any cwd
    out_base = os.path.abspath(args.out)
    rows = [
        utt
        if os.path.isabs(utt.audio_ref)
        else replace(utt, audio_ref=os.path.relpath(os.path.abspath(utt.audio_ref), out_base))
        for utt in out_utts
    ]
    write_manifest(rows, manifest_path)
    save_mix_records(records, os.path.join(args.out, "mixlog.tsv"))
    _log(f"wrote {len(records)} mixes, manifest {manifest_path}")
    print(manifest_path)
    return 0


def cmd_shapes(args, parser) -> int:
    stages = validate_table1_shapes(args.frames, n_classes=args.classes)
    print(format_stage_table(stages), end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="emopaste", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    registry = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file providing defaults for this command's flags")
        p.add_argument("--seed", type=int, default=0, help="base random seed")
        p.set_defaults(func=func)
        registry[name] = p
        return p

    p = add("synth", cmd_synth, "generate the synthetic corpus and noise files")
    p.add_argument("--out", help="output directory")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--speakers", type=int, default=20)

    p = add("features", cmd_features, "extract features for every manifest entry")
    p.add_argument("--manifest")
    p.add_argument("--cache-dir", help=f"feature cache root (default ${CACHE_ENV_VAR})")
    p.add_argument("--force", action="store_true", help="recompute even when the cache is fresh")

    def add_train_flags(p):
        p.add_argument("--manifest")
        p.add_argument("--cache-dir", help=f"feature cache root (default ${CACHE_ENV_VAR})")
        p.add_argument("--scheme", type=_scheme_arg, default="none", help="none | n-cp | se-cp | n+se-cp")
        p.add_argument("--epochs", type=int, default=15)
        p.add_argument("--batch-size", type=int, default=128)
        p.add_argument("--aug-fraction", type=float, default=0.8)
        p.add_argument("--crop-seconds", type=float, default=4.0)
        p.add_argument("--learning-rate", type=float, default=1e-3)

    p = add("train", cmd_train, "train a model on the manifest's train/dev splits")
    add_train_flags(p)
    p.add_argument("--out", help="checkpoint output path")
    p.add_argument("--history", help="write per-epoch dev F1 lines here")

    p = add("eval", cmd_eval, "score a checkpoint, or retrain for --runs/--folds aggregation")
    add_train_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--runs", type=int, help="retrain this many times (seeds seed..seed+N-1) and average")
    p.add_argument("--folds", type=int, help="speaker-grouped cross-validation (5 only)")
    p.add_argument("--out", help="write machine-readable metrics here")

    p = add("noisify", cmd_noisify, "build a Clean+Noise train set or a noisy test set")
    p.add_argument("--manifest")
    p.add_argument("--noise-manifest")
    p.add_argument("--mode", choices=("train", "test"), default="train")
    p.add_argument("--snr", type=float, help="target SNR in dB (test mode)")
    p.add_argument("--out", help="output directory")

    p = add("shapes", cmd_shapes, "print the reference architecture's stage sizes")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--classes", type=int, default=4)

    return parser, registry


def main(argv=None) -> int:
    parser, registry = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a command is required")
        if args.config:
            _apply_config(registry[args.command], _read_config_file(args.config, parser), parser)
            args = parser.parse_args(argv)
        return args.func(args, parser)
    except SystemExit as e:
        return int(e.code or 0)
    except (OSError, ValueError, KeyError, RuntimeError, np.linalg.LinAlgError) as e:
        _log(f"emopaste: error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
