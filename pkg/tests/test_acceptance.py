"""Release gate: ten end-to-end checks, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdict lines
inline. The two training-matrix checks retrain nine models each and dominate
the runtime.
"""

import math
import time

import numpy as np
import pytest

from emopaste.audio import mean_power
from emopaste.batcher import plan_epoch
from emopaste.copypaste import Scheme, Utterance, concat_label, make_label_set
from emopaste.evaluate import weighted_f1
from emopaste.features import extract_features
from emopaste.model import (
    AttentionParams,
    TrainConfig,
    attention_weights,
    init_params,
    iter_params,
    loss_and_grad,
    score_utterances,
    train,
    validate_table1_shapes,
)
from emopaste.noiseaug import NoiseCorpus, build_augmented_trainset, make_noisy_testset
from emopaste.synthcorpus import SynthConfig, generate_noise_proxy

SEEDS = (1, 2, 3)
MATRIX_SCHEMES = (Scheme.NONE, Scheme.N_CP, Scheme.N_PLUS_SE_CP)


def verdict(number: int, ok: bool, detail: str) -> None:
    print(f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)


# --- shared expensive artifacts ---------------------------------------------


@pytest.fixture(scope="module")
def noise_corpus(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("noiseproxy")
    manifest = generate_noise_proxy(SynthConfig(seed=7), str(out_dir))
    return NoiseCorpus.from_manifest(manifest)


def run_scheme_matrix(splits, feats):
    """Nine dev-selected training runs: {none, n-cp, n+se-cp} x three seeds."""
    train_utts, dev_utts, test_utts = splits
    results = {}
    for scheme in MATRIX_SCHEMES:
        for seed in SEEDS:
            config = TrainConfig(epochs=30, seed=seed, batch_size=32, scheme=scheme)
            params, _ = train(train_utts, dev_utts, feats, config)
            results[(scheme.value, seed)] = score_utterances(test_utts, feats, params).weighted_f1
    return results


@pytest.fixture(scope="module")
def scheme_matrix(splits7, feats7):
    start = time.perf_counter()
    results = run_scheme_matrix(splits7, feats7)
    return results, time.perf_counter() - start


# --- criteria ----------------------------------------------------------------


def test_criterion_1_attention_rows_normalize():
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        n_frames = (1, 2, 10, 1000)[i % 4]
        dim = int(rng.integers(2, 9))
        heads = int(rng.integers(1, 7))
        X = rng.normal(0.0, 3.0, size=(n_frames, dim))
        att = AttentionParams(mu=rng.normal(0.0, 3.0, size=(heads, dim)), s=rng.uniform(0.05, 10.0, size=heads))
        sums = attention_weights(X, att).sum(axis=1)
        worst = max(worst, float(np.max(np.abs(sums - 1.0))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    verdict(1, ok, f"1000 draws, worst head-weight sum deviation {worst:.3g}, {elapsed:.2f}s")
    assert worst <= 1e-9
    assert elapsed < 10.0


def test_criterion_2_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(4202)
    start = time.perf_counter()
    step = 1e-5
    worst = 0.0
    for _ in range(20):
        labels = make_label_set(["angry", "happy", "neutral"])
        config = TrainConfig(
            epochs=1,
            input_dim=int(rng.integers(3, 6)),
            encoder_hidden=(int(rng.integers(4, 7)),),
            d_enc=int(rng.integers(3, 6)),
            n_heads=int(rng.integers(1, 4)),
            head_width=int(rng.integers(4, 8)),
        )
        params = init_params(config, labels, rng)
        batch = [
            (rng.normal(size=(int(rng.integers(2, 7)), config.input_dim)), labels[int(rng.integers(0, 3))])
            for _ in range(3)
        ]
        _, grads = loss_and_grad(batch, params)
        for name, arr in iter_params(params):
            numeric = np.empty_like(arr)
            flat = arr.reshape(-1)
            numeric_flat = numeric.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                loss_plus = loss_and_grad(batch, params)[0]
                flat[j] = orig - step
                loss_minus = loss_and_grad(batch, params)[0]
                flat[j] = orig
                numeric_flat[j] = (loss_plus - loss_minus) / (2.0 * step)
            analytic = grads[name]
            denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 60.0
    verdict(2, ok, f"20 models, worst per-group relative gradient error {worst:.3g}, {elapsed:.1f}s")
    assert worst <= 1e-5
    assert elapsed < 60.0


def test_criterion_3_concat_label_rule_exhaustive():
    labels = make_label_set(["neutral", "angry", "happy", "sad", "disgust"])
    failures = []
    for a in labels:
        for b in labels:
            try:
                got = concat_label(a, b, Scheme.N_CP)
            except ValueError:
                got = None
            if a.is_neutral and b.is_neutral:
                expect = a
            elif a.is_neutral or b.is_neutral:
                expect = b if a.is_neutral else a
            else:
                expect = None
            if got != expect:
                failures.append(("n-cp", a.name, b.name))

            try:
                got = concat_label(a, b, Scheme.SE_CP)
            except ValueError:
                got = None
            if got != (a if a == b else None):
                failures.append(("se-cp", a.name, b.name))
    ok = not failures
    verdict(3, ok, f"25 ordered pairs x 2 schemes, {len(failures)} deviations")
    assert failures == []


def test_criterion_4_scheduler_quotas():
    def corpus_for(n_batches, batch_size=4):
        cycle = ("neutral", "angry", "neutral", "happy")
        labels = make_label_set(["neutral", "angry", "happy"])
        by_name = {lab.name: lab for lab in labels}
        return [
            Utterance(id=f"u{i}", speaker_id=f"s{i % 7}", label=by_name[cycle[i % 4]], split="train", audio_ref="")
            for i in range(n_batches * batch_size)
        ]

    bad = []
    for n_batches in (1, 5, 10, 100):
        plan = plan_epoch(corpus_for(n_batches), batch_size=4, scheme=Scheme.N_CP, aug_fraction=0.8, seed=3)
        n_aug = sum(1 for s in plan.batch_schemes if s is not Scheme.NONE)
        expected = int(math.floor(0.8 * n_batches + 0.5))
        if len(plan.batches) != n_batches or n_aug != expected:
            bad.append((n_batches, n_aug, expected))

    plan = plan_epoch(corpus_for(10), batch_size=4, scheme=Scheme.N_PLUS_SE_CP, aug_fraction=0.8, seed=3)
    counts = {s: 0 for s in (Scheme.N_CP, Scheme.SE_CP, Scheme.NONE)}
    for s in plan.batch_schemes:
        counts[s] += 1
    split_ok = counts == {Scheme.N_CP: 4, Scheme.SE_CP: 4, Scheme.NONE: 2}
    if not split_ok:
        bad.append(("n+se-cp split", {k.value: v for k, v in counts.items()}))

    ok = not bad
    detail = "counts match round(0.8*n) for n in (1,5,10,100); 10-batch mix 4/4/2" if ok else f"deviations: {bad}"
    verdict(4, ok, detail)
    assert bad == []


def test_criterion_5_snr_calibration(splits7, noise_corpus):
    train_utts = splits7[0]
    start = time.perf_counter()
    out_utts, records = build_augmented_trainset(train_utts, noise_corpus, seed=7)
    rows_ok = len(out_utts) == 7 * len(train_utts) and len(records) == 6 * len(train_utts)
    clean = {u.id: u.audio_ref for u in train_utts}
    mixed = {u.id: u.audio_ref for u in out_utts}
    worst = 0.0
    for record in records:
        source = clean[record.source_id]
        pre_rescale = mixed[record.out_id].samples / record.peak_rescale
        noise_part = pre_rescale - source.samples
        measured = 10.0 * math.log10(mean_power(source) / float(np.mean(noise_part**2)))
        worst = max(worst, abs(measured - record.snr_db))
    targets = {record.snr_db for record in records}
    elapsed = time.perf_counter() - start
    ok = rows_ok and targets == {10.0, 5.0, 0.0} and worst <= 0.01 and elapsed < 30.0
    verdict(
        5,
        ok,
        f"{len(records)} mixes over targets 10/5/0 dB, worst |measured-target| {worst:.3g} dB, "
        f"{len(out_utts)}/{len(train_utts)} rows, {elapsed:.1f}s",
    )
    assert rows_ok
    assert targets == {10.0, 5.0, 0.0}
    assert worst <= 0.01
    assert elapsed < 30.0


def test_criterion_6_reference_shape_table():
    stages = validate_table1_shapes(160)
    got = [size for _, size in stages]
    expected = [(160, 23), (160, 23), (80, 12), (40, 6), (20, 3), 20, (32, 128), 400, 4]
    ok = got == expected
    verdict(6, ok, f"stage sizes {got}")
    assert got == expected


def test_criterion_7_weighted_f1_matches_tally_oracle():
    def oracle(refs, hyps):
        classes = sorted(set(refs) | set(hyps))
        total = 0.0
        for c in classes:
            tp = sum(1 for r, h in zip(refs, hyps) if r == c and h == c)
            fp = sum(1 for r, h in zip(refs, hyps) if r != c and h == c)
            fn = sum(1 for r, h in zip(refs, hyps) if r == c and h != c)
            denom = 2 * tp + fp + fn
            f1 = 2 * tp / denom if denom else 0.0
            total += (sum(1 for r in refs if r == c) / len(refs)) * f1
        return total

    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(2, 10))
        names = [f"c{j}" for j in range(k)]
        refs = [names[i] for i in rng.integers(0, k, size=1000)]
        hyps = [names[i] for i in rng.integers(0, k, size=1000)]
        worst = max(worst, abs(weighted_f1(refs, hyps).weighted_f1 - oracle(refs, hyps)))
    hand = weighted_f1(["A", "A", "B", "B"], ["A", "A", "A", "A"]).weighted_f1
    ok = worst <= 1e-12 and abs(hand - 1.0 / 3.0) <= 1e-12
    verdict(7, ok, f"100 random 1000-item vectors, worst |diff| {worst:.3g}; hand case {hand!r}")
    assert worst <= 1e-12
    assert abs(hand - 1.0 / 3.0) <= 1e-12


def test_criterion_8_copypaste_beats_baseline(scheme_matrix):
    results, elapsed = scheme_matrix

    def mean_for(scheme_value):
        return sum(results[(scheme_value, seed)] for seed in SEEDS) / len(SEEDS)

    none_f1 = mean_for("none")
    ncp_f1 = mean_for("n-cp")
    nse_f1 = mean_for("n+se-cp")
    ok = ncp_f1 > none_f1 and nse_f1 >= none_f1 and elapsed < 600.0
    verdict(
        8,
        ok,
        f"mean test weighted F1 over seeds {SEEDS}: none={none_f1:.4f} n-cp={ncp_f1:.4f} "
        f"n+se-cp={nse_f1:.4f}, {elapsed:.0f}s",
    )
    assert elapsed < 600.0
    assert ncp_f1 > none_f1
    assert nse_f1 >= none_f1


def test_criterion_9_noise_augmented_training_wins_at_0db(splits7, feats7, noise_corpus):
    train_utts, dev_utts, test_utts = splits7
    start = time.perf_counter()

    store = dict(feats7)

    def featurize_and_strip(utts):
        """Cache features for in-memory copies, then drop the waveforms."""
        out = []
        for u in utts:
            if u.id not in store:
                store[u.id] = extract_features(u.audio_ref)
            if isinstance(u.audio_ref, str):
                out.append(u)
            else:
                out.append(Utterance(id=u.id, speaker_id=u.speaker_id, label=u.label, split=u.split, audio_ref="mem"))
        return out

    aug_raw, _ = build_augmented_trainset(train_utts, noise_corpus, seed=7)
    aug_utts = featurize_and_strip(aug_raw)
    del aug_raw
    noisy_raw, _ = make_noisy_testset(test_utts, noise_corpus, snr_db=0.0, seed=7)
    noisy_test = featurize_and_strip(noisy_raw)
    del noisy_raw

    def mean_f1(train_set):
        scores = []
        for seed in SEEDS:
            config = TrainConfig(epochs=10, seed=seed, batch_size=32)
            params, _ = train(train_set, dev_utts, store, config)
            scores.append(score_utterances(noisy_test, store, params).weighted_f1)
        return sum(scores) / len(scores)

    clean_f1 = mean_f1(train_utts)
    noisy_f1 = mean_f1(aug_utts)
    elapsed = time.perf_counter() - start
    ok = noisy_f1 > clean_f1 and elapsed < 600.0
    verdict(
        9,
        ok,
        f"0 dB test, mean weighted F1 over seeds {SEEDS}: clean-trained={clean_f1:.4f} "
        f"clean+noise-trained={noisy_f1:.4f}, {elapsed:.0f}s",
    )
    assert elapsed < 600.0
    assert noisy_f1 > clean_f1


def test_criterion_10_training_matrix_reproduces_exactly(scheme_matrix, splits7, feats7):
    first, _ = scheme_matrix
    second = run_scheme_matrix(splits7, feats7)
    worst = max(abs(first[key] - second[key]) for key in first)
    ok = worst <= 1e-12
    verdict(10, ok, f"9 retrained weighted F1 values, max repeat deviation {worst:.3g}")
    assert worst <= 1e-12
