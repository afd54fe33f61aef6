"""Epoch planning: fixed-size batches with exact CopyPaste quotas.

An epoch covers every training utterance exactly once as a primary item.
A fixed quota of round(aug_fraction * n_batches) randomly placed batches is
augmented; under the combined scheme the quota is split evenly between N-CP
and SE-CP with any odd remainder going to N-CP. Augmented batches replace
each item with a concatenation, so batch sizes are preserved.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .copypaste import EmotionLabel, Scheme, Utterance, concat_label, parse_scheme
from .features import FeatureMatrix
from .copypaste import concat_features, random_crop

_SEED_BOUND = 2**63


@dataclass(eq=False)
class BatchItem:
    """Either a single utterance or a planned concatenation of two."""

    utt_a: str
    assigned_label: EmotionLabel
    utt_b: str | None = None
    scheme: Scheme = Scheme.NONE
    order_swap: bool = False
    crop_seed: int = 0

    @property
    def is_concat(self) -> bool:
        return self.utt_b is not None


@dataclass(eq=False)
class EpochPlan:
    batches: list[list[BatchItem]]
    seed: int
    scheme: Scheme
    aug_fraction: float
    # Intended per-batch scheme (NONE for clean batches); a batch planned for
    # augmentation keeps its scheme tag even if pairing degenerated to singles.
    batch_schemes: list[Scheme] = field(default_factory=list)

    @property
    def n_batches(self) -> int:
        return len(self.batches)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def pair_ncp(batch: list[Utterance], rng: np.random.Generator) -> list[BatchItem]:
    """Pair every utterance with a uniformly drawn neutral one from the batch.

    Neutral partners are drawn with replacement, so batches with few neutral
    items still work. A batch with no neutral items passes through unchanged
    with a warning.
    """
    neutrals = [u for u in batch if u.label.is_neutral]
    if not neutrals:
        warnings.warn("batch has no neutral utterances; N-CP passes it through unaugmented", stacklevel=2)
        return [BatchItem(u.id, u.label) for u in batch]
    items = []
    for u in batch:
        partner = neutrals[int(rng.integers(0, len(neutrals)))]
        items.append(
            BatchItem(
                utt_a=u.id,
                assigned_label=concat_label(u.label, partner.label, Scheme.N_CP),
                utt_b=partner.id,
                scheme=Scheme.N_CP,
                order_swap=bool(rng.integers(0, 2)),
                crop_seed=int(rng.integers(0, _SEED_BOUND)),
            )
        )
    return items


def pair_secp(batch: list[Utterance], rng: np.random.Generator) -> list[BatchItem]:
    """Pair every utterance with a uniformly drawn other member of its label group.

    Partners are drawn with replacement but never the utterance itself;
    singleton label groups pass through as single items.
    """
    groups: dict[str, list[int]] = {}
    for i, u in enumerate(batch):
        groups.setdefault(u.label.name, []).append(i)
    items: list[BatchItem | None] = [None] * len(batch)
    for members in groups.values():
        if len(members) < 2:
            u = batch[members[0]]
            items[members[0]] = BatchItem(u.id, u.label)
            continue
        for i in members:
            others = [m for m in members if m != i]
            partner = batch[others[int(rng.integers(0, len(others)))]]
            u = batch[i]
            items[i] = BatchItem(
                utt_a=u.id,
                assigned_label=concat_label(u.label, partner.label, Scheme.SE_CP),
                utt_b=partner.id,
                scheme=Scheme.SE_CP,
                order_swap=bool(rng.integers(0, 2)),
                crop_seed=int(rng.integers(0, _SEED_BOUND)),
            )
    return items  # type: ignore[return-value]


def plan_epoch(
    corpus: list[Utterance],
    batch_size: int = 128,
    scheme: Scheme = Scheme.NONE,
    aug_fraction: float = 0.8,
    seed: int = 0,
) -> EpochPlan:
    """Shuffle the corpus into batches and apply the augmentation quota.

    The quota is exact, not stochastic: round(aug_fraction * n_batches)
    batches are augmented, placed uniformly at random. Under N_PLUS_SE_CP the
    augmented set is split evenly between N-CP and SE-CP (odd remainder to
    N-CP).
    """
    if not corpus:
        raise ValueError("cannot plan an epoch over an empty corpus")
    if not 0.0 <= aug_fraction <= 1.0:
        raise ValueError(f"aug_fraction must be in [0, 1], got {aug_fraction}")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(corpus))
    shuffled = [corpus[i] for i in order]
    batches_utts = [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]
    n_batches = len(batches_utts)

    batch_schemes = [Scheme.NONE] * n_batches
    if scheme is not Scheme.NONE:
        n_aug = _round_half_up(aug_fraction * n_batches)
        aug_idx = rng.choice(n_batches, size=n_aug, replace=False)
        if scheme is Scheme.N_PLUS_SE_CP:
            n_ncp = (n_aug + 1) // 2
            for k, idx in enumerate(aug_idx):
                batch_schemes[idx] = Scheme.N_CP if k < n_ncp else Scheme.SE_CP
        else:
            for idx in aug_idx:
                batch_schemes[idx] = scheme

    batches = []
    for utts, batch_scheme in zip(batches_utts, batch_schemes):
        if batch_scheme is Scheme.N_CP:
            batches.append(pair_ncp(utts, rng))
        elif batch_scheme is Scheme.SE_CP:
            batches.append(pair_secp(utts, rng))
        else:
            batches.append([BatchItem(u.id, u.label) for u in utts])
    return EpochPlan(batches, seed, scheme, aug_fraction, batch_schemes)


def materialize_batch(
    items: list[BatchItem],
    features,
    crop_seconds: float = 4.0,
) -> list[tuple[FeatureMatrix, EmotionLabel]]:
    """Turn planned items into (features, label) pairs.

    Single items pass their features uncropped; concat items crop both members
    (from the item's own crop seed, so batches can be materialized in parallel
    and replayed exactly) and join them in the recorded order.
    """
    out = []
    for item in items:
        try:
            feats_a = features[item.utt_a]
        except KeyError:
            raise KeyError(f"feature store has no entry for utterance {item.utt_a!r}") from None
        if not item.is_concat:
            out.append((feats_a, item.assigned_label))
            continue
        try:
            feats_b = features[item.utt_b]
        except KeyError:
            raise KeyError(f"feature store has no entry for utterance {item.utt_b!r}") from None
        rng = np.random.default_rng(item.crop_seed)
        crop_a = random_crop(feats_a, crop_seconds, rng)
        crop_b = random_crop(feats_b, crop_seconds, rng)
        out.append((concat_features(crop_a, crop_b, item.order_swap), item.assigned_label))
    return out


# Audit/replay format: a '#' header line with the plan settings, then one
# batch per line, items as S:<id> or C:<idA>:<idB>:<scheme>:<swap>:<seed>.

def _check_id(utt_id: str) -> str:
    if ":" in utt_id or any(c.isspace() for c in utt_id):
        raise ValueError(f"utterance id {utt_id!r} cannot be serialized (contains ':' or whitespace)")
    return utt_id


def plan_to_text(plan: EpochPlan) -> str:
    lines = [f"# seed={plan.seed} scheme={plan.scheme.value} aug_fraction={plan.aug_fraction!r}"]
    for batch in plan.batches:
        tokens = []
        for item in batch:
            if item.is_concat:
                tokens.append(
                    f"C:{_check_id(item.utt_a)}:{_check_id(item.utt_b)}:{item.scheme.value}:"
                    f"{int(item.order_swap)}:{item.crop_seed}"
                )
            else:
                tokens.append(f"S:{_check_id(item.utt_a)}")
        lines.append(" ".join(tokens))
    return "\n".join(lines) + "\n"


def save_epoch_plan(plan: EpochPlan, path) -> None:
    with open(path, "w") as f:
        f.write(plan_to_text(plan))


def load_epoch_plan(path, labels: dict[str, EmotionLabel]) -> EpochPlan:
    """Rebuild a plan from its text form, re-deriving assigned labels.

    Batch scheme tags are inferred from the items, so a batch whose pairing
    degenerated to singles reloads as a clean batch; materialization is
    unaffected.
    """
    seed, scheme, aug_fraction = 0, Scheme.NONE, 0.8
    batches: list[list[BatchItem]] = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    if key == "seed":
                        seed = int(value)
                    elif key == "scheme":
                        scheme = parse_scheme(value)
                    elif key == "aug_fraction":
                        aug_fraction = float(value)
                continue
            batch = []
            for token in line.split():
                kind, _, rest = token.partition(":")
                if kind == "S":
                    batch.append(BatchItem(rest, labels[rest]))
                elif kind == "C":
                    id_a, id_b, scheme_tok, swap, crop_seed = rest.split(":")
                    item_scheme = parse_scheme(scheme_tok)
                    batch.append(
                        BatchItem(
                            utt_a=id_a,
                            assigned_label=concat_label(labels[id_a], labels[id_b], item_scheme),
                            utt_b=id_b,
                            scheme=item_scheme,
                            order_swap=bool(int(swap)),
                            crop_seed=int(crop_seed),
                        )
                    )
                else:
                    raise ValueError(f"unrecognized plan token {token!r}")
            batches.append(batch)
    batch_schemes = [
        next((item.scheme for item in batch if item.is_concat), Scheme.NONE) for batch in batches
    ]
    return EpochPlan(batches, seed, scheme, aug_fraction, batch_schemes)
