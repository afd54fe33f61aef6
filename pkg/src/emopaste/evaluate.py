"""Weighted-F1 scoring, session cross-validation planning, and run averaging."""

from dataclasses import dataclass

import numpy as np

from .copypaste import EmotionLabel


@dataclass(eq=False)
class EvalReport:
    weighted_f1: float
    per_class_f1: dict[str, float]
    confusion: np.ndarray  # rows = reference, columns = hypothesis
    class_names: list[str]
    n_items: int


@dataclass(frozen=True)
class Fold:
    train_sessions: tuple[str, ...]
    dev_session: str
    test_session: str


@dataclass(frozen=True)
class CvPlan:
    folds: tuple[Fold, ...]


def _label_name(label) -> str:
    return label.name if isinstance(label, EmotionLabel) else str(label)


def weighted_f1(refs, hyps) -> EvalReport:
    """Support-weighted mean of per-class F1 scores.

    Per class: precision = TP/(TP+FP), recall = TP/(TP+FN), F1 = 2PR/(P+R),
    each mapped to 0 when undefined. Labels may be EmotionLabel or plain
    strings; classes are ordered by sorted name.
    """
    refs = [_label_name(r) for r in refs]
    hyps = [_label_name(h) for h in hyps]
    if not refs:
        raise ValueError("cannot score an empty label list")
    if len(refs) != len(hyps):
        raise ValueError(f"length mismatch: {len(refs)} references vs {len(hyps)} hypotheses")

    class_names = sorted(set(refs) | set(hyps))
    index = {name: i for i, name in enumerate(class_names)}
    confusion = np.zeros((len(class_names), len(class_names)), dtype=np.int64)
    for r, h in zip(refs, hyps):
        confusion[index[r], index[h]] += 1

    per_class_f1 = {}
    weighted = 0.0
    n = len(refs)
    for i, name in enumerate(class_names):
        tp = confusion[i, i]
        fp = confusion[:, i].sum() - tp
        fn = confusion[i, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class_f1[name] = f1
        weighted += (tp + fn) / n * f1
    return EvalReport(float(weighted), per_class_f1, confusion, class_names, n)


def kfold_plan(sessions) -> CvPlan:
    """Rotating 5-fold plan: fold i tests session i, dev is the next session."""
    sessions = [str(s) for s in sessions]
    if len(sessions) != 5:
        raise ValueError(f"expected exactly 5 sessions, got {len(sessions)}")
    if len(set(sessions)) != 5:
        raise ValueError("session ids must be distinct")
    folds = []
    for i in range(5):
        test = sessions[i]
        dev = sessions[(i + 1) % 5]
        train = tuple(s for s in sessions if s not in (test, dev))
        folds.append(Fold(train, dev, test))
    return CvPlan(tuple(folds))


def average_runs(scores) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation of run scores."""
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("no scores to average")
    return float(scores.mean()), float(scores.std())


def format_report(report: EvalReport) -> str:
    """Human-readable text block with the metric, per-class F1s, and confusion matrix."""
    lines = [
        f"items           {report.n_items}",
        f"weighted F1     {report.weighted_f1:.4f}",
        "per-class F1:",
    ]
    for name in report.class_names:
        lines.append(f"  {name:<12} {report.per_class_f1[name]:.4f}")
    width = max(len(n) for n in report.class_names)
    header = " " * (width + 2) + " ".join(f"{n:>{width}}" for n in report.class_names)
    lines.append("confusion (rows = reference):")
    lines.append(header)
    for i, name in enumerate(report.class_names):
        row = " ".join(f"{report.confusion[i, j]:>{width}}" for j in range(len(report.class_names)))
        lines.append(f"  {name:<{width}} {row}")
    return "\n".join(lines) + "\n"


def report_to_kv(report: EvalReport) -> str:
    """Machine-readable form: one metric<TAB>value line per metric."""
    # values may arrive as numpy scalars; cast so the file stays parseable
    lines = [f"weighted_f1\t{float(report.weighted_f1)!r}", f"n_items\t{report.n_items}"]
    for name in report.class_names:
        lines.append(f"f1_{name}\t{float(report.per_class_f1[name])!r}")
    return "\n".join(lines) + "\n"
