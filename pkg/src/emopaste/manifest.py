"""Tab-separated corpus manifests: id, audio path, speaker, label, split."""

import os

from .copypaste import EmotionLabel, Utterance, make_label_set

VALID_SPLITS = ("train", "dev", "test")


def read_manifest(path, neutral_name: str = "neutral"):
    """Load utterances and the label set from a manifest file.

    Each line is id<TAB>path<TAB>speaker<TAB>label<TAB>split. Relative audio
    paths are resolved against the manifest's directory. Returns
    (utterances, labels) with labels sorted by name.
    """
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
            utt_id, audio_path, speaker, label, split = parts
            if not utt_id:
                raise ValueError(f"{path}:{lineno}: empty utterance id")
            if split not in VALID_SPLITS:
                raise ValueError(f"{path}:{lineno}: unknown split {split!r}")
            if not os.path.isabs(audio_path):
                audio_path = os.path.join(base, audio_path)
            rows.append((utt_id, audio_path, speaker, label, split))

    ids = [r[0] for r in rows]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValueError(f"{path}: duplicate utterance id {dup!r}")

    names = sorted({r[3] for r in rows})
    labels = make_label_set(names, neutral_name=neutral_name)
    by_name = {lab.name: lab for lab in labels}
    utts = [
        Utterance(id=utt_id, speaker_id=speaker, label=by_name[label], split=split, audio_ref=audio_path)
        for utt_id, audio_path, speaker, label, split in rows
    ]
    return utts, labels


def write_manifest(utterances, path) -> None:
    """Write utterances in manifest format. Waveform-backed entries are rejected."""
    lines = []
    for utt in utterances:
        if not isinstance(utt.audio_ref, str):
            raise ValueError(f"utterance {utt.id!r} has in-memory audio, not a file path")
        for field_name, value in (("id", utt.id), ("speaker", utt.speaker_id), ("label", utt.label.name)):
            if "\t" in value or "\n" in value:
                raise ValueError(f"utterance {utt.id!r}: {field_name} contains tab or newline")
        lines.append(f"{utt.id}\t{utt.audio_ref}\t{utt.speaker_id}\t{utt.label.name}\t{utt.split}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
