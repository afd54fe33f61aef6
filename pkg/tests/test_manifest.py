"""Manifest round-trips and malformed-input handling."""

import os

import pytest

from emopaste.audio import Waveform
from emopaste.copypaste import EmotionLabel, Utterance
from emopaste.manifest import read_manifest, write_manifest

NEU = EmotionLabel("neutral", is_neutral=True)
ANG = EmotionLabel("angry")


def sample_utts(base):
    return [
        Utterance(id="u1", speaker_id="s1", label=NEU, split="train", audio_ref=os.path.join(base, "u1.wav")),
        Utterance(id="u2", speaker_id="s2", label=ANG, split="dev", audio_ref=os.path.join(base, "u2.wav")),
        Utterance(id="u3", speaker_id="s3", label=ANG, split="test", audio_ref=os.path.join(base, "u3.wav")),
    ]


class TestRoundTrip:
    def test_fields_survive(self, tmp_path):
        path = tmp_path / "c.tsv"
        original = sample_utts(str(tmp_path))
        write_manifest(original, path)
        utts, labels = read_manifest(path)
        assert [(u.id, u.speaker_id, u.label.name, u.split, u.audio_ref) for u in utts] == [
            (u.id, u.speaker_id, u.label.name, u.split, u.audio_ref) for u in original
        ]
        assert [(lab.name, lab.is_neutral) for lab in labels] == [("angry", False), ("neutral", True)]

    def test_empty_list_writes_empty_file(self, tmp_path):
        path = tmp_path / "c.tsv"
        write_manifest([], path)
        assert path.read_text() == ""


class TestReadManifest:
    def test_relative_paths_resolve_against_manifest_dir(self, tmp_path):
        sub = tmp_path / "deep"
        sub.mkdir()
        path = sub / "c.tsv"
        path.write_text("u1\twav/u1.wav\ts1\tneutral\ttrain\n")
        utts, _ = read_manifest(path)
        assert utts[0].audio_ref == os.path.join(str(sub), "wav", "u1.wav")

    def test_absolute_paths_kept(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("u1\t/data/u1.wav\ts1\tneutral\ttrain\n")
        utts, _ = read_manifest(path)
        assert utts[0].audio_ref == "/data/u1.wav"

    def test_blank_and_comment_lines_skipped(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("# header comment\n\nu1\tu1.wav\ts1\tneutral\ttrain\n\n# trailing\n")
        utts, _ = read_manifest(path)
        assert len(utts) == 1

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("u1\tu1.wav\ts1\tneutral\n")
        with pytest.raises(ValueError, match="5 tab-separated"):
            read_manifest(path)

    def test_unknown_split(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("u1\tu1.wav\ts1\tneutral\teval\n")
        with pytest.raises(ValueError, match="unknown split"):
            read_manifest(path)

    def test_empty_id(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("\tu1.wav\ts1\tneutral\ttrain\n")
        with pytest.raises(ValueError, match="empty utterance id"):
            read_manifest(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("u1\ta.wav\ts1\tneutral\ttrain\nu1\tb.wav\ts2\tangry\tdev\n")
        with pytest.raises(ValueError, match="duplicate"):
            read_manifest(path)

    def test_requires_a_neutral_label(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("u1\tu1.wav\ts1\tangry\ttrain\n")
        with pytest.raises(ValueError):
            read_manifest(path)

    def test_custom_neutral_name(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("u1\tu1.wav\ts1\tcalm\ttrain\n")
        utts, labels = read_manifest(path, neutral_name="calm")
        assert labels[0].is_neutral
        assert utts[0].label.name == "calm"

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_manifest(tmp_path / "absent.tsv")


class TestWriteManifest:
    def test_rejects_in_memory_audio(self, tmp_path):
        wave = Waveform(samples=[0.1, 0.2], sample_rate_hz=16000)
        utt = Utterance(id="u1", speaker_id="s1", label=NEU, split="train", audio_ref=wave)
        with pytest.raises(ValueError, match="in-memory"):
            write_manifest([utt], tmp_path / "c.tsv")

    @pytest.mark.parametrize("bad", ["u\t1", "u\n1"])
    def test_rejects_control_characters_in_id(self, tmp_path, bad):
        utt = Utterance(id=bad, speaker_id="s1", label=NEU, split="train", audio_ref="a.wav")
        with pytest.raises(ValueError, match="tab or newline"):
            write_manifest([utt], tmp_path / "c.tsv")

    def test_rejects_tab_in_speaker(self, tmp_path):
        utt = Utterance(id="u1", speaker_id="s\t1", label=NEU, split="train", audio_ref="a.wav")
        with pytest.raises(ValueError, match="tab or newline"):
            write_manifest([utt], tmp_path / "c.tsv")
