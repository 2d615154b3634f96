import csv

import numpy as np
import pytest
from PIL import Image

from fusionbench.data import (
    HashTokenizer,
    Label,
    RawClip,
    load_corpus,
    middle_frame,
    preprocess_clip,
    preprocess_corpus,
)
from fusionbench.errors import ValidationError


def _write_clip(root, clip_id, n_frames, transcript, score, size=8):
    frames_dir = root / "clips" / clip_id
    frames_dir.mkdir(parents=True)
    rng = np.random.default_rng(hash(clip_id) % 2**32)
    for i in range(n_frames):
        arr = rng.integers(0, 255, size=(size, size, 3), dtype=np.uint8)
        Image.fromarray(arr).save(frames_dir / f"frame_{i:03d}.png")
    (root / "transcripts").mkdir(exist_ok=True)
    (root / "transcripts" / f"{clip_id}.txt").write_text(transcript)
    return clip_id, score


def _write_corpus(root, clips):
    with open(root / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "score"])
        writer.writerows(clips)


def test_corpus_roundtrip(tmp_path):
    clips = [
        _write_clip(tmp_path, "clip_a", 5, "i loved this movie", 2.5),
        _write_clip(tmp_path, "clip_b", 4, "what a waste of time", -1.75),
        _write_clip(tmp_path, "clip_c", 1, "it was fine i guess", 0.0),
    ]
    _write_corpus(tmp_path, clips)
    raw = load_corpus(tmp_path)
    assert sorted(c.clip_id for c in raw) == ["clip_a", "clip_b", "clip_c"]
    tokenizer = HashTokenizer(vocab_size=500, max_seq_len=16)
    data = preprocess_corpus(raw, tokenizer, resolution=16)
    assert len(data) == 3
    by_id = {data[i].clip_id: data[i] for i in range(3)}
    assert by_id["clip_a"].label is Label.NON_NEGATIVE
    assert by_id["clip_b"].label is Label.NEGATIVE
    assert by_id["clip_c"].label is Label.NON_NEGATIVE
    assert by_id["clip_a"].image.shape == (3, 16, 16)
    assert by_id["clip_a"].image.dtype == np.float32


def test_corpus_middle_frame_selected(tmp_path):
    # frames are distinguishable: frame i is a constant image of value i
    frames_dir = tmp_path / "clips" / "c1"
    frames_dir.mkdir(parents=True)
    for i in range(5):
        arr = np.full((4, 4, 3), i * 50, dtype=np.uint8)
        Image.fromarray(arr).save(frames_dir / f"frame_{i}.png")
    (tmp_path / "transcripts").mkdir()
    (tmp_path / "transcripts" / "c1.txt").write_text("hello world")
    _write_corpus(tmp_path, [("c1", 1.0)])
    clip = load_corpus(tmp_path)[0]
    sample = preprocess_clip(clip, HashTokenizer(100, 8), resolution=4,
                             mean=(0, 0, 0), std=(1, 1, 1))
    # middle of 5 frames is index 2 -> constant value 100/255
    assert np.allclose(sample.image, 100 / 255, atol=1e-6)


def test_corpus_malformed_entries_reported_per_clip(tmp_path):
    _write_clip(tmp_path, "good", 2, "fine", 1.0)
    (tmp_path / "transcripts" / "no_frames.txt").write_text("orphan")
    _write_corpus(tmp_path, [("good", 1.0), ("no_frames", 0.5), ("missing", -1.0)])
    with pytest.raises(ValidationError) as exc:
        load_corpus(tmp_path)
    message = str(exc.value)
    assert "no_frames" in message and "missing" in message


def test_corpus_out_of_range_score(tmp_path):
    _write_clip(tmp_path, "c1", 1, "ok", 0.0)
    _write_corpus(tmp_path, [("c1", 4.5)])
    with pytest.raises(ValidationError):
        load_corpus(tmp_path)


def test_corpus_full_scale_label_count(tmp_path):
    """A corpus-format directory with 2199 label rows yields 2199 samples."""
    rng = np.random.default_rng(0)
    (tmp_path / "transcripts").mkdir()
    rows = []
    arr = np.zeros((2, 2, 3), dtype=np.uint8)
    for i in range(2199):
        clip_id = f"clip{i:04d}"
        frames_dir = tmp_path / "clips" / clip_id
        frames_dir.mkdir(parents=True)
        Image.fromarray(arr).save(frames_dir / "frame_0.png")
        (tmp_path / "transcripts" / f"{clip_id}.txt").write_text(f"utterance {i}")
        rows.append((clip_id, float(rng.uniform(-3, 3))))
    _write_corpus(tmp_path, rows)
    raw = load_corpus(tmp_path)
    assert len(raw) == 2199
    data = preprocess_corpus(raw, HashTokenizer(200, 8), resolution=4)
    assert len(data) == 2199
