import json
import struct

import numpy as np
import pytest

from tokadapt import ArchiveWriter, TensorArchive, iter_dataset, write_dataset
from tokadapt.archive import ALIGN, MAGIC, validate_blob, validate_file
from tokadapt.errors import ArchiveError


def _write_toy(path):
    w = ArchiveWriter()
    w.add_f32("a/matrix", np.arange(12, dtype=np.float32).reshape(3, 4))
    w.add_f32("a/vector", np.array([1.5, -2.5], np.float32))
    w.add_i64("meta/count", 7)
    w.add_utf8("names", ["cat", "dog", "plane"])
    w.write(path)
    return path


def test_round_trip_bitwise(tmp_path):
    path = _write_toy(tmp_path / "toy.tca")
    ar = TensorArchive(path)
    m = ar.read_f32("a/matrix")
    assert m.shape == (3, 4)
    assert m.tobytes() == np.arange(12, dtype="<f4").tobytes()
    assert ar.read_scalar("meta/count") == 7
    assert ar.read_utf8("names") == ["cat", "dog", "plane"]


def test_offsets_aligned_and_nonoverlapping(tmp_path):
    path = _write_toy(tmp_path / "toy.tca")
    assert validate_file(path) == []
    ar = TensorArchive(path)
    spans = sorted((e["offset"], e["offset"] + e["length"])
                   for e in ar.manifest.values())
    for (s, _) in spans:
        assert s % ALIGN == 0
    for (_, e0), (s1, _) in zip(spans, spans[1:]):
        assert s1 >= e0


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.tca"
    path.write_bytes(b"NOPE" + b"\0" * 32)
    problems = validate_file(path)
    assert problems and "bad magic" in problems[0]
    with pytest.raises(ArchiveError):
        TensorArchive(path)


def test_truncated_payload_reports_overrun(tmp_path):
    path = _write_toy(tmp_path / "toy.tca")
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    problems = validate_file(path)
    assert any("payload overrun" in p for p in problems)


def test_overlapping_entries_detected():
    manifest = {
        "x": {"dtype": "f32", "shape": [16], "offset": 128, "length": 64},
        "y": {"dtype": "f32", "shape": [16], "offset": 128, "length": 64},
    }
    blob = json.dumps(manifest).encode()
    data = MAGIC + struct.pack("<Q", len(blob)) + blob
    data += b"\0" * (192 - len(data) + 64)
    problems = validate_blob(data)
    assert any("overlap" in p for p in problems)


def test_length_shape_mismatch_detected():
    manifest = {"x": {"dtype": "f32", "shape": [3], "offset": 128, "length": 16}}
    blob = json.dumps(manifest).encode()
    data = MAGIC + struct.pack("<Q", len(blob)) + blob
    data += b"\0" * (128 + 16 - len(data))
    problems = validate_blob(data)
    assert any("!=" in p for p in problems)


def test_duplicate_entry_rejected():
    w = ArchiveWriter()
    w.add_i64("x", 1)
    with pytest.raises(ArchiveError):
        w.add_i64("x", 2)


def test_classname_newline_rejected():
    w = ArchiveWriter()
    with pytest.raises(ArchiveError):
        w.add_utf8("names", ["ok", "bad\nname"])


def test_missing_entry_message(tmp_path):
    ar = TensorArchive(_write_toy(tmp_path / "toy.tca"))
    with pytest.raises(ArchiveError, match="missing entry"):
        ar.read_f32("nope")
    with pytest.raises(ArchiveError, match="dtype"):
        ar.read_f32("meta/count")


def test_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pixels = [rng.normal(size=(3, 8, 8)).astype(np.float32) for _ in range(4)]
    path = tmp_path / "data.tca"
    write_dataset(path, pixels, labels=[0, 1, -1, 2])
    got = list(iter_dataset(TensorArchive(path)))
    assert len(got) == 4
    for (px, label), orig, want in zip(got, pixels, [0, 1, None, 2]):
        assert np.array_equal(px, orig)
        assert label == want


def test_unlabeled_dataset(tmp_path):
    pixels = [np.zeros((3, 8, 8), np.float32)]
    path = tmp_path / "data.tca"
    write_dataset(path, pixels)
    (_, label), = iter_dataset(TensorArchive(path))
    assert label is None
