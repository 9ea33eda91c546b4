import numpy as np
import pytest

from fevpr.descriptors import DescriptorIOError, load_descriptors, save_descriptors


def test_round_trip_and_manifest(tmp_path, rng):
    desc = rng.random((7, 12)).astype(np.float32)
    path = tmp_path / "db.f32"
    save_descriptors(path, desc, source_traverse="database", checkpoint_id="best")
    loaded, manifest = load_descriptors(path)
    np.testing.assert_array_equal(loaded, desc)
    assert manifest["count"] == 7
    assert manifest["dimension"] == 12
    assert manifest["source_traverse"] == "database"
    assert manifest["checkpoint_id"] == "best"


def test_little_endian_row_major_layout(tmp_path):
    desc = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "x.f32"
    save_descriptors(path, desc)
    raw = path.read_bytes()
    assert np.frombuffer(raw, dtype="<f4").tolist() == [0, 1, 2, 3, 4, 5]


def test_missing_manifest(tmp_path):
    path = tmp_path / "y.f32"
    np.zeros(4, dtype="<f4").tofile(path)
    with pytest.raises(DescriptorIOError, match="manifest"):
        load_descriptors(path)


def test_size_mismatch_detected(tmp_path, rng):
    desc = rng.random((3, 4)).astype(np.float32)
    path = tmp_path / "z.f32"
    save_descriptors(path, desc)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DescriptorIOError, match="manifest says"):
        load_descriptors(path)


def test_non_2d_rejected(tmp_path):
    with pytest.raises(DescriptorIOError, match="2-D"):
        save_descriptors(tmp_path / "w.f32", np.zeros(5, dtype=np.float32))
