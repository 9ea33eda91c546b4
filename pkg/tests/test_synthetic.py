import numpy as np
import pytest

from fevpr.dataset import TraverseConfig, load_traverse, pairwise_planar_distances
from fevpr.synthetic import (
    SyntheticWorldConfig,
    events_from_frame_difference,
    generate_traverse,
    generate_world,
    place_positions,
    place_texture,
)


class TestEventsFromFrameDifference:
    def test_polarity_signs(self):
        before = np.zeros((4, 4), dtype=np.float32)
        after = np.zeros((4, 4), dtype=np.float32)
        after[1, 2] = 0.5
        after[3, 0] = -0.5
        xs, ys, ps = events_from_frame_difference(before, after, threshold=0.1)
        got = {(x, y): p for x, y, p in zip(xs, ys, ps)}
        assert got == {(2, 1): 1, (0, 3): -1}

    def test_threshold_suppresses_small_changes(self):
        before = np.zeros((3, 3), dtype=np.float32)
        after = np.full((3, 3), 0.05, dtype=np.float32)
        xs, _, _ = events_from_frame_difference(before, after, threshold=0.1)
        assert len(xs) == 0


class TestWorldGeometry:
    def test_place_spacing(self):
        config = SyntheticWorldConfig(places=32, spacing_m=100.0)
        pos = place_positions(config)
        gaps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        np.testing.assert_allclose(gaps, 100.0, rtol=0.01)

    def test_textures_are_distinct(self):
        config = SyntheticWorldConfig(places=8, image_size=32)
        textures = [place_texture(config, i) for i in range(8)]
        for i in range(8):
            for j in range(i + 1, 8):
                assert np.abs(textures[i] - textures[j]).mean() > 0.05


class TestGeneratedTraverses:
    def test_loadable_and_jitter_bounded(self, tiny_world_dir):
        tc = TraverseConfig(window_us=25_000)
        database = load_traverse(tiny_world_dir / "database", tc)
        query = load_traverse(tiny_world_dir / "query", tc)
        assert len(database) == len(query) == 8
        config = SyntheticWorldConfig(places=8, image_size=32, seed=11)
        truth = place_positions(config)
        for traverse in (database, query):
            offsets = np.linalg.norm(traverse.positions - truth, axis=1)
            assert offsets.max() < 5.0

    def test_same_place_pairs_are_mining_positives(self, tiny_world_dir):
        tc = TraverseConfig(window_us=25_000)
        database = load_traverse(tiny_world_dir / "database", tc)
        query = load_traverse(tiny_world_dir / "query", tc)
        geo = pairwise_planar_distances(query.positions, database.positions)
        same = np.diag(geo)
        assert same.max() < 25.0  # within the positive threshold
        off = geo + np.eye(len(query)) * 1e9
        assert off.min() > 75.0  # everything else beyond the negative threshold

    def test_events_present_and_within_windows(self, tiny_world_dir):
        traverse = load_traverse(tiny_world_dir / "database",
                                 TraverseConfig(window_us=25_000))
        lengths = [len(s.event_volume) for s in traverse.samples]
        assert all(n > 10 for n in lengths)

    def test_glare_corruption_saturates_frames(self, tmp_path):
        config = SyntheticWorldConfig(places=3, image_size=32, seed=5)
        generate_traverse(tmp_path, config, "glare", 99, frame_corruption="glare")
        traverse = load_traverse(tmp_path / "glare")
        for s in traverse.samples:
            assert s.frame.min() > 0.95  # essentially constant white
            assert len(s.event_volume) > 0  # events stay clean

    def test_drop_events_variant(self, tmp_path):
        config = SyntheticWorldConfig(places=3, image_size=32, seed=5)
        generate_traverse(tmp_path, config, "noev", 99, drop_events=True)
        traverse = load_traverse(tmp_path / "noev")
        assert all(len(s.event_volume) == 0 for s in traverse.samples)
        assert all(s.frame.std() > 0.01 for s in traverse.samples)

    def test_corrupted_variants_share_geometry(self, tmp_path):
        config = SyntheticWorldConfig(places=4, image_size=32, seed=3)
        paths = generate_world(tmp_path, config, corrupted_splits=True)
        clean = load_traverse(paths["query"])
        glare = load_traverse(paths["query_glare"])
        noev = load_traverse(paths["query_noevents"])
        np.testing.assert_array_equal(clean.positions, glare.positions)
        np.testing.assert_array_equal(clean.positions, noev.positions)

    def test_unknown_corruption_rejected(self, tmp_path):
        config = SyntheticWorldConfig(places=2, image_size=32)
        with pytest.raises(ValueError, match="corruption"):
            generate_traverse(tmp_path, config, "x", 1, frame_corruption="fog")
