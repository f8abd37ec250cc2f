"""
Dataset store: image directories, synthetic data and scene files
Run: pytest tests/test_data_store.py -v
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from locality_inr import coords as coords_lib
from locality_inr import data_store
from locality_inr.data_store import DataInstance, DatasetConfig, SceneSpec
from locality_inr.errors import ConfigError, DatasetError, DimensionError, FormatError


def _write_pngs(directory, count, size=(8, 8), seed=0):
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        data_store.save_png(os.path.join(directory, f"img_{i}.png"), rng.uniform(size=size + (3,)))


# ─────────────────────────────────────────────────────────────────────────────
# DATA INSTANCE
# ─────────────────────────────────────────────────────────────────────────────

class TestDataInstance:

    def test_image_instance_layout(self):
        inst = DataInstance('a', np.zeros((4, 6, 3)))
        assert inst.kind == 'image'
        assert inst.grid_shape == (4, 6)
        assert inst.d_in == 2
        assert inst.coordinates().shape == (24, 2)
        assert inst.targets().shape == (24, 3)
        assert inst.encoder_views().shape == (1, 4, 6, 3)

    def test_grayscale_gets_channel_axis(self):
        assert DataInstance('g', np.zeros((5, 5))).images.shape == (1, 5, 5, 1)

    def test_targets_follow_coordinate_order(self):
        image = np.arange(6, dtype=np.float64).reshape(2, 3, 1) / 10
        inst = DataInstance('o', image)
        # row-major: second coordinate is (row 0, col 1)
        np.testing.assert_allclose(inst.coordinates()[1], [-0.5, 0.0])
        assert inst.targets()[1, 0] == pytest.approx(0.1)

    def test_posed_views_need_intrinsics(self):
        with pytest.raises(DatasetError, match="intrinsics"):
            DataInstance('p', np.zeros((2, 4, 4, 3)), poses=np.stack([np.eye(4), np.eye(4)]))

    def test_pose_count_must_match_views(self):
        intrinsics = coords_lib.CameraIntrinsics.from_fov(40.0, 4, 4)
        with pytest.raises(DimensionError):
            DataInstance('p', np.zeros((2, 4, 4, 3)), poses=np.eye(4)[None], intrinsics=intrinsics)

    def test_bad_support_views(self):
        intrinsics = coords_lib.CameraIntrinsics.from_fov(40.0, 4, 4)
        poses = np.stack([np.eye(4), np.eye(4)])
        with pytest.raises(DatasetError, match="support"):
            DataInstance('p', np.zeros((2, 4, 4, 3)), poses=poses, intrinsics=intrinsics, support_views=(0, 5))

    def test_empty_image_rejected(self):
        with pytest.raises(DimensionError):
            DataInstance('e', np.zeros((0, 4, 3)))


# ─────────────────────────────────────────────────────────────────────────────
# IMAGE DIRECTORIES
# ─────────────────────────────────────────────────────────────────────────────

class TestImageDirectory:

    def test_loads_sorted_pngs(self, tmp_path):
        _write_pngs(str(tmp_path), 3)
        instances = data_store.load_image_dir(str(tmp_path))
        assert [inst.instance_id for inst in instances] == ['img_0', 'img_1', 'img_2']
        assert instances[0].images.shape == (1, 8, 8, 3)
        assert 0.0 <= instances[0].images.min() and instances[0].images.max() <= 1.0

    def test_png_quantization_round_trip(self, tmp_path):
        image = np.random.default_rng(3).uniform(size=(5, 7, 3))
        path = str(tmp_path / 'x.png')
        data_store.save_png(path, image)
        np.testing.assert_allclose(data_store.load_png(path), image, atol=0.5 / 255 + 1e-12)

    def test_class_subdirectories_become_labels(self, tmp_path):
        _write_pngs(str(tmp_path / 'cats'), 2)
        _write_pngs(str(tmp_path / 'dogs'), 1, seed=1)
        instances = data_store.load_image_dir(str(tmp_path))
        assert [inst.label for inst in instances] == ['cats', 'cats', 'dogs']

    def test_max_instances(self, tmp_path):
        _write_pngs(str(tmp_path), 4)
        assert len(data_store.load_image_dir(str(tmp_path), max_instances=2)) == 2

    def test_parallel_decode_matches_serial(self, tmp_path):
        _write_pngs(str(tmp_path), 4)
        serial = data_store.load_image_dir(str(tmp_path), n_jobs=1)
        parallel = data_store.load_image_dir(str(tmp_path), n_jobs=2)
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.images, b.images)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(DatasetError, match="no PNG"):
            data_store.load_image_dir(str(tmp_path))

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError):
            data_store.load_image_dir(str(tmp_path / 'nope'))

    def test_unreadable_file_is_named(self, tmp_path):
        _write_pngs(str(tmp_path), 1)
        (tmp_path / 'broken.png').write_bytes(b'not a png')
        with pytest.raises(DatasetError, match="broken.png"):
            data_store.load_image_dir(str(tmp_path))

    def test_mixed_sizes_rejected(self, tmp_path):
        _write_pngs(str(tmp_path), 1)
        data_store.save_png(str(tmp_path / 'z.png'), np.zeros((4, 4, 3)))
        with pytest.raises(DatasetError, match="differ in size"):
            data_store.load_image_dir(str(tmp_path))


# ─────────────────────────────────────────────────────────────────────────────
# SYNTHETIC DATA
# ─────────────────────────────────────────────────────────────────────────────

class TestSyntheticImages:

    def test_deterministic_per_seed(self):
        a = data_store.make_synthetic_images(3, 16, 16, seed=4)
        b = data_store.make_synthetic_images(3, 16, 16, seed=4)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.images, y.images)

    def test_seed_changes_content(self):
        a = data_store.make_synthetic_images(1, 16, 16, seed=0)[0]
        b = data_store.make_synthetic_images(1, 16, 16, seed=1)[0]
        assert not np.allclose(a.images, b.images)

    def test_prefix_stable_under_count(self):
        few = data_store.make_synthetic_images(2, 16, 16, seed=0)
        many = data_store.make_synthetic_images(5, 16, 16, seed=0)
        np.testing.assert_array_equal(few[1].images, many[1].images)

    def test_unit_range(self):
        inst = data_store.make_synthetic_images(1, 32, 32)[0]
        assert inst.images.min() >= 0.0 and inst.images.max() <= 1.0
        assert inst.images.std() > 0.01


class TestSyntheticScenes:

    def setup_method(self):
        self.spec = SceneSpec(height=16, width=16)

    def test_ring_poses_are_rotations_looking_at_origin(self):
        poses = data_store.camera_ring(self.spec)
        assert poses.shape == (8, 4, 4)
        for pose in poses:
            rot = pose[:3, :3]
            np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-12)
            assert np.linalg.det(rot) == pytest.approx(1.0)
            eye = pose[:3, 3]
            assert np.linalg.norm(eye) == pytest.approx(3.0)
            np.testing.assert_allclose(pose[:3, 2], -eye / np.linalg.norm(eye), atol=1e-12)

    def test_render_hits_object_in_center_only(self):
        image = data_store.render_view(self.spec, data_store.camera_ring(self.spec)[0])
        assert image.shape == (16, 16, 3)
        np.testing.assert_allclose(image[0, 0], [0.1, 0.1, 0.1])
        np.testing.assert_allclose(image[-1, -1], [0.1, 0.1, 0.1])
        assert not np.allclose(image[8, 8], [0.1, 0.1, 0.1])

    def test_cube_renders(self):
        spec = SceneSpec(shape='cube', height=16, width=16)
        image = data_store.render_view(spec, data_store.camera_ring(spec)[2])
        assert np.all(np.isfinite(image))
        assert (np.abs(image - 0.1) > 1e-9).any()

    def test_orbit_pose(self):
        pose = data_store.camera_ring(self.spec)[0]
        np.testing.assert_allclose(data_store.orbit_pose(pose, 0.0), pose, atol=1e-12)
        moved = data_store.orbit_pose(pose, 10.0)
        assert np.linalg.norm(moved[:3, 3]) == pytest.approx(3.0)
        coords_lib.validate_pose(moved)
        assert not np.allclose(moved, pose)

    def test_ring_step_equals_orbit(self):
        spec = SceneSpec(num_views=4, elevation_deg=0.0)
        poses = data_store.camera_ring(spec)
        np.testing.assert_allclose(data_store.orbit_pose(poses[0], 90.0), poses[1], atol=1e-9)

    def test_scene_instances(self):
        config = DatasetConfig(num_instances=2, height=8, width=8, num_views=4)
        scenes = data_store.load_synthetic_scene(config)
        assert [s.instance_id for s in scenes] == ['scene_0000', 'scene_0001']
        scene = scenes[0]
        assert scene.kind == 'lightfield'
        assert scene.d_in == 6
        assert scene.grid_shape == (4, 8, 8)
        assert scene.coordinates().shape == (4 * 64, 6)
        assert scene.targets().shape == (4 * 64, 3)
        assert scene.encoder_views().shape == (4, 8, 8, 9)

    def test_support_subset(self):
        config = DatasetConfig(num_instances=1, height=8, width=8, num_views=4)
        scene = data_store.load_synthetic_scene(config)[0].with_support((0, 2))
        assert scene.grid_shape == (2, 8, 8)
        np.testing.assert_array_equal(scene.targets()[64:], scene.images[2].reshape(-1, 3))
        np.testing.assert_allclose(scene.coordinates()[64:], scene.view_rays(2))

    def test_split_encodes_support_and_decodes_query(self):
        config = DatasetConfig(num_instances=1, height=8, width=8, num_views=4)
        scene = data_store.load_synthetic_scene(config)[0].with_split((1,), (0, 3))
        assert scene.encoder_views().shape == (1, 8, 8, 9)
        assert scene.grid_shape == (2, 8, 8)
        np.testing.assert_array_equal(scene.targets()[:64], scene.images[0].reshape(-1, 3))
        np.testing.assert_allclose(scene.coordinates()[64:], scene.view_rays(3))
        # a later with_support drops the query set again
        assert scene.with_support((0, 2)).query == (0, 2)

    def test_bad_query_views(self):
        scene = data_store.load_synthetic_scene(DatasetConfig(num_instances=1, height=4, width=4, num_views=2))[0]
        with pytest.raises(DatasetError, match="query"):
            scene.with_split((0,), (2,))

    def test_mixed_shapes_alternate(self):
        config = DatasetConfig(shape='mixed')
        assert SceneSpec.from_dataset_config(config, 0).shape == 'sphere'
        assert SceneSpec.from_dataset_config(config, 1).shape == 'cube'


# ─────────────────────────────────────────────────────────────────────────────
# SCENE FILES & DISPATCH
# ─────────────────────────────────────────────────────────────────────────────

class TestSceneFiles:

    def setup_method(self):
        config = DatasetConfig(num_instances=2, height=8, width=8, num_views=3)
        self.scenes = data_store.load_synthetic_scene(config)

    def test_round_trip(self, tmp_path):
        path = str(tmp_path / 'scenes.npz')
        data_store.save_scene(path, [self.scenes[0].with_support((1, 2)), self.scenes[1]])
        loaded = data_store.load_scene_file(path)
        assert [s.instance_id for s in loaded] == ['scene_0000', 'scene_0001']
        np.testing.assert_array_equal(loaded[0].images, self.scenes[0].images)
        np.testing.assert_allclose(loaded[0].poses, self.scenes[0].poses)
        assert loaded[0].support == (1, 2)
        assert loaded[1].intrinsics == self.scenes[1].intrinsics

    def test_newer_format_rejected(self, tmp_path):
        path = str(tmp_path / 'future.npz')
        np.savez(path, format_version=np.array(99), ids=np.array(['a']))
        with pytest.raises(FormatError, match="newer"):
            data_store.load_scene_file(path)

    def test_images_cannot_go_in_scene_files(self, tmp_path):
        with pytest.raises(DatasetError):
            data_store.save_scene(str(tmp_path / 'x.npz'), [DataInstance('a', np.zeros((4, 4, 3)))])

    def test_missing_scene_file(self, tmp_path):
        with pytest.raises(DatasetError):
            data_store.load_scene_file(str(tmp_path / 'none.npz'))


class TestLoadDataset:

    def test_synthetic_images(self):
        instances = data_store.load_dataset('synthetic', 'image', DatasetConfig(num_instances=3, height=8, width=8))
        assert len(instances) == 3
        assert instances[0].height == 8

    def test_missing_path_names_field(self):
        with pytest.raises(ConfigError) as excinfo:
            data_store.load_dataset('', 'image')
        assert excinfo.value.field == 'dataset_path'

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            data_store.load_dataset('synthetic', 'audio')

    def test_invalid_dataset_config(self):
        with pytest.raises(ConfigError, match="dataset.shape"):
            data_store.load_dataset('synthetic', 'lightfield', DatasetConfig(shape='torus'))

    def test_directory_dispatch(self, tmp_path):
        _write_pngs(str(tmp_path), 2)
        assert len(data_store.load_dataset(str(tmp_path), 'image')) == 2
