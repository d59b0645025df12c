"""File formats (bit-exact round trips), the scene generator, and run
configuration parsing."""
import numpy as np
import pytest

from siesef.dataio import (BOUNDARY_HALF_WIDTH, SCENE_CLASSES, KittiScan,
                           PlyCloud, SceneSpec, boundary_strip_count,
                           generate_scene, kitti_to_point_cloud, load_remap,
                           load_run_config, read_kitti_bin, read_kitti_label,
                           read_ply, resolve_data_path, write_kitti_bin,
                           write_kitti_label, write_ply)
from siesef.errors import ConfigError, FormatError

RNG = np.random.default_rng(0)


class TestKittiBin:
    def test_roundtrip_bit_identical(self):
        points = RNG.normal(size=(1000, 4)).astype(np.float32)
        data = write_kitti_bin(KittiScan(points))
        back = read_kitti_bin(data)
        assert np.array_equal(back.points, points)
        assert write_kitti_bin(back) == data

    def test_truncated_rejected(self):
        data = write_kitti_bin(KittiScan(np.zeros((3, 4), dtype=np.float32)))
        with pytest.raises(FormatError, match="multiple of 16"):
            read_kitti_bin(data[:-7])

    def test_to_point_cloud_splits_remission(self):
        points = RNG.normal(size=(5, 4)).astype(np.float32)
        cloud = kitti_to_point_cloud(KittiScan(points))
        assert np.array_equal(cloud.positions, points[:, :3])
        assert np.array_equal(cloud.intensity, points[:, 3])


class TestKittiLabel:
    def test_roundtrip_packs_semantic_and_instance(self):
        semantic = RNG.integers(0, 260, size=1000).astype(np.uint16)
        instance = RNG.integers(0, 1000, size=1000).astype(np.uint16)
        data = write_kitti_label(semantic, instance)
        sem_back, inst_back = read_kitti_label(data)
        assert np.array_equal(sem_back, semantic)
        assert np.array_equal(inst_back, instance)
        assert write_kitti_label(sem_back, inst_back) == data

    def test_truncated_rejected(self):
        with pytest.raises(FormatError, match="multiple of 4"):
            read_kitti_label(b"\x00" * 7)

    def test_remap_sends_unmapped_to_ignore(self):
        data = write_kitti_label(np.array([10, 44, 999], dtype=np.uint16))
        labels, _ = read_kitti_label(data, remap={10: 0, 44: 1})
        assert np.array_equal(labels, [0, 1, 255])

    def test_packaged_remap_is_19_classes(self):
        remap = load_remap()
        train_ids = set(remap.values())
        assert train_ids == set(range(19))
        assert remap[10] == 0  # car
        assert remap[40] == 8  # road


class TestPly:
    def test_binary_roundtrip_bit_identical(self):
        positions = RNG.normal(size=(1000, 3)).astype(np.float32)
        labels = RNG.integers(0, 9, size=1000)
        data = write_ply(PlyCloud(positions, labels), binary=True)
        back = read_ply(data)
        assert np.array_equal(back.positions, positions)
        assert np.array_equal(back.labels, labels)
        assert write_ply(back, binary=True) == data

    def test_ascii_roundtrip(self):
        positions = RNG.normal(size=(50, 3)).astype(np.float32)
        labels = RNG.integers(0, 4, size=50)
        back = read_ply(write_ply(PlyCloud(positions, labels), binary=False))
        assert np.array_equal(back.positions, positions)
        assert np.array_equal(back.labels, labels)

    def test_no_labels_roundtrip(self):
        positions = RNG.normal(size=(20, 3)).astype(np.float32)
        back = read_ply(write_ply(PlyCloud(positions)))
        assert back.labels is None
        assert np.array_equal(back.positions, positions)

    def test_double_precision_input_recentered(self):
        # UTM-scale doubles: the reader must recenter before the f32 cast
        utm = np.array([[620000.25, 4830000.5, 100.0],
                        [620001.25, 4830001.5, 101.0]])
        header = (b"ply\nformat binary_little_endian 1.0\n"
                  b"element vertex 2\n"
                  b"property double x\nproperty double y\nproperty double z\n"
                  b"end_header\n")
        body = np.ascontiguousarray(utm, dtype="<f8").tobytes()
        back = read_ply(header + body)
        assert np.allclose(back.offset, utm.mean(axis=0))
        assert np.allclose(back.positions.astype(np.float64) + back.offset,
                           utm, atol=1e-4)

    def test_alternative_label_property_names(self):
        for name in (b"label", b"class", b"semantic", b"scalar_label"):
            header = (b"ply\nformat binary_little_endian 1.0\n"
                      b"element vertex 1\n"
                      b"property float x\nproperty float y\nproperty float z\n"
                      b"property int " + name + b"\nend_header\n")
            body = np.array([(1.0, 2.0, 3.0)], dtype="<f4,<f4,<f4").tobytes()
            body += np.array([7], dtype="<i4").tobytes()
            back = read_ply(header + body)
            assert back.labels is not None and back.labels[0] == 7, name

    def test_list_property_rejected(self):
        header = (b"ply\nformat binary_little_endian 1.0\n"
                  b"element vertex 1\n"
                  b"property float x\nproperty float y\nproperty float z\n"
                  b"property list uchar int vertex_indices\nend_header\n")
        with pytest.raises(FormatError, match="list"):
            read_ply(header + b"\x00" * 32)

    def test_truncated_body_rejected(self):
        data = write_ply(PlyCloud(np.ones((4, 3), dtype=np.float32)))
        with pytest.raises(FormatError, match="truncated"):
            read_ply(data[:-5])

    def test_missing_magic_rejected(self):
        with pytest.raises(FormatError):
            read_ply(b"not a ply file at all")

    def test_unknown_vertex_property_warns_but_reads(self):
        header = (b"ply\nformat binary_little_endian 1.0\n"
                  b"element vertex 1\n"
                  b"property float x\nproperty float y\nproperty float z\n"
                  b"property float nx\nend_header\n")
        body = np.array([1.0, 2.0, 3.0, 0.5], dtype="<f4").tobytes()
        with pytest.warns(UserWarning, match="nx"):
            back = read_ply(header + body)
        assert np.array_equal(back.positions, [[1.0, 2.0, 3.0]])


class TestSceneGenerator:
    def test_deterministic(self):
        spec = SceneSpec(n_points=500, seed=11)
        a, b = generate_scene(spec), generate_scene(spec)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.labels, b.labels)

    def test_point_count_and_classes(self):
        cloud = generate_scene(SceneSpec(n_points=700, seed=1))
        assert len(cloud) == 700
        assert set(np.unique(cloud.labels)) <= set(range(SCENE_CLASSES["planes_poles"]))

    def test_boundary_population_exact_at_zero_noise(self):
        spec = SceneSpec(n_points=1000, noise_sigma=0.0, seed=2,
                         boundary_fraction=0.1)
        cloud = generate_scene(spec)
        assert boundary_strip_count(cloud) == 100

    def test_boundary_fraction_scales(self):
        for frac in (0.0, 0.2):
            spec = SceneSpec(n_points=500, noise_sigma=0.0, seed=3,
                             boundary_fraction=frac)
            assert boundary_strip_count(generate_scene(spec)) == int(500 * frac)

    def test_surfaces_lie_on_their_planes(self):
        cloud = generate_scene(SceneSpec(n_points=800, noise_sigma=0.0, seed=4))
        ground = cloud.positions[cloud.labels == 0]
        wall = cloud.positions[cloud.labels == 1]
        assert np.abs(ground[:, 2]).max() < 1e-6
        assert np.abs(wall[:, 1] - 5.0).max() < 1e-6

    def test_parallel_planes_layout(self):
        cloud = generate_scene(SceneSpec(n_points=200, layout="parallel_planes",
                                         noise_sigma=0.0, seed=5))
        assert set(np.unique(cloud.labels)) == {0, 1}
        assert np.abs(cloud.positions[cloud.labels == 1][:, 2] - 1.0).max() < 1e-6

    def test_bad_spec_rejected(self):
        with pytest.raises(ConfigError):
            SceneSpec(n_points=0)
        with pytest.raises(ConfigError):
            SceneSpec(layout="spheres")
        with pytest.raises(ConfigError):
            SceneSpec(boundary_fraction=1.0)


class TestRunConfig:
    def test_parse_shipped_config(self):
        from pathlib import Path
        run = load_run_config(Path(__file__).parent.parent / "configs" / "synthetic.toml")
        assert run.model.num_classes == 3
        assert run.model.k_neighbors == 16
        assert run.train.epochs == 50
        assert run.scene is not None and run.scene.layout == "planes_poles"

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config("/nonexistent/run.toml")

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[model\nnum_classes = 3")
        with pytest.raises(ConfigError, match="TOML"):
            load_run_config(path)

    def test_missing_model_section(self, tmp_path):
        path = tmp_path / "nomodel.toml"
        path.write_text("[scene]\nn_points = 10")
        with pytest.raises(ConfigError, match="model"):
            load_run_config(path)

    def test_missing_data_and_scene(self, tmp_path):
        path = tmp_path / "nodata.toml"
        path.write_text("[model]\nnum_classes = 3")
        with pytest.raises(ConfigError, match="scene"):
            load_run_config(path)

    def test_resolve_data_path_env(self, monkeypatch):
        monkeypatch.setenv("SIESEF_DATA_DIR", "/data/root")
        assert str(resolve_data_path("scans/a.bin")) == "/data/root/scans/a.bin"
        assert str(resolve_data_path("/abs/a.bin")) == "/abs/a.bin"
        monkeypatch.delenv("SIESEF_DATA_DIR")
        assert str(resolve_data_path("scans/a.bin")) == "scans/a.bin"
