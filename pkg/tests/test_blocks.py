"""Block and network assembly: reverse-bottleneck fusion, residual shortcut,
hierarchy construction, ablation switches, and whole-network invariances."""
import numpy as np
import pytest

from siesef.blocks import (ABLATIONS, Hierarchy, ModelConfig, Rbpc,
                           ResidualBlock, SiesefNet, apply_ablation,
                           build_hierarchy, network_forward,
                           permute_hierarchy)
from siesef.errors import ConfigError, ShapeError
from siesef.neighborhood import PointCloud, knn_search
from siesef.tensor import Tensor

RNG = np.random.default_rng(0)


def small_config(**overrides):
    base = dict(num_classes=3, k_neighbors=6, level_widths=(8, 12),
                downsample_ratio=0.5, d_g=4, seed=1)
    base.update(overrides)
    return ModelConfig(**base)


class TestModelConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            ModelConfig(num_classes=1)
        with pytest.raises(ConfigError):
            ModelConfig(num_classes=2, k_neighbors=0)
        with pytest.raises(ConfigError):
            ModelConfig(num_classes=2, downsample_ratio=0.0)
        with pytest.raises(ConfigError):
            ModelConfig(num_classes=2, pooling="avg")
        with pytest.raises(ConfigError):
            ModelConfig(num_classes=2, level_widths=())
        with pytest.raises(ConfigError):
            ModelConfig(num_classes=2, class_weights=(1.0, -1.0))

    def test_ablation_switches(self):
        base = small_config()
        assert apply_ablation(base, "a1").use_else is False
        assert apply_ablation(base, "a1").pooling == "max"
        assert apply_ablation(base, "a2").use_else is True
        assert apply_ablation(base, "a2").pooling == "max"
        assert apply_ablation(base, "a3").use_else is False
        assert apply_ablation(base, "a3").pooling == "seap"
        full = apply_ablation(base, "full")
        assert full.use_else is True and full.pooling == "seap"
        with pytest.raises(ConfigError):
            apply_ablation(base, "b1")


class TestRbpc:
    def test_output_shape(self):
        rbpc = Rbpc(d_in=8, d_out=5, rng=np.random.default_rng(2))
        f1 = Tensor(RNG.normal(size=(7, 4)).astype(np.float32))
        f2 = Tensor(RNG.normal(size=(7, 4)).astype(np.float32))
        assert rbpc(f1, f2).shape == (7, 5)

    def test_expansion_factor(self):
        rbpc = Rbpc(d_in=6, d_out=4, expansion=4, rng=np.random.default_rng(3))
        assert rbpc.expand.d_out == 24
        assert rbpc.project.d_in == 24

    def test_linear_when_phi_identity(self):
        # without the expansion activation the whole module is affine
        rbpc = Rbpc(d_in=4, d_out=3, phi_activation=False,
                    rng=np.random.default_rng(4))
        a1 = Tensor(RNG.normal(size=(5, 2)).astype(np.float32))
        a2 = Tensor(RNG.normal(size=(5, 2)).astype(np.float32))
        b1 = Tensor(RNG.normal(size=(5, 2)).astype(np.float32))
        b2 = Tensor(RNG.normal(size=(5, 2)).astype(np.float32))
        lhs = rbpc(a1 + b1, a2 + b2).numpy()
        zero = rbpc(Tensor(np.zeros((5, 2), dtype=np.float32)),
                    Tensor(np.zeros((5, 2), dtype=np.float32))).numpy()
        rhs = rbpc(a1, a2).numpy() + rbpc(b1, b2).numpy() - zero
        assert np.abs(lhs - rhs).max() < 1e-4

    def test_mismatched_inputs_rejected(self):
        rbpc = Rbpc(d_in=4, d_out=3, rng=np.random.default_rng(5))
        with pytest.raises(ShapeError):
            rbpc(Tensor(np.zeros((5, 2), dtype=np.float32)),
                 Tensor(np.zeros((5, 3), dtype=np.float32)))


class TestResidualBlock:
    def make_block(self, config, d_in=8, d_out=12):
        return ResidualBlock(d_in, d_out, config, rng=np.random.default_rng(6))

    def test_output_shape_all_ablations(self):
        cloud = PointCloud(RNG.uniform(0, 2, (20, 3)).astype(np.float32))
        index = knn_search(cloud, 6)
        feats = Tensor(RNG.normal(size=(20, 8)).astype(np.float32))
        for variant in ABLATIONS:
            config = apply_ablation(small_config(), variant)
            block = self.make_block(config)
            out = block(feats, cloud, index)
            assert out.shape == (20, 12), variant

    def test_dead_main_path_leaves_shortcut(self):
        # zero the projection weights: the block reduces to leaky(shortcut(x))
        config = small_config()
        block = self.make_block(config)
        block.rbpc.project.weights.data[:] = 0.0
        block.rbpc.project.bias.data[:] = 0.0
        cloud = PointCloud(RNG.uniform(0, 2, (15, 3)).astype(np.float32))
        index = knn_search(cloud, 6)
        feats = Tensor(RNG.normal(size=(15, 8)).astype(np.float32))
        out = block(feats, cloud, index).numpy()
        skip = block.shortcut(feats).numpy()
        expected = np.where(skip >= 0, skip, 0.2 * skip)
        assert np.abs(out - expected).max() < 1e-6

    def test_identity_shortcut_when_widths_match(self):
        block = ResidualBlock(10, 10, small_config(), rng=np.random.default_rng(7))
        assert block.shortcut is None

    def test_parameter_set_depends_on_pooling(self):
        seap_block = self.make_block(small_config())
        max_block = self.make_block(small_config(pooling="max"))
        seap_names = set(seap_block.parameters("b"))
        max_names = set(max_block.parameters("b"))
        assert any(".weight.weight" in n for n in seap_names)  # attention MLP
        assert not any(".weight.weight" in n for n in max_names)


class TestHierarchy:
    def test_level_sizes_and_recentering(self):
        cloud = PointCloud(RNG.uniform(100, 104, (40, 3)).astype(np.float32))
        config = small_config()
        h = build_hierarchy(cloud, config)
        assert len(h.clouds) == 2 and len(h.indices) == 2 and len(h.maps) == 1
        assert len(h.clouds[0]) == 40
        assert len(h.clouds[1]) == 20
        assert np.abs(h.clouds[0].positions.mean(axis=0)).max() < 1e-3
        assert h.indices[0].k == 6

    def test_k_clamped_to_cloud_size(self):
        cloud = PointCloud(RNG.uniform(0, 1, (4, 3)).astype(np.float32))
        h = build_hierarchy(cloud, small_config(k_neighbors=16))
        assert h.indices[0].k == 4

    def test_deterministic_under_seed(self):
        cloud = PointCloud(RNG.uniform(0, 2, (30, 3)).astype(np.float32))
        config = small_config()
        a = build_hierarchy(cloud, config, seed=5)
        b = build_hierarchy(cloud, config, seed=5)
        assert np.array_equal(a.maps[0].kept_ids, b.maps[0].kept_ids)
        c = build_hierarchy(cloud, config, seed=6)
        assert not np.array_equal(a.maps[0].kept_ids, c.maps[0].kept_ids)


class TestNetwork:
    def test_forward_shape(self):
        cloud = PointCloud(RNG.uniform(0, 2, (25, 3)).astype(np.float32))
        config = small_config()
        logits = network_forward(cloud, config)
        assert logits.shape == (25, 3)

    def test_forward_shape_all_ablations(self):
        cloud = PointCloud(RNG.uniform(0, 2, (25, 3)).astype(np.float32))
        for variant in ABLATIONS:
            config = apply_ablation(small_config(), variant)
            logits = network_forward(cloud, config)
            assert logits.shape == (25, 3), variant

    def test_deterministic_under_seed(self):
        cloud = PointCloud(RNG.uniform(0, 2, (25, 3)).astype(np.float32))
        config = small_config()
        a = network_forward(cloud, config, seed=3).numpy()
        b = network_forward(cloud, config, seed=3).numpy()
        assert np.array_equal(a, b)

    def test_point_order_permutation_bit_identical(self):
        cloud = PointCloud(RNG.uniform(0, 2, (40, 3)).astype(np.float32))
        config = small_config()
        model = SiesefNet(config)
        h = build_hierarchy(cloud, config)
        base = model.forward(h).numpy()
        perm = np.random.default_rng(9).permutation(40)
        permuted = model.forward(permute_hierarchy(h, perm)).numpy()
        assert np.array_equal(permuted, base[perm])

    def test_translation_leaves_logits(self):
        pos = (RNG.integers(0, 512, size=(30, 3)) / 256.0).astype(np.float32)
        config = small_config()
        model = SiesefNet(config)
        base = model.forward(build_hierarchy(PointCloud(pos), config)).numpy()
        moved = PointCloud(pos + np.float32([128.0, -64.0, 32.0]))
        shifted = model.forward(build_hierarchy(moved, config)).numpy()
        assert np.abs(base - shifted).max() < 1e-4

    def test_state_dict_roundtrip(self):
        config = small_config()
        model = SiesefNet(config)
        state = model.state_dict()
        other = SiesefNet(small_config(seed=99))
        other.load_state_dict(state)
        cloud = PointCloud(RNG.uniform(0, 2, (20, 3)).astype(np.float32))
        h = build_hierarchy(cloud, config)
        assert np.array_equal(model.forward(h).numpy(), other.forward(h).numpy())

    def test_load_rejects_missing_and_misshaped(self):
        model = SiesefNet(small_config())
        state = model.state_dict()
        partial = dict(state)
        partial.pop("head.out.weight")
        with pytest.raises(ShapeError):
            model.load_state_dict(partial)
        bad = dict(state)
        bad["head.out.weight"] = np.zeros((1, 1), dtype=np.float32)
        with pytest.raises(ShapeError):
            model.load_state_dict(bad)

    def test_single_level_config(self):
        cloud = PointCloud(RNG.uniform(0, 2, (15, 3)).astype(np.float32))
        config = small_config(level_widths=(8,))
        assert network_forward(cloud, config).shape == (15, 3)
