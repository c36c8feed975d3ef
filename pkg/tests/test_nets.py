import math

import numpy as np
import pytest

import nets
from matrix_core import Matrix, load_matrix
from nets import (SphereNet, VectorClass, build_sphere_net, coverage_radius, enumerate_level_net,
                  level_net_count, classify_vector, is_member, sparse_budget, spread_threshold,
                  default_split_scale, level_height, level_support, save_net)
from spectral import net_norm_bounds, spectral_norm


class TestSphereNet:
    def test_one_dimensional(self):
        net = build_sphere_net(1, 0.5)
        np.testing.assert_array_equal(np.sort(net.points.ravel()), [-1.0, 1.0])
        assert net.cardinality <= 5

    def test_circle_cardinality(self):
        net = build_sphere_net(2, 0.5, seed=3)
        assert net.cardinality <= 25
        assert coverage_radius(net, seed=9) <= 0.5 + 1e-9

    def test_three_dimensional_coverage(self):
        net = build_sphere_net(3, 0.25, seed=4)
        assert coverage_radius(net, trials=1000, seed=17) <= 0.25 + 1e-9
        assert net.cardinality <= net.cardinality_bound

    def test_unit_points(self):
        net = build_sphere_net(3, 0.5, seed=5)
        np.testing.assert_allclose(np.linalg.norm(net.points, axis=1), 1.0, atol=1e-12)

    def test_deterministic(self):
        a = build_sphere_net(3, 0.5, seed=6)
        b = build_sphere_net(3, 0.5, seed=6)
        np.testing.assert_array_equal(a.points, b.points)

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError, match="eps"):
            build_sphere_net(3, 1.5)

    def test_rejects_high_dimension(self):
        with pytest.raises(ValueError, match="limited"):
            build_sphere_net(40, 0.5)

    def test_rejects_non_unit_points(self):
        with pytest.raises(ValueError):
            SphereNet(2, 0.5, np.array([[2.0, 0.0]]))

    def test_coverage_in_blocks(self, monkeypatch):
        net = build_sphere_net(3, 0.5, seed=2)
        whole = coverage_radius(net, trials=2500, seed=11)
        monkeypatch.setattr(nets, 'NET_AUDIT_CHUNK', 7)
        assert coverage_radius(net, trials=2500, seed=11) == pytest.approx(whole, abs=1e-12)

    @pytest.mark.slow
    def test_certifies_norms_up_to_dimension_eight(self):
        rng = np.random.default_rng(42)
        by_dim = {n: build_sphere_net(n, 0.5, seed=n) for n in range(2, 9)}
        for n, net in by_dim.items():
            assert net.cardinality <= 5 ** n
        for i in range(50):
            n = 2 + i % 7
            m = Matrix(rng.standard_normal((n, n)))
            bounds = net_norm_bounds(m, 0.5, by_dim[n].points)
            value = spectral_norm(m).value
            assert bounds.lower <= value * (1 + 1e-12)
            assert value <= 2.0 * bounds.lower


class TestLevelNet:
    def test_two_dimensional_unit_height(self):
        # h_k = 2^k/√2 = 1 at k = 1/2, so m = 1
        net = enumerate_level_net(2, 0.5, 2.0)
        assert net.support == 1
        assert net.cardinality == 4
        expected = {(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)}
        got = {tuple(np.round(v, 12)) for v in net.vectors}
        assert got == expected

    def test_three_dimensional_support_one(self):
        assert level_net_count(3, 1) == 6

    def test_combinatorial_count(self):
        assert level_net_count(6, 2) == 72
        # h_1 = 2/√8, support ⌊8/4⌋ = 2
        net = enumerate_level_net(8, 1.0, 2.0)
        assert net.support == 2
        assert net.cardinality == level_net_count(8, 2) == 8 * 2 + 28 * 4

    def test_vectors_in_unit_ball(self):
        net = enumerate_level_net(8, 1.0, 2.0)
        assert np.linalg.norm(net.vectors, axis=1).max() <= 1.0 + 1e-12
        vc = VectorClass('level_net', 8, {'k': 1.0, 'M': 2.0})
        assert all(is_member(v, vc) for v in net.vectors)

    def test_constant_reported(self):
        net = enumerate_level_net(8, 1.0, 2.0)
        assert net.constant == pytest.approx(math.log(net.cardinality) / (net.support * math.log(2.0)))

    def test_rejects_level_above_scale(self):
        with pytest.raises(ValueError, match="above M"):
            enumerate_level_net(16, 2.0, 2.0)

    def test_rejects_huge_enumeration(self):
        with pytest.raises(ValueError, match="limited"):
            enumerate_level_net(400, 0.0, 1.0)


class TestClassify:
    def test_coordinate_vector(self):
        x = np.zeros(16)
        x[0] = 1.0
        split = classify_vector(x, 2.0)
        np.testing.assert_array_equal(split.sparse, x)
        np.testing.assert_array_equal(split.spread, np.zeros(16))

    def test_flat_vector(self):
        x = np.full(16, 0.25)
        split = classify_vector(x, 2.0)
        np.testing.assert_array_equal(split.sparse, np.zeros(16))
        np.testing.assert_array_equal(split.spread, x)

    def test_exact_recomposition(self, rng):
        for _ in range(100):
            x = rng.standard_normal(50)
            x /= np.linalg.norm(x) * (1 + 1e-9)
            split = classify_vector(x, 3.0)
            np.testing.assert_array_equal(split.sparse + split.spread, x)
            assert np.count_nonzero(split.sparse) <= 50 / 9.0
            assert np.abs(split.spread).max() <= split.threshold

    def test_rejects_long_vector(self):
        with pytest.raises(ValueError, match="<= 1"):
            classify_vector(np.ones(4), 2.0)


class TestScales:
    def test_sparse_budget(self):
        assert sparse_budget(1000, 0.1, 0.25) == math.floor(0.25 * 1000 * 0.1 / math.log(math.e / 0.1))

    def test_default_split_matches_budget(self):
        p = 0.05
        M = default_split_scale(p)
        assert 1000 / M ** 2 == pytest.approx(0.25 * 1000 * p / math.log(math.e / p))

    def test_level_scales(self):
        assert level_height(16, 1) == 0.5
        assert level_support(16, 1) == 4
        assert level_support(2, 0.5) == 1
        assert spread_threshold(16, 2.0) == 0.5

    def test_membership(self):
        sparse = VectorClass('sparse_ball', 1000, {'p': 0.1})
        x = np.zeros(1000)
        x[:sparse.sparsity] = 1.0 / math.sqrt(sparse.sparsity)
        assert is_member(x, sparse)
        x[sparse.sparsity] = 0.01
        assert not is_member(x / np.linalg.norm(x), sparse)
        spread = VectorClass('spread_ball', 16, {'M': 2.0})
        assert is_member(np.full(16, 0.25), spread)
        assert not is_member(np.eye(16)[0], spread)

    def test_vector_class_requires_params(self):
        with pytest.raises(ValueError, match="requires"):
            VectorClass('level_net', 8, {'k': 1})


def test_save_net(tmp_path):
    net = build_sphere_net(2, 0.5, seed=1)
    path = tmp_path / "net.txt"
    save_net(net, path)
    np.testing.assert_array_equal(load_matrix(path).data, net.points)
