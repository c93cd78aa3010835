import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgrg import (ColoredGeometricGraph, ModelParams, ball_volume_coefficient,
                  edges_by_scan, graph_from_text, graph_to_text, sample_graph,
                  torus_distance, verify_edges)
from cgrg.graphs import _exact_composition_counts


class TestBallVolume:
    def test_d2_is_pi(self):
        assert ball_volume_coefficient(2) == pytest.approx(math.pi, abs=1e-12)

    def test_d1_is_two(self):
        # Gamma(3/2) = sqrt(pi)/2, so v_1 = sqrt(pi) / (sqrt(pi)/2) = 2
        assert ball_volume_coefficient(1) == pytest.approx(2.0, abs=1e-12)

    def test_d4(self):
        # Gamma(3) = 2
        assert ball_volume_coefficient(4) == pytest.approx(math.pi ** 2 / 2,
                                                           abs=1e-12)

    def test_rejects_d0(self):
        with pytest.raises(ValueError):
            ball_volume_coefficient(0)


class TestTorusDistance:
    def test_wraparound(self):
        assert torus_distance([0.1], [0.9]) == pytest.approx(0.2, abs=1e-15)

    def test_maximal_separation(self):
        assert torus_distance([0.0, 0.0], [0.5, 0.5]) == pytest.approx(
            math.sqrt(0.5), abs=1e-15)

    def test_identity(self):
        p = [0.3, 0.77, 0.123]
        assert torus_distance(p, p) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            torus_distance([0.1, 0.2], [0.1])

    @given(st.integers(1, 4), st.data())
    @settings(max_examples=50, deadline=None)
    def test_metric_properties(self, d, data):
        coord = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)
        p = data.draw(st.lists(coord, min_size=d, max_size=d))
        q = data.draw(st.lists(coord, min_size=d, max_size=d))
        dist = torus_distance(p, q)
        assert dist == torus_distance(q, p)
        assert 0.0 <= dist <= math.sqrt(d) / 2 + 1e-12


class TestModelParams:
    def test_rejects_bad_pi(self):
        with pytest.raises(ValueError):
            ModelParams(2, 10, ("a", "b"), [0.6, 0.6], np.ones((2, 2)), 0)

    def test_rejects_negative_pi(self):
        with pytest.raises(ValueError):
            ModelParams(2, 10, ("a", "b"), [1.2, -0.2], np.ones((2, 2)), 0)

    def test_rejects_asymmetric_lambda(self):
        lam = np.array([[1.0, 0.5], [0.4, 1.0]])
        with pytest.raises(ValueError):
            ModelParams(2, 10, ("a", "b"), [0.5, 0.5], lam, 0)

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValueError):
            ModelParams(2, 10, ("a", "b"), [0.5, 0.5], -np.ones((2, 2)), 0)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            ModelParams(0, 10, ("a",), [1.0], [[1.0]], 0)
        with pytest.raises(ValueError):
            ModelParams(2, 0, ("a",), [1.0], [[1.0]], 0)
        with pytest.raises(ValueError):
            ModelParams(2, 10, (), [], [[]], 0)

    def test_radii(self):
        p = ModelParams(1, 8, ("a",), [1.0], [[0.5]], 0)
        assert p.radii()[0, 0] == pytest.approx(0.0625, abs=1e-15)


class TestSampleGraph:
    def test_single_vertex_no_edges(self):
        p = ModelParams(3, 1, ("a", "b"), [0.5, 0.5], np.ones((2, 2)), 5)
        g = sample_graph(p)
        assert g.n == 1 and g.n_edges == 0

    def test_edge_rule_hand_case(self):
        # d=1, n=2, lambda=0.5: r = 0.25 >= |0.10-0.20|, so the edge exists
        points = np.array([[0.10], [0.20]])
        radii = (np.full((1, 1), 0.5) / 2) ** 1.0
        edges = edges_by_scan(points, np.zeros(2, dtype=int), radii)
        assert edges.tolist() == [[0, 1]]

    def test_rejects_radius_beyond_half(self):
        p = ModelParams(1, 2, ("a",), [1.0], [[1.0]], 0)  # r = 0.5
        with pytest.raises(ValueError):
            sample_graph(p)

    def test_determinism(self, params_flat):
        g1 = sample_graph(params_flat)
        g2 = sample_graph(params_flat)
        assert np.array_equal(g1.points, g2.points)
        assert np.array_equal(g1.colors, g2.colors)
        assert np.array_equal(g1.edges, g2.edges)

    def test_zero_lambda_gives_isolated_colors(self):
        p = ModelParams(2, 50, ("a", "b"), [0.5, 0.5], np.zeros((2, 2)), 3)
        assert sample_graph(p).n_edges == 0

    def test_exhaustive_recheck_small_n(self):
        for seed in range(5):
            p = ModelParams(2, 150, ("a", "b"), [0.3, 0.7],
                            np.array([[2.0, 0.5], [0.5, 1.0]]), seed)
            assert verify_edges(sample_graph(p))

    def test_indexed_search_matches_scan(self):
        # 50 random instances, n <= 500, mixed dimensions and kernels
        rng = np.random.default_rng(99)
        for trial in range(50):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(20, 501))
            k = int(rng.integers(1, 4))
            pi = rng.dirichlet(np.ones(k))
            lam = rng.uniform(0.0, 2.0, size=(k, k))
            lam = (lam + lam.T) / 2
            lam = np.round(lam, 6)
            lam = (lam + lam.T) / 2  # exact symmetry after rounding
            p = ModelParams(d, n, tuple("c%d" % i for i in range(k)), pi,
                            lam, int(rng.integers(1 << 31)))
            if np.any(p.radii() >= 0.5):
                continue
            g = sample_graph(p)
            scan = edges_by_scan(g.points, g.colors, p.radii())
            assert np.array_equal(g.edges, scan), f"trial {trial}"

    def test_color_frequency_concentration(self):
        # binomial concentration: within 3 sigma in >= 95% of 100 runs
        pi = np.array([0.3, 0.7])
        n = 600
        ok = 0
        for seed in range(100):
            p = ModelParams(2, n, ("a", "b"), pi, 0.5 * np.ones((2, 2)), seed)
            g = sample_graph(p)
            freq = np.bincount(g.colors, minlength=2) / n
            bound = 3 * np.sqrt(pi * (1 - pi) / n)
            ok += bool(np.all(np.abs(freq - pi) <= bound))
        assert ok >= 95

    def test_exact_composition(self):
        counts = _exact_composition_counts(np.array([0.52, 0.31, 0.17]), 53)
        assert counts.sum() == 53
        assert counts.tolist() == [28, 16, 9]
        p = ModelParams(2, 53, ("a", "b", "c"), [0.52, 0.31, 0.17],
                        0.1 * np.ones((3, 3)), 7, exact_composition=True)
        g = sample_graph(p)
        assert np.bincount(g.colors, minlength=3).tolist() == [28, 16, 9]


class TestGraphPair:
    def test_shared_points_color_free_kernel_shares_edges(self, params_flat):
        from cgrg import sample_graph_pair
        gx, gy = sample_graph_pair(params_flat)
        assert np.array_equal(gx.points, gy.points)
        assert not np.array_equal(gx.colors, gy.colors)
        # lambda is color-independent, so the edge sets coincide
        assert np.array_equal(gx.edges, gy.edges)

    def test_shared_points_color_kernel_distinct_edges(self):
        from cgrg import sample_graph_pair, verify_edges
        p = ModelParams(2, 300, ("a", "b"), [0.5, 0.5],
                        np.array([[3.0, 0.2], [0.2, 1.0]]), seed=13)
        gx, gy = sample_graph_pair(p)
        assert np.array_equal(gx.points, gy.points)
        assert not np.array_equal(gx.edges, gy.edges)
        assert verify_edges(gx) and verify_edges(gy)

    def test_independent_mode(self, params_flat):
        from cgrg import sample_graph_pair
        gx, gy = sample_graph_pair(params_flat, coupling="independent")
        assert not np.array_equal(gx.points, gy.points)

    def test_rejects_unknown_coupling(self, params_flat):
        from cgrg import sample_graph_pair
        with pytest.raises(ValueError):
            sample_graph_pair(params_flat, coupling="mirror")


class TestGraphText:
    def test_round_trip(self, params_flat):
        g = sample_graph(params_flat)
        g2 = graph_from_text(graph_to_text(g))
        assert np.array_equal(g.points, g2.points)
        assert np.array_equal(g.colors, g2.colors)
        assert g.alphabet == g2.alphabet
        assert np.array_equal(g.edges, g2.edges)

    def test_rejects_out_of_range_coordinate(self):
        with pytest.raises(ValueError):
            ColoredGeometricGraph(np.array([[1.0, 0.2]]), np.array([0]),
                                  ("a",), np.empty((0, 2)))

    def test_rejects_bad_edge_order(self):
        pts = np.array([[0.1, 0.1], [0.2, 0.2]])
        with pytest.raises(ValueError):
            ColoredGeometricGraph(pts, np.array([0, 0]), ("a",),
                                  np.array([[1, 0]]))
