import math

import numpy as np
import pytest

from cgrg import (DistortionFn, LocalView, PoissonFiberKernel, TypePair,
                  enumerate_views, in_ball, joint_empirical, local_views,
                  make_hamming, make_squared_degree, make_table, sigma_n,
                  squared_degree, hamming_color)
from cgrg.distortion import measure_inner_product, table_from_csv, table_to_csv
from cgrg.empirical import view_arrays
from cgrg.graphs import sample_graph


class TestPointwise:
    def test_hamming(self):
        va, vb = LocalView("a", (1, 0)), LocalView("b", (1, 0))
        assert hamming_color(va, va) == 0.0
        assert hamming_color(va, vb) == 1.0

    def test_squared_degree_values(self):
        v3 = LocalView("a", (2, 1))
        v1 = LocalView("b", (0, 1))
        assert squared_degree(v3, v1) == 4.0
        assert squared_degree(v3, LocalView("b", (1, 2))) == 0.0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            DistortionFn("manhattan")

    def test_table_lookup_and_missing(self):
        va, vb = LocalView("a", (0,)), LocalView("b", (0,))
        fn = make_table({(va, vb): 2.0, (va, va): 0.0})
        assert fn(va, vb) == 2.0
        with pytest.raises(KeyError):
            fn(vb, va)

    def test_table_rejects_negative(self):
        va = LocalView("a", (0,))
        with pytest.raises(ValueError):
            make_table({(va, va): -1.0})


class TestSigmaN:
    def test_identical_views_zero(self):
        xs = [LocalView("a", (1,)), LocalView("b", (0,))]
        assert sigma_n(xs, xs, make_hamming()) == 0.0

    def test_all_differ_one(self):
        xs = [LocalView("a", (0,))] * 4
        ys = [LocalView("b", (0,))] * 4
        assert sigma_n(xs, ys, make_hamming()) == 1.0

    def test_half_differ(self):
        xs = [LocalView("a", (0,))] * 4
        ys = [LocalView("a", (0,))] * 2 + [LocalView("b", (0,))] * 2
        assert sigma_n(xs, ys, make_hamming()) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sigma_n([LocalView("a", (0,))], [], make_hamming())

    def test_accounting_identity(self, params_flat):
        # sigma_n equals the inner product against the joint empirical;
        # dyadic n keeps atom weights exact, so the identity is bit-exact
        # for integer-valued distortions
        params = params_flat.with_n(512)
        gx = sample_graph(params)
        gy = sample_graph(params.with_seed(params.seed + 1))
        mu = joint_empirical(gx, gy, cap=12)
        for fn in (make_hamming(), make_squared_degree()):
            lhs = sigma_n(local_views(gx, 12), local_views(gy, 12), fn)
            rhs = measure_inner_product(fn, mu)
            assert lhs == rhs

    def test_bounds_hold(self, params_flat):
        gx = sample_graph(params_flat)
        gy = sample_graph(params_flat.with_seed(3))
        for fn in (make_hamming(), make_squared_degree()):
            val = sigma_n(local_views(gx, 12), local_views(gy, 12), fn)
            assert 0.0 <= val <= fn.bound(params_flat.alphabet, 12)


class TestInBall:
    def test_above_bound_always_true(self, params_flat):
        gx = sample_graph(params_flat)
        gy = sample_graph(params_flat.with_seed(5))
        fn = make_hamming()
        xs, ys = local_views(gx, 8), local_views(gy, 8)
        assert in_ball(xs, ys, fn, fn.bound(params_flat.alphabet, 8))

    def test_zero_radius(self):
        xs = [LocalView("a", (0,))] * 3
        ys = [LocalView("a", (0,))] * 2 + [LocalView("b", (0,))]
        assert in_ball(xs, xs, make_hamming(), 0.0)
        assert not in_ball(xs, ys, make_hamming(), 0.0)


class TestSymmetryAndBound:
    def test_builtin_kinds_symmetric_on_support(self):
        views = enumerate_views(("a", "b"), 2)
        for fn in (make_hamming(), make_squared_degree()):
            mat = fn.matrix(views)
            assert np.array_equal(mat, mat.T)
            assert fn.is_symmetric

    def test_bounds(self):
        assert make_hamming().bound(("a", "b"), 7) == 1.0
        assert make_hamming().bound(("a",), 7) == 0.0
        assert make_squared_degree().bound(("a", "b"), 3) == 36.0
        va = LocalView("a", (0,))
        assert make_table({(va, va): 2.5}).bound(("a",), 0) == 2.5


class TestSquaredDegreeExpectation:
    def test_poisson_identity_exact_series(self):
        # E(N - N')^2 = 2c for independent Poisson(c); c=1 gives 2
        tp = TypePair(("a",), [1.0], [[1.0]])
        kern = PoissonFiberKernel(tp, cap=30)
        w = np.exp(kern.log_normalized)
        smat = make_squared_degree().matrix(kern.views)
        assert float(w @ smat @ w) == pytest.approx(2.0, abs=1e-9)

    def test_poisson_identity_monte_carlo(self):
        rng = np.random.default_rng(123)
        nx = rng.poisson(1.0, size=1_000_000)
        ny = rng.poisson(1.0, size=1_000_000)
        est = float(np.mean((nx - ny) ** 2.0))
        # Var((N-N')^2) = E(N-N')^4 - 4 = 3*4 + 2 - 4 = 10 at c=1
        se = math.sqrt(10.0 / 1_000_000)
        assert abs(est - 2.0) <= 4 * se


class TestBatch:
    def test_batch_matches_scalar(self, params_flat):
        g1 = sample_graph(params_flat)
        g2 = sample_graph(params_flat.with_seed(9))
        c1, k1 = view_arrays(g1, 6)
        c2, k2 = view_arrays(g2, 6)
        v1, v2 = local_views(g1, 6), local_views(g2, 6)
        views = enumerate_views(params_flat.alphabet, 6)
        table = make_table({(vx, vy): abs(sum(vx.counts) - sum(vy.counts))
                            * (1.0 if vx.color == vy.color else 2.0)
                            for vx in views for vy in views})
        for fn in (make_hamming(), make_squared_degree(), table):
            batch = fn.batch(c1, k1, c2, k2, params_flat.alphabet, 6)
            scalar = np.array([fn(a, b) for a, b in zip(v1, v2)])
            assert np.array_equal(batch, scalar)

    def test_table_batch_requires_alphabet(self):
        va = LocalView("a", (0,))
        fn = make_table({(va, va): 1.0})
        with pytest.raises(ValueError):
            fn.batch(np.zeros(1, int), np.zeros((1, 1), int),
                     np.zeros(1, int), np.zeros((1, 1), int))


class TestTableCsv:
    def test_round_trip(self, tmp_path):
        views = enumerate_views(("a", "b"), 1)
        fn = make_table({(vx, vy): float(i + j)
                         for i, vx in enumerate(views)
                         for j, vy in enumerate(views)})
        path = tmp_path / "table.csv"
        table_to_csv(fn, path)
        back = table_from_csv(path)
        assert back.table == fn.table

    def test_rejects_serializing_builtin(self, tmp_path):
        with pytest.raises(ValueError):
            table_to_csv(make_hamming(), tmp_path / "x.csv")
