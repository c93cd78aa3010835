import math

import numpy as np
import pytest

from cgrg import (CumulantFn, EmpiricalCumulant, ModelParams,
                  PoissonFiberKernel, TypePair, alpha_brackets,
                  empirical_cumulant, enumerate_views, legendre,
                  make_hamming, make_single_letter_cumulant,
                  make_squared_degree, make_table, mc_ball_exponent, p_mass,
                  rd_curve, single_letter_cumulant)


def _const_table(alphabet, cap, value):
    views = enumerate_views(alphabet, cap)
    return make_table({(vx, vy): value for vx in views for vy in views})


def _normalized_masses(tp, cap):
    views = enumerate_views(tp.alphabet, cap)
    raw = [p_mass(v.color, v.counts, tp) for v in views]
    total = math.fsum(raw)
    return views, [m / total for m in raw]


class TestSingleLetterCumulant:
    def test_zero_at_zero(self, tp_quarter, kernel_quarter_cap2):
        ham = make_hamming()
        assert abs(single_letter_cumulant(0.0, ham, kernel_quarter_cap2)) <= 1e-12

    def test_constant_distortion_is_linear(self, tp_quarter):
        kern = PoissonFiberKernel(tp_quarter, cap=1)
        const = _const_table(tp_quarter.alphabet, 1, 0.8)
        for t in (-2.0, 0.5, 3.0):
            assert single_letter_cumulant(t, const, kern) == pytest.approx(
                0.8 * t, abs=1e-12)

    def test_exhaustive_double_sum_oracle(self, tp_quarter,
                                          kernel_quarter_cap2):
        # independent oracle: plain double loop over the 18-view support
        views, masses = _normalized_masses(tp_quarter, cap=2)
        ham = make_hamming()
        for t in (-1.0, 0.5, 1.0):
            oracle = math.fsum(
                px * math.log(math.fsum(
                    py * math.exp(t * ham(vx, vy))
                    for vy, py in zip(views, masses)))
                for vx, px in zip(views, masses))
            got = single_letter_cumulant(t, ham, kernel_quarter_cap2)
            assert got == pytest.approx(oracle, abs=1e-12)

    def test_hamming_closed_form(self, kernel_quarter_cap2):
        # symmetric kernel: Lambda(t) = log(1/2 + 1/2 e^t)
        lam = make_single_letter_cumulant(make_hamming(), kernel_quarter_cap2)
        for t in (-2.0, -0.3, 0.7):
            assert lam(t) == pytest.approx(math.log(0.5 + 0.5 * math.exp(t)),
                                           abs=1e-12)


class TestLegendre:
    def test_quadratic_conjugate(self):
        cum = CumulantFn("single_letter", lambda t: 0.5 * t * t)
        for alpha in (0.0, 0.7, -1.3):
            assert legendre(cum, alpha) == pytest.approx(0.5 * alpha * alpha,
                                                         abs=1e-8)

    def test_linear_conjugate(self):
        cum = CumulantFn("single_letter", lambda t: 0.8 * t)
        assert legendre(cum, 0.8) == pytest.approx(0.0, abs=1e-10)
        assert legendre(cum, 1.0) == math.inf
        assert legendre(cum, 0.5) == math.inf

    def test_vanishes_at_mean(self, kernel_quarter_cap2):
        lam = make_single_letter_cumulant(make_hamming(), kernel_quarter_cap2)
        h = 1e-5
        alpha = (lam(h) - lam(-h)) / (2 * h)
        assert legendre(lam, alpha) <= 1e-8

    def test_rejects_nonzero_at_origin(self):
        cum = CumulantFn("single_letter", lambda t: t + 0.1)
        with pytest.raises(ValueError, match="vanish"):
            legendre(cum, 0.5)

    def test_rejects_nonconvex_grid(self):
        cum = CumulantFn("single_letter", lambda t: -t * t)
        with pytest.raises(ValueError, match="not convex"):
            legendre(cum, 0.3)

    def test_one_sided_transform_clamps_above_mean(self, kernel_quarter_cap2):
        lam = make_single_letter_cumulant(make_hamming(), kernel_quarter_cap2)
        got = legendre(lam, 0.9, t_bounds=(-200.0, 0.0))
        assert got == pytest.approx(0.0, abs=1e-12)


class TestEmpiricalCumulant:
    def test_zero_at_zero_exactly(self, params_flat):
        est = empirical_cumulant(0.0, make_hamming(),
                                 params_flat.with_n(40), reps=(3, 25))
        assert est.value == 0.0

    def test_constant_distortion_exact(self):
        params = ModelParams(2, 16, ("a", "b"), [0.5, 0.5],
                             0.5 * np.ones((2, 2)), seed=3)
        const = _const_table(params.alphabet, 4, 0.5)
        for t in (2.0, -1.0):
            est = empirical_cumulant(t, const, params, reps=(2, 10), cap=4)
            assert est.value == pytest.approx(0.5 * t, abs=1e-12)

    def test_converges_to_single_letter_within_3_se(self):
        # K must keep the inner log-mean-exp in its accurate regime at this
        # (n, t); t=0.25 with K=800 is comfortably inside it
        params = ModelParams(2, 120, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=11)
        t = 0.25
        est = EmpiricalCumulant(make_hamming(), params, m_outer=30,
                                k_inner=800)
        limit = math.log(0.5 + 0.5 * math.exp(t))
        gap = abs(est.value(t) - limit)
        assert gap <= 3 * est.stderr(t)

    def test_deterministic_and_thread_invariant(self):
        params = ModelParams(2, 50, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=21)
        kwargs = dict(m_outer=4, k_inner=30, cap=8)
        a = EmpiricalCumulant(make_hamming(), params, **kwargs)
        b = EmpiricalCumulant(make_hamming(), params, **kwargs)
        c = EmpiricalCumulant(make_hamming(), params, threads=3, **kwargs)
        assert np.array_equal(a.sigma_sums, b.sigma_sums)
        assert np.array_equal(a.sigma_sums, c.sigma_sums)

    def test_shared_points_coupling_runs(self):
        params = ModelParams(2, 40, ("a", "b"), [0.5, 0.5],
                             np.array([[2.0, 0.5], [0.5, 1.0]]), seed=5)
        est = EmpiricalCumulant(make_hamming(), params, m_outer=2, k_inner=20,
                                coupling="shared_points")
        assert np.isfinite(est.value(0.5))

    def test_rejects_empty_reps(self, params_flat):
        with pytest.raises(ValueError):
            EmpiricalCumulant(make_hamming(), params_flat.with_n(20),
                              m_outer=0)
        with pytest.raises(ValueError):
            EmpiricalCumulant(make_hamming(), params_flat.with_n(20),
                              k_inner=0)

    def test_grid_is_convex(self):
        params = ModelParams(2, 30, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=8)
        est = EmpiricalCumulant(make_hamming(), params, 3, 40).as_cumulant()
        est.tabulate(np.linspace(-2, 2, 15))
        assert est.convexity_defect() >= -1e-8


class TestAlphaBrackets:
    def test_constant_distortion(self):
        params = ModelParams(2, 20, ("a", "b"), [0.5, 0.5],
                             0.5 * np.ones((2, 2)), seed=2)
        kern = PoissonFiberKernel(
            TypePair(("a", "b"), [0.5, 0.5], 0.2 * np.ones((2, 2))), cap=2)
        const = _const_table(("a", "b"), 2, 1.5)
        br = alpha_brackets(const, kern, params, reps=(3, 8), seed=1)
        assert br.alpha_min == pytest.approx(1.5, abs=1e-12)
        assert br.alpha_av == pytest.approx(1.5, abs=1e-12)
        assert br.min_bias_delta == pytest.approx(0.0, abs=1e-12)

    def test_squared_degree_single_color(self):
        # intensity 1: alpha_av = E(N-N')^2 = 2 Var Poisson(1) = 2
        tp = TypePair(("a",), [1.0], [[1.0]])
        kern = PoissonFiberKernel(tp, cap=30)
        params = ModelParams(2, 60, ("a",), [1.0], [[1.0]], seed=4)
        br = alpha_brackets(make_squared_degree(), kern, params, reps=(2, 12))
        assert br.alpha_av == pytest.approx(2.0, abs=1e-9)
        assert 0.0 <= br.alpha_min

    def test_hamming_min_shrinks_with_more_samples(self):
        params = ModelParams(2, 12, ("a", "b"), [0.5, 0.5],
                             0.1 * np.ones((2, 2)), seed=6)
        kern = PoissonFiberKernel(
            TypePair(("a", "b"), [0.5, 0.5], 0.01 * np.ones((2, 2))), cap=4)
        small = alpha_brackets(make_hamming(), kern, params, reps=(4, 40),
                               seed=0, coupling="shared_points")
        big = alpha_brackets(make_hamming(), kern, params, reps=(4, 4000),
                             seed=0, coupling="shared_points")
        assert big.alpha_min <= small.alpha_min
        assert big.alpha_min <= 1.0 / 12 + 1e-12
        assert big.min_bias_delta >= 0.0


class TestBallExponent:
    def test_all_hits_above_bound(self):
        params = ModelParams(2, 25, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=9)
        res = mc_ball_exponent(params, make_hamming(), alpha=1.0, k_inner=50)
        assert res.estimate == 0.0 and res.hits == 50

    def test_zero_hits_sentinel(self):
        params = ModelParams(2, 30, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=10)
        res = mc_ball_exponent(params, make_hamming(), alpha=0.0, k_inner=300)
        assert res.estimate == math.inf
        assert res.hits == 0
        assert "no hits" in res.warning
        assert math.isfinite(res.ci_low)

    def test_estimate_inside_ci(self):
        params = ModelParams(2, 40, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=12)
        res = mc_ball_exponent(params, make_hamming(), alpha=0.45,
                               k_inner=2000)
        assert res.ci_low <= res.estimate <= res.ci_high

    def test_consistent_as_k_grows(self):
        params = ModelParams(2, 40, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=13)
        r1 = mc_ball_exponent(params, make_hamming(), alpha=0.4, k_inner=500)
        r2 = mc_ball_exponent(params, make_hamming(), alpha=0.4, k_inner=5000)
        # same x-graph; the interval shrinks and still overlaps
        assert (r2.ci_high - r2.ci_low) < (r1.ci_high - r1.ci_low)
        assert r1.ci_low <= r2.ci_high and r2.ci_low <= r1.ci_high

    def test_rejects_zero_k(self):
        params = ModelParams(2, 10, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=1)
        with pytest.raises(ValueError):
            mc_ball_exponent(params, make_hamming(), alpha=0.5, k_inner=0)

    def test_thread_invariant(self):
        params = ModelParams(2, 30, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=14)
        r1 = mc_ball_exponent(params, make_hamming(), alpha=0.45, k_inner=400)
        r2 = mc_ball_exponent(params, make_hamming(), alpha=0.45, k_inner=400,
                              threads=4)
        assert r1.hits == r2.hits and r1.estimate == r2.estimate


class TestRDCurve:
    def test_zero_at_alpha_av(self, tp_quarter):
        kern = PoissonFiberKernel(tp_quarter, cap=2)
        params = ModelParams(2, 40, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=15)
        curve = rd_curve(make_hamming(), kern, [0.5], params, reps=(2, 20),
                         diag_reps=(2, 20))
        assert curve.r_values[0] == 0.0
        assert curve.alpha_av == pytest.approx(0.5, abs=1e-12)

    def test_constant_distortion_step(self, tp_quarter):
        kern = PoissonFiberKernel(tp_quarter, cap=1)
        const = _const_table(("a", "b"), 1, 1.5)
        params = ModelParams(2, 30, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=16)
        curve = rd_curve(const, kern, [1.3, 1.5, 1.7], params, reps=(2, 10),
                         diag_reps=(2, 10))
        assert curve.r_values[0] == math.inf
        assert curve.r_values[1] == 0.0
        assert curve.r_values[2] == 0.0

    def test_monotone_and_convex(self, tp_quarter):
        kern = PoissonFiberKernel(tp_quarter, cap=8)
        params = ModelParams(2, 40, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=17)
        alphas = np.linspace(0.05, 0.65, 13)
        curve = rd_curve(make_hamming(), kern, alphas, params, reps=(2, 20),
                         diag_reps=(2, 20))
        rs = curve.r_values
        assert np.all(np.diff(rs) <= 1e-12)
        finite = rs[np.isfinite(rs)]
        second = np.diff(finite, 2)
        assert np.all(second >= -1e-6)

    def test_duality_against_cvxpy_primal(self, tp_quarter,
                                          kernel_quarter_cap1):
        cvxpy = pytest.importorskip("cvxpy")
        kern = kernel_quarter_cap1
        q = np.exp(kern.log_normalized)
        smat = make_hamming().matrix(kern.views)
        ref = np.outer(q, q)
        lam = make_single_letter_cumulant(make_hamming(), kern)
        for alpha in np.linspace(0.05, 0.5, 10):
            mu = cvxpy.Variable((kern.size, kern.size), nonneg=True)
            prob = cvxpy.Problem(
                cvxpy.Minimize(cvxpy.sum(cvxpy.kl_div(mu, ref))),
                [cvxpy.sum(mu) == 1,
                 cvxpy.sum(cvxpy.multiply(mu, smat)) <= alpha])
            prob.solve(solver=cvxpy.CLARABEL)
            dual = legendre(lam, float(alpha), t_bounds=(-200.0, 0.0))
            assert dual == pytest.approx(prob.value, abs=1e-3)

    def test_rejects_unsorted_grid(self, tp_quarter):
        kern = PoissonFiberKernel(tp_quarter, cap=1)
        params = ModelParams(2, 20, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=18)
        with pytest.raises(ValueError):
            rd_curve(make_hamming(), kern, [0.3, 0.1], params, reps=(1, 5),
                     diag_reps=(1, 5))

    def test_lower_endpoint_flag_false_on_regular_instance(self, tp_quarter):
        kern = PoissonFiberKernel(tp_quarter, cap=8)
        params = ModelParams(2, 50, ("a", "b"), [0.5, 0.5],
                             np.ones((2, 2)), seed=19)
        curve = rd_curve(make_hamming(), kern, [0.4], params, reps=(3, 60),
                         diag_reps=(3, 60))
        assert curve.alpha_min_inf_flag is False
