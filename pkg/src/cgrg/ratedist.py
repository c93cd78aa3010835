"""Cumulants, Legendre transforms, and distortion-ball exponents.

The single-letter cumulant of a distortion under the fiber law is
Lambda(t) = E_x log E_y exp(t * sigma(x, y)) over the truncated support;
its convex conjugate gives the rate-distortion exponent. The empirical
cumulant estimates the same object at finite n by an outer Monte Carlo
average over x-graphs of a log-mean-exp over y-graphs, and the ball
exponent estimates -(1/n) log Q(B(x, alpha)) by direct hit counting.

x- and y-replicates are sampled as independent processes (independent
point clouds and colorings); pass coupling="shared_points" to resample
only the colors on the x-cloud. Replicate streams derive from
(seed, outer index, inner index), so results do not depend on the
execution schedule or thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp
from scipy.stats import binomtest

from .distortion import DistortionFn
from .empirical import DEFAULT_CAP, view_arrays
from .graphs import ModelParams, _sample_colors, sample_graph
from .kernel import PoissonFiberKernel

__all__ = [
    "CumulantFn",
    "CumulantEstimate",
    "AlphaBrackets",
    "BallExponent",
    "RDCurve",
    "single_letter_cumulant",
    "make_single_letter_cumulant",
    "EmpiricalCumulant",
    "empirical_cumulant",
    "legendre",
    "alpha_brackets",
    "mc_ball_exponent",
    "rd_curve",
]

_INF = math.inf
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class CumulantFn:
    """A cumulant function with a record of its evaluations.

    kind : "single_letter" or "empirical_n"
    n : sample size for the empirical kind
    stderr : optional per-t standard error (empirical kind)
    grid : (t, value) pairs seen so far, for convexity diagnostics
    """

    kind: str
    evaluate: Callable[[float], float]
    n: int | None = None
    stderr: Callable[[float], float] | None = None
    grid: dict = field(default_factory=dict)

    def __call__(self, t: float) -> float:
        t = float(t)
        value = self.grid.get(t)
        if value is None:
            value = float(self.evaluate(t))
            self.grid[t] = value
        return value

    def tabulate(self, ts: Sequence[float]) -> list[tuple[float, float]]:
        return [(float(t), self(t)) for t in ts]

    def convexity_defect(self, min_spacing: float = 1e-5) -> float:
        """Most negative slope increment over the evaluation grid (>= 0 if convex).

        Points closer than `min_spacing` are coalesced first; below that
        spacing a slope is pure rounding noise.
        """
        pts = []
        for t, v in sorted(self.grid.items()):
            if not pts or t - pts[-1][0] >= min_spacing:
                pts.append((t, v))
        if len(pts) < 3:
            return 0.0
        slopes = [(v2 - v1) / (t2 - t1)
                  for (t1, v1), (t2, v2) in zip(pts, pts[1:])]
        return min((s2 - s1 for s1, s2 in zip(slopes, slopes[1:])), default=0.0)


def make_single_letter_cumulant(sigma: DistortionFn,
                                kernel: PoissonFiberKernel) -> CumulantFn:
    """Lambda(t) = E_x log E_y e^{t sigma} under the normalized kernel."""
    logp = kernel.log_normalized
    weights = np.exp(logp)
    smat = sigma.matrix(kernel.views)

    def evaluate(t: float) -> float:
        inner = logsumexp(logp[None, :] + t * smat, axis=1)
        return float(np.dot(weights, np.where(weights > 0, inner, 0.0)))

    return CumulantFn("single_letter", evaluate)


def single_letter_cumulant(t: float, sigma: DistortionFn,
                           kernel: PoissonFiberKernel) -> float:
    return make_single_letter_cumulant(sigma, kernel)(t)


class _ProcessSampler:
    """Draws local-view arrays for replicated x/y processes."""

    def __init__(self, params: ModelParams, cap: int = DEFAULT_CAP,
                 coupling: str = "independent"):
        if coupling not in ("independent", "shared_points"):
            raise ValueError(f"unknown coupling {coupling!r}")
        self.params = params
        self.cap = cap
        self.coupling = coupling

    def x_views(self, seed, m: int):
        rng = np.random.default_rng((seed, m, 0))
        g = sample_graph(self.params, rng=rng)
        colors, counts = view_arrays(g, self.cap)
        context = None
        if self.coupling == "shared_points":
            radii = self.params.radii()
            r_max = float(radii.max())
            if r_max > 0 and g.n > 1:
                tree = cKDTree(g.points, boxsize=np.ones(g.d))
                cand = tree.query_pairs(r_max, output_type="ndarray")
            else:
                cand = np.empty((0, 2), dtype=np.int64)
            if cand.size:
                delta = np.abs(g.points[cand[:, 0]] - g.points[cand[:, 1]])
                delta = np.minimum(delta, 1.0 - delta)
                dist = np.sqrt((delta * delta).sum(axis=1))
            else:
                dist = np.empty(0)
            context = (cand, dist, radii)
        return colors, counts, context

    def y_views(self, context, seed, m: int, j: int):
        rng = np.random.default_rng((seed, m, j))
        if self.coupling == "independent":
            g = sample_graph(self.params, rng=rng)
            return view_arrays(g, self.cap)
        cand, dist, radii = context
        colors = _sample_colors(self.params, rng)
        counts = np.zeros((self.params.n, self.params.k), dtype=np.int64)
        if cand.size:
            keep = dist <= radii[colors[cand[:, 0]], colors[cand[:, 1]]]
            u, v = cand[keep, 0], cand[keep, 1]
            np.add.at(counts, (u, colors[v]), 1)
            np.add.at(counts, (v, colors[u]), 1)
        return colors, np.minimum(counts, self.cap)


class EmpiricalCumulant:
    """Finite-n cumulant estimator with frozen Monte Carlo samples.

    Per outer replicate m, one x-graph and k_inner y-graphs are drawn and
    the per-pair distortion sums cached, so any t can be evaluated from
    the same samples. The estimate at t is the average over m of
    (1/n) [logmeanexp_j(t * sum_i sigma_i)]; the standard error is the
    jackknife spread of the outer blocks.
    """

    def __init__(self, sigma: DistortionFn, params: ModelParams,
                 m_outer: int = 50, k_inner: int = 2000,
                 seed: int | None = None, cap: int = DEFAULT_CAP,
                 coupling: str = "independent", threads: int = 1):
        if m_outer < 1:
            raise ValueError("m_outer must be >= 1")
        if k_inner < 1:
            raise ValueError("zero inner samples")
        self.sigma = sigma
        self.params = params
        self.n = params.n
        self.m_outer = m_outer
        self.k_inner = k_inner
        self.cap = cap
        self.seed = params.seed if seed is None else seed
        sampler = _ProcessSampler(params, cap, coupling)

        def outer_row(m: int) -> np.ndarray:
            cx, kx, ctx = sampler.x_views(self.seed, m)
            row = np.empty(k_inner)
            for j in range(k_inner):
                cy, ky = sampler.y_views(ctx, self.seed, m, j + 1)
                row[j] = self.sigma.batch(cx, kx, cy, ky,
                                          params.alphabet, cap).sum()
            return row

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(outer_row, range(m_outer)))
        else:
            rows = [outer_row(m) for m in range(m_outer)]
        self.sigma_sums = np.vstack(rows)

    def _block_values(self, t: float) -> np.ndarray:
        lme = logsumexp(t * self.sigma_sums, axis=1) - np.log(self.k_inner)
        return lme / self.n

    def value(self, t: float) -> float:
        return math.fsum(self._block_values(t)) / self.m_outer

    def stderr(self, t: float) -> float:
        blocks = self._block_values(t)
        if self.m_outer < 2:
            return float("nan")
        return float(blocks.std(ddof=1) / math.sqrt(self.m_outer))

    def as_cumulant(self) -> CumulantFn:
        return CumulantFn("empirical_n", self.value, n=self.n,
                          stderr=self.stderr)


@dataclass(frozen=True)
class CumulantEstimate:
    value: float
    stderr: float


def empirical_cumulant(t: float, sigma: DistortionFn, params: ModelParams,
                       reps: tuple[int, int] = (50, 2000),
                       seed: int | None = None, cap: int = DEFAULT_CAP,
                       coupling: str = "independent",
                       threads: int = 1) -> CumulantEstimate:
    """One-shot empirical cumulant estimate with jackknife standard error."""
    est = EmpiricalCumulant(sigma, params, reps[0], reps[1], seed, cap,
                            coupling, threads)
    return CumulantEstimate(est.value(t), est.stderr(t))


def _golden_max(f: Callable[[float], float], a: float, b: float,
                xtol: float = 1e-10) -> tuple[float, float]:
    """Golden-section maximization of a unimodal f on [a, b]."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    t = 0.5 * (a + b)
    return t, f(t)


def legendre(cumulant: CumulantFn, alpha: float, t_max: float = 200.0,
             t_bounds: tuple[float, float] | None = None,
             xtol: float = 1e-10) -> float:
    """Convex conjugate sup_t [t*alpha - Lambda(t)].

    The bracket expands geometrically from 0 toward an end while the
    objective still grows there, stopping at `t_bounds` or +-t_max, then
    golden-section search maximizes the concave objective inside. If the
    objective still climbs with non-vanishing slope at +-t_max, alpha lies
    outside the cumulant's slope range and the conjugate is +inf. Raises
    on a non-convex evaluation grid or Lambda(0) != 0.
    """
    if abs(cumulant(0.0)) > 1e-9:
        raise ValueError("cumulant must vanish at t=0")
    lo, hi = t_bounds if t_bounds is not None else (-t_max, t_max)
    lo, hi = max(lo, -t_max), min(hi, t_max)
    if not lo < hi:
        raise ValueError("empty t range")

    def f(t: float) -> float:
        return t * alpha - cumulant(t)

    anchor = min(max(0.0, lo), hi)

    def expand(direction: int) -> float:
        end = hi if direction > 0 else lo
        pos, best = anchor, f(anchor)
        step = 1.0
        while direction * (end - pos) > 0:
            nxt = min(hi, pos + step) if direction > 0 else max(lo, pos - step)
            if f(nxt) <= best:
                return nxt  # one point past the peak
            pos, best = nxt, f(nxt)
            step *= 2.0
        return pos

    b = expand(+1)
    a = expand(-1)

    defect = cumulant.convexity_defect()
    if defect < -1e-8:
        raise ValueError(
            f"cumulant evaluation grid is not convex (defect {defect:.2e})")

    # unbounded-direction sentinel at the hard transform bound
    eps = 1e-3
    if b >= t_max - 1e-12 and f(b) > f(b - eps):
        if (f(b) - f(b - eps)) / eps > 1e-8:
            return _INF
    if a <= -t_max + 1e-12 and f(a) > f(a + eps):
        if (f(a) - f(a + eps)) / eps > 1e-8:
            return _INF

    if a == b:
        best = f(a)
    else:
        _, best = _golden_max(f, a, b, xtol)
        best = max(best, f(a), f(b))
    if lo <= 0.0 <= hi:
        best = max(best, 0.0)
    return best


@dataclass(frozen=True)
class AlphaBrackets:
    """Monte Carlo lower endpoint and analytic upper endpoint.

    alpha_min is the mean over x-graphs of the minimum distortion over the
    inner y-samples; it over-estimates the essential infimum, and
    min_bias_delta = estimate(K/2) - estimate(K) >= 0 tracks how much it
    still moves as the inner sample doubles.
    """

    alpha_min: float
    alpha_av: float
    min_bias_delta: float
    m_outer: int
    k_inner: int


def _mean_distortion(sigma: DistortionFn, kernel: PoissonFiberKernel) -> float:
    w = np.exp(kernel.log_normalized)
    smat = sigma.matrix(kernel.views)
    return float(w @ smat @ w)


def alpha_brackets(sigma: DistortionFn, kernel: PoissonFiberKernel,
                   params: ModelParams, reps: tuple[int, int] = (50, 2000),
                   seed: int | None = None,
                   coupling: str = "independent") -> AlphaBrackets:
    """Estimate (alpha_min, alpha_av) for a distortion under the model."""
    m_outer, k_inner = reps
    if m_outer < 1 or k_inner < 1:
        raise ValueError("reps must both be >= 1")
    seed = params.seed if seed is None else seed
    cap = kernel.cap
    sampler = _ProcessSampler(params, cap, coupling)
    mins_full, mins_half = [], []
    half = max(1, k_inner // 2)
    for m in range(m_outer):
        cx, kx, ctx = sampler.x_views(seed, m)
        best = _INF
        best_half = _INF
        for j in range(k_inner):
            cy, ky = sampler.y_views(ctx, seed, m, j + 1)
            val = float(sigma.batch(cx, kx, cy, ky, params.alphabet,
                                    cap).sum()) / params.n
            best = min(best, val)
            if j < half:
                best_half = min(best_half, val)
        mins_full.append(best)
        mins_half.append(best_half)
    alpha_min = math.fsum(mins_full) / m_outer
    delta = math.fsum(mins_half) / m_outer - alpha_min
    return AlphaBrackets(alpha_min, _mean_distortion(sigma, kernel),
                         delta, m_outer, k_inner)


@dataclass(frozen=True)
class BallExponent:
    """Monte Carlo estimate of -(1/n) log Q(B(x, alpha))."""

    alpha: float
    estimate: float
    ci_low: float
    ci_high: float
    hits: int
    k_inner: int
    n: int
    warning: str | None = None


def mc_ball_exponent(params: ModelParams, sigma: DistortionFn, alpha: float,
                     k_inner: int = 100_000, seed: int | None = None,
                     cap: int = DEFAULT_CAP, coupling: str = "independent",
                     confidence: float = 0.95,
                     threads: int = 1) -> BallExponent:
    """Draw one x-graph and count y-samples inside its distortion ball.

    Returns -(1/n) log(hit fraction) with a binomial (Wilson) confidence
    interval mapped to the exponent scale; +inf with a warning when no
    y-sample lands in the ball.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if k_inner < 1:
        raise ValueError("zero inner samples")
    seed = params.seed if seed is None else seed
    n = params.n
    sampler = _ProcessSampler(params, cap, coupling)
    cx, kx, ctx = sampler.x_views(seed, 0)

    def count_range(bounds: tuple[int, int]) -> int:
        hits = 0
        for j in range(bounds[0], bounds[1]):
            cy, ky = sampler.y_views(ctx, seed, 0, j + 1)
            val = float(sigma.batch(cx, kx, cy, ky, params.alphabet,
                                    cap).sum()) / n
            if val <= alpha:
                hits += 1
        return hits

    if threads > 1:
        edges = np.linspace(0, k_inner, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = sum(pool.map(count_range, zip(edges[:-1], edges[1:])))
    else:
        hits = count_range((0, k_inner))

    ci = binomtest(hits, k_inner).proportion_ci(confidence, method="wilson")
    ci_low = -math.log(ci.high) / n if ci.high > 0 else _INF
    ci_high = -math.log(ci.low) / n if ci.low > 0 else _INF
    if hits == 0:
        return BallExponent(alpha, _INF, ci_low, _INF, 0, k_inner, n,
                            warning="no hits; ball probability below "
                                    f"~{1.0 / k_inner:.1e}, exponent is a "
                                    "lower-bounded sentinel")
    warn = None
    if hits < 10:
        warn = f"only {hits} hits; confidence interval is wide"
    estimate = -math.log(hits / k_inner) / n
    return BallExponent(alpha, estimate, ci_low, ci_high, hits, k_inner, n,
                        warning=warn)


@dataclass
class RDCurve:
    """Rate-distortion values over a distortion grid with endpoint data."""

    alphas: np.ndarray
    r_values: np.ndarray
    alpha_min: float
    alpha_av: float
    alpha_min_inf_flag: bool
    brackets: AlphaBrackets | None = None

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(r), 0.0)
                for a, r in zip(self.alphas, self.r_values)]


def finite_n_rate(sigma: DistortionFn, params: ModelParams, alpha: float,
                  reps: tuple[int, int] = (10, 200), seed: int | None = None,
                  cap: int = DEFAULT_CAP, t_max: float = 200.0,
                  coupling: str = "independent") -> float:
    """Legendre transform of the empirical cumulant at level n (t <= 0)."""
    est = EmpiricalCumulant(sigma, params, reps[0], reps[1], seed, cap,
                            coupling)
    return legendre(est.as_cumulant(), alpha, t_max=t_max,
                    t_bounds=(-t_max, 0.0))


def _lower_endpoint_flag(sigma: DistortionFn, params: ModelParams,
                         brackets: AlphaBrackets, reps: tuple[int, int],
                         seed: int | None, cap: int, t_max: float,
                         coupling: str) -> bool:
    """n-doubling growth heuristic for an exceptional lower endpoint.

    The probe level sits near the lower endpoint but above the 5% sample
    quantile of both estimators' distortions, where a plain Monte Carlo
    cumulant is still trustworthy; below that the finite-sample transform
    saturates at the sample minimum and a growth signal would be spurious.
    """
    span = brackets.alpha_av - brackets.alpha_min
    if span <= 0:
        return False
    est_n = EmpiricalCumulant(sigma, params, reps[0], reps[1], seed, cap,
                              coupling)
    est_2n = EmpiricalCumulant(sigma, params.with_n(2 * params.n), reps[0],
                               reps[1], seed, cap, coupling)
    alpha_diag = max(
        brackets.alpha_min + 0.05 * span,
        float(np.quantile(est_n.sigma_sums / est_n.n, 0.05)),
        float(np.quantile(est_2n.sigma_sums / est_2n.n, 0.05)))
    if alpha_diag >= brackets.alpha_av:
        return False
    r_n = legendre(est_n.as_cumulant(), alpha_diag, t_max=t_max,
                   t_bounds=(-t_max, 0.0))
    r_2n = legendre(est_2n.as_cumulant(), alpha_diag, t_max=t_max,
                    t_bounds=(-t_max, 0.0))
    if math.isinf(r_2n):
        return not math.isinf(r_n)
    return r_2n > 1.25 * r_n + 0.005


def rd_curve(sigma: DistortionFn, kernel: PoissonFiberKernel,
             alphas: Sequence[float], params: ModelParams,
             reps: tuple[int, int] = (50, 2000), seed: int | None = None,
             t_max: float = 200.0, diag_reps: tuple[int, int] = (8, 160),
             coupling: str = "independent") -> RDCurve:
    """Rate-distortion curve R(alpha) by convex duality on a grid.

    R is the conjugate of the single-letter cumulant restricted to t <= 0,
    so R vanishes at and above the mean distortion alpha_av. The endpoint
    bracket is estimated by Monte Carlo, and an n-doubling growth test of
    the finite-n rate near the lower endpoint raises the diagnostic flag
    for a possibly exceptional lower boundary point.
    """
    alphas = np.asarray([float(a) for a in alphas])
    if np.any(np.diff(alphas) < 0):
        raise ValueError("alphas must be sorted ascending")
    brackets = alpha_brackets(sigma, kernel, params, reps, seed, coupling)
    cumulant = make_single_letter_cumulant(sigma, kernel)
    alpha_av = brackets.alpha_av
    av_snap = alpha_av - 1e-12 * max(1.0, abs(alpha_av))
    r_values = np.array([
        0.0 if a >= av_snap
        else legendre(cumulant, a, t_max=t_max, t_bounds=(-t_max, 0.0))
        for a in alphas])

    flag = _lower_endpoint_flag(sigma, params, brackets, diag_reps, seed,
                                kernel.cap, t_max, coupling)
    return RDCurve(alphas, r_values, brackets.alpha_min, alpha_av, flag,
                   brackets)
