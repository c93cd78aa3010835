"""The limiting Poisson-fiber law and its relative-entropy rate function.

Under the law p for a type pair (pi, omega), a view draws color a with
probability pi(a) and then independent Poisson(omega(a,b)/pi(a)) neighbor
counts per color b. The rate function on view-pair measures is relative
entropy to the product p (x) p, finite only for measures whose marginals
have the right color law and a symmetric mean-count matrix. Its
contraction along a distortion's mean is computed by convex duality:
exponential tilting of the product law with multipliers for the marginal
and consistency constraints.
"""

from __future__ import annotations

import csv
import math
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, logsumexp

from .distortion import DistortionFn
from .empirical import (DEFAULT_CAP, LocalView, Measure, TypePair,
                        counts_grid, psi)

__all__ = [
    "PoissonFiberKernel",
    "p_mass",
    "product_mass",
    "relative_entropy",
    "rate_J1",
    "contract_J_sigma",
]

_NEG_INF = float("-inf")


def _intensities(tp: TypePair) -> np.ndarray:
    """omega(a,b)/pi(a) rows; a null color must have a null omega row."""
    k = tp.k
    c = np.zeros((k, k))
    for a in range(k):
        if tp.pi[a] > 0:
            c[a] = tp.omega[a] / tp.pi[a]
        elif np.any(tp.omega[a] > 0):
            raise ValueError(
                f"intensity undefined for null color {tp.alphabet[a]!r}")
    return c


def p_mass(color: str, counts: Sequence[int], tp: TypePair) -> float:
    """Mass of one view under the Poisson-fiber law (log-space evaluation)."""
    a = tp.index(color)
    if tp.pi[a] == 0.0:
        if np.any(tp.omega[a] > 0):
            raise ValueError(f"intensity undefined for null color {color!r}")
        return 0.0
    c = tp.omega[a] / tp.pi[a]
    log_mass = math.log(tp.pi[a])
    for b, ell in enumerate(counts):
        if ell < 0:
            raise ValueError("counts must be nonnegative")
        if c[b] == 0.0:
            if ell > 0:
                return 0.0
            continue
        log_mass += ell * math.log(c[b]) - c[b] - math.lgamma(ell + 1)
    return math.exp(log_mass)


def product_mass(vx: LocalView, vy: LocalView, tp: TypePair) -> float:
    """Mass of a view pair under the product law p (x) p."""
    return p_mass(vx.color, vx.counts, tp) * p_mass(vy.color, vy.counts, tp)


class PoissonFiberKernel:
    """Cached masses of the Poisson-fiber law on the truncated support.

    The table holds the exact formula masses for every view with all
    counts <= cap; the tail mass beyond the cap is the truncation deficit
    (reported, not folded into the boundary atoms).
    """

    def __init__(self, type_pair: TypePair, cap: int = DEFAULT_CAP):
        if cap < 1:
            raise ValueError("cap must be >= 1")
        self.type_pair = type_pair
        self.cap = cap
        k = type_pair.k
        base = cap + 1
        c = _intensities(type_pair)
        grid = counts_grid(k, cap)
        # per-color log pmf tables: logpmf[a][j, b] for count j of color b
        js = np.arange(base, dtype=float)
        log_fact = gammaln(js + 1.0)
        blocks = []
        for a in range(k):
            if type_pair.pi[a] == 0.0:
                blocks.append(np.full(grid.shape[0], _NEG_INF))
                continue
            lp = np.empty((base, k))
            for b in range(k):
                if c[a, b] == 0.0:
                    lp[:, b] = np.where(js == 0, 0.0, _NEG_INF)
                else:
                    lp[:, b] = js * math.log(c[a, b]) - c[a, b] - log_fact
            block = math.log(type_pair.pi[a]) + sum(
                lp[grid[:, b], b] for b in range(k))
            blocks.append(block)
        self._log_mass = np.concatenate(blocks)
        self._grid = grid
        self.view_colors = np.repeat(np.arange(k), grid.shape[0])
        self.view_counts = np.vstack([grid] * k)

    @property
    def k(self) -> int:
        return self.type_pair.k

    @property
    def size(self) -> int:
        return self._log_mass.shape[0]

    @property
    def mass_table(self) -> np.ndarray:
        return np.exp(self._log_mass)

    @cached_property
    def total(self) -> float:
        return float(np.exp(logsumexp(self._log_mass)))

    @property
    def truncation_deficit(self) -> float:
        return 1.0 - self.total

    @cached_property
    def log_normalized(self) -> np.ndarray:
        return self._log_mass - math.log(self.total)

    @cached_property
    def views(self) -> list[LocalView]:
        alphabet = self.type_pair.alphabet
        return [LocalView(alphabet[c], tuple(int(x) for x in row))
                for c, row in zip(self.view_colors, self.view_counts)]

    def _view_id(self, view: LocalView) -> int:
        if len(view.counts) != self.k:
            raise ValueError("view arity does not match the alphabet")
        if any(c < 0 or c > self.cap for c in view.counts):
            return -1
        a = self.type_pair.index(view.color)
        base = self.cap + 1
        vid = a * base ** self.k
        for b, cnt in enumerate(view.counts):
            vid += cnt * base ** b
        return vid

    def log_mass(self, view: LocalView, normalized: bool = False) -> float:
        vid = self._view_id(view)
        if vid < 0:
            return _NEG_INF
        table = self.log_normalized if normalized else self._log_mass
        return float(table[vid])

    def mass(self, view: LocalView) -> float:
        return math.exp(self.log_mass(view))

    def measure(self, normalized: bool = True) -> Measure:
        """The kernel as a Measure on views (zero-mass atoms omitted)."""
        table = self.log_normalized if normalized else self._log_mass
        weights = {v: math.exp(lm) for v, lm in zip(self.views, table)
                   if lm > _NEG_INF}
        return Measure(weights, space="views",
                       alphabet=self.type_pair.alphabet)

    def mean_counts(self) -> np.ndarray:
        """E[counts[b] | color a] under the truncated law, per (a, b)."""
        k = self.k
        out = np.zeros((k, k))
        mass = self.mass_table
        for a in range(k):
            pa = float(self.type_pair.pi[a])
            if pa == 0.0:
                continue
            sel = self.view_colors == a
            w = mass[sel] / pa
            out[a] = self.view_counts[sel].T @ w
        return out

    def to_csv(self, path) -> None:
        alphabet = self.type_pair.alphabet
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["color"] + [f"c_{b}" for b in alphabet] + ["mass"])
            mass = self.mass_table
            for i, view in enumerate(self.views):
                writer.writerow([view.color, *view.counts, f"{mass[i]:.17g}"])


def relative_entropy(mu: Measure, nu: Measure) -> float:
    """KL divergence sum mu*log(mu/nu); +inf when mu charges a nu-null atom."""
    if mu.space is not None and nu.space is not None and mu.space != nu.space:
        raise ValueError(f"support mismatch: {mu.space!r} vs {nu.space!r}")
    mu.require_probability()
    nu.require_probability()
    terms = []
    for atom, w in mu.items():
        if w == 0.0:
            continue
        ref = nu[atom]
        if ref <= 0.0:
            return math.inf
        terms.append(w * (math.log(w) - math.log(ref)))
    return max(0.0, math.fsum(terms))


_GATE_TOL = 1e-9


def rate_J1(mu: Measure, tp: TypePair, cap: int = DEFAULT_CAP,
            kernel: PoissonFiberKernel | None = None) -> float:
    """Relative entropy of a view-pair measure to the product fiber law.

    Finite only when both marginals are consistent (symmetric mean-count
    matrix within 1e-9) and both color marginals equal pi within 1e-9;
    +inf otherwise. The reference is the truncated kernel, renormalized.
    """
    mu.require_probability()
    kernel = kernel if kernel is not None else PoissonFiberKernel(tp, cap)
    for side in (0, 1):
        image = psi(mu.marginal(side), tp.alphabet)
        if not image.is_consistent(_GATE_TOL):
            return math.inf
        if np.max(np.abs(image.pi - tp.pi)) > _GATE_TOL:
            return math.inf
    terms = []
    for (vx, vy), w in mu.items():
        if w == 0.0:
            continue
        log_ref = (kernel.log_mass(vx, normalized=True)
                   + kernel.log_mass(vy, normalized=True))
        if log_ref == _NEG_INF:
            return math.inf
        terms.append(w * (math.log(w) - log_ref))
    return max(0.0, math.fsum(terms))


def _constraint_features(colors: np.ndarray, counts: np.ndarray,
                         tp: TypePair) -> tuple[np.ndarray, np.ndarray]:
    """Per-view feature rows whose tilted means pin one marginal.

    Color rows (all but the last color, which is redundant with
    normalization) target pi; consistency rows target 0.
    """
    k = tp.k
    rows, targets = [], []
    for a in range(k - 1):
        rows.append((colors == a).astype(float))
        targets.append(float(tp.pi[a]))
    for a in range(k):
        for b in range(a + 1, k):
            feat = ((colors == a) * counts[:, b]
                    - (colors == b) * counts[:, a]).astype(float)
            rows.append(feat)
            targets.append(0.0)
    if not rows:
        return np.zeros((0, len(colors))), np.zeros(0)
    return np.stack(rows), np.asarray(targets)


def contract_J_sigma(t: float, sigma: DistortionFn, tp: TypePair,
                     cap: int = DEFAULT_CAP,
                     kernel: PoissonFiberKernel | None = None,
                     feas_tol: float = 1e-6, maxiter: int = 1000) -> float:
    """Infimum of the rate function over measures with mean distortion t.

    Solved through the smooth concave dual: the optimizer is an
    exponential tilt of the product law by the distortion plus multipliers
    for the marginal and consistency constraints. Returns +inf when no
    gated measure attains mean distortion t (detected by residual moment
    error after the dual solve).
    """
    kernel = kernel if kernel is not None else PoissonFiberKernel(tp, cap)
    logp = kernel.log_normalized
    keep = logp > _NEG_INF
    if kernel.size ** 2 > 20_000_000:
        raise ValueError("pair support too large for the dual solve; "
                         "reduce the cap")
    colors = kernel.view_colors[keep]
    counts = kernel.view_counts[keep]
    logp = logp[keep]
    views = [v for v, k_ in zip(kernel.views, keep) if k_]
    S = sigma.matrix(views)
    s_lo, s_hi = float(S.min()), float(S.max())
    if t < s_lo - 1e-12 or t > s_hi + 1e-12:
        return math.inf

    feats, targets = _constraint_features(colors, counts, tp)
    n_side = feats.shape[0]
    b_vec = np.concatenate([targets, targets, [t]])

    def neg_dual(theta):
        ux = theta[:n_side] @ feats
        wy = theta[n_side:2 * n_side] @ feats
        s = theta[-1]
        expo = (logp + ux)[:, None] + (logp + wy)[None, :] + s * S
        m = expo.max()
        z = np.exp(expo - m)
        z_tot = z.sum()
        log_z = m + math.log(z_tot)
        mu = z / z_tot
        mu_x = mu.sum(axis=1)
        mu_y = mu.sum(axis=0)
        grad = b_vec - np.concatenate([feats @ mu_x, feats @ mu_y,
                                       [float((mu * S).sum())]])
        value = float(theta @ b_vec) - log_z
        return -value, -grad

    theta0 = np.zeros(2 * n_side + 1)
    res = minimize(neg_dual, theta0, jac=True, method="BFGS",
                   options={"maxiter": maxiter, "gtol": 1e-11})
    _, neg_grad = neg_dual(res.x)
    if float(np.max(np.abs(neg_grad))) > feas_tol:
        return math.inf
    return max(0.0, float(-res.fun))
