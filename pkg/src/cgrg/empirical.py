"""Empirical objects computed from realized graphs.

Local views are the per-vertex letters of the networked source: the vertex
color together with its neighbor-color count vector, truncated at a cap L.
Empirical measures average point masses at local views (or pairs of views
for two processes); the pair measure counts ordered adjacent color pairs;
`psi` maps a view measure to its type pair (color law, mean-count matrix).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import chi2

from .graphs import ColoredGeometricGraph, ModelParams, sample_graph

__all__ = [
    "DEFAULT_CAP",
    "LocalView",
    "Measure",
    "TypePair",
    "local_views",
    "view_arrays",
    "empirical_measure",
    "joint_empirical",
    "pair_measure",
    "psi",
    "type_pair_of_graph",
    "total_variation",
    "render_atom",
    "parse_view",
    "measure_to_csv",
    "measure_from_csv",
    "poisson_gof",
    "sample_soft_conditioned",
    "enumerate_views",
    "view_ids",
    "counts_grid",
]

DEFAULT_CAP = 30


class LocalView(NamedTuple):
    """A vertex's color and truncated neighbor-color count vector."""

    color: str
    counts: tuple[int, ...]

    def total_degree(self) -> int:
        return sum(self.counts)


def local_views(g: ColoredGeometricGraph, cap: int = DEFAULT_CAP) -> list[LocalView]:
    """One view per vertex, in vertex order; counts saturate at `cap`."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    counts = np.minimum(g.neighbor_color_counts(), cap)
    return [LocalView(g.alphabet[g.colors[i]], tuple(int(c) for c in counts[i]))
            for i in range(g.n)]


def view_arrays(g: ColoredGeometricGraph,
                cap: int = DEFAULT_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Array twin of `local_views`: (color codes (n,), counts (n, k))."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    counts = np.minimum(g.neighbor_color_counts(), cap)
    return g.colors.copy(), counts


@dataclass
class Measure:
    """A finite nonnegative measure on a discrete support.

    Atoms are hashable (local views, pairs of views, or color pairs).
    `space` is an optional tag used to reject mixed-space operations.
    """

    weights: dict
    space: str | None = None
    alphabet: tuple[str, ...] | None = None
    total: float = field(init=False)

    def __post_init__(self):
        for w in self.weights.values():
            if w < 0:
                raise ValueError("weights must be nonnegative")
        self.total = math.fsum(self.weights.values())

    def __getitem__(self, atom) -> float:
        return self.weights.get(atom, 0.0)

    def __len__(self) -> int:
        return len(self.weights)

    def items(self):
        return self.weights.items()

    @property
    def support(self) -> list:
        return list(self.weights.keys())

    def is_probability(self, tol: float = 1e-9) -> bool:
        return abs(self.total - 1.0) <= tol

    def require_probability(self, tol: float = 1e-9) -> "Measure":
        if not self.is_probability(tol):
            raise ValueError(f"not a probability measure: total={self.total!r}")
        return self

    def normalized(self) -> "Measure":
        if self.total <= 0:
            raise ValueError("cannot normalize a null measure")
        return Measure({a: w / self.total for a, w in self.weights.items()},
                       space=self.space, alphabet=self.alphabet)

    def marginal(self, side: int) -> "Measure":
        """Marginal of a measure whose atoms are 2-tuples (side 0 or 1)."""
        if side not in (0, 1):
            raise ValueError("side must be 0 or 1")
        out: dict = {}
        for atom, w in self.weights.items():
            part = atom[side]
            out[part] = out.get(part, 0.0) + w
        return Measure(out, alphabet=self.alphabet)

    def color_marginal(self) -> dict[str, float]:
        """Mass per color for a measure on local views."""
        out: dict[str, float] = {}
        for view, w in self.weights.items():
            out[view.color] = out.get(view.color, 0.0) + w
        return out


def total_variation(mu: Measure, nu: Measure) -> float:
    """(1/2) sum of absolute weight differences over the union support."""
    atoms = set(mu.weights) | set(nu.weights)
    return 0.5 * math.fsum(abs(mu[a] - nu[a]) for a in atoms)


def empirical_measure(views: Sequence[LocalView],
                      alphabet: tuple[str, ...] | None = None) -> Measure:
    """Uniform average of point masses at the given views."""
    if len(views) == 0:
        raise ValueError("empty view list")
    n = len(views)
    out: dict = {}
    for v in views:
        out[v] = out.get(v, 0.0) + 1.0
    return Measure({a: w / n for a, w in out.items()}, space="views",
                   alphabet=alphabet)


def joint_empirical(gx: ColoredGeometricGraph, gy: ColoredGeometricGraph,
                    cap: int = DEFAULT_CAP) -> Measure:
    """Empirical measure on pairs of local views, matched by vertex index."""
    if gx.n != gy.n:
        raise ValueError(f"vertex-count mismatch: {gx.n} vs {gy.n}")
    vx = local_views(gx, cap)
    vy = local_views(gy, cap)
    out: dict = {}
    for a, b in zip(vx, vy):
        out[(a, b)] = out.get((a, b), 0.0) + 1.0
    return Measure({a: w / gx.n for a, w in out.items()}, space="view_pairs",
                   alphabet=gx.alphabet)


def pair_measure(g: ColoredGeometricGraph) -> Measure:
    """Ordered-pair edge intensity: omega_n(a,b) = #{adjacent ordered (a,b)}/n.

    Each edge {u,v} contributes to both (a,b) and (b,a); a same-color edge
    contributes twice to (a,a). Total mass is 2|E|/n.
    """
    k = g.k
    mat = np.zeros((k, k))
    if g.edges.size:
        cu = g.colors[g.edges[:, 0]]
        cv = g.colors[g.edges[:, 1]]
        np.add.at(mat, (cu, cv), 1.0)
        np.add.at(mat, (cv, cu), 1.0)
    mat /= g.n
    weights = {(g.alphabet[a], g.alphabet[b]): float(mat[a, b])
               for a in range(k) for b in range(k) if mat[a, b] > 0}
    return Measure(weights, space="color_pairs", alphabet=g.alphabet)


@dataclass(frozen=True)
class TypePair:
    """A color law pi and an edge-intensity matrix omega over the alphabet.

    Images of `psi` may carry an asymmetric omega; symmetry is reported via
    `is_consistent` rather than raised.
    """

    alphabet: tuple[str, ...]
    pi: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        alphabet = tuple(str(a) for a in self.alphabet)
        pi = np.asarray(self.pi, dtype=float).copy()
        omega = np.asarray(self.omega, dtype=float).copy()
        k = len(alphabet)
        if pi.shape != (k,) or omega.shape != (k, k):
            raise ValueError("pi/omega shapes do not match the alphabet")
        if np.any(pi < 0) or abs(float(pi.sum()) - 1.0) > 1e-9:
            raise ValueError("pi must be nonnegative and sum to 1 within 1e-9")
        if np.any(omega < 0):
            raise ValueError("omega must be nonnegative")
        pi.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "omega", omega)

    @property
    def k(self) -> int:
        return len(self.alphabet)

    def is_consistent(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.omega - self.omega.T) <= tol))

    def index(self, label: str) -> int:
        return self.alphabet.index(label)

    def to_json(self) -> str:
        return json.dumps({
            "alphabet": list(self.alphabet),
            "pi": [float(x) for x in self.pi],
            "omega": [[float(x) for x in row] for row in self.omega],
        }, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "TypePair":
        obj = json.loads(text)
        return TypePair(tuple(obj["alphabet"]), np.asarray(obj["pi"]),
                        np.asarray(obj["omega"]))


def psi(mu: Measure, alphabet: tuple[str, ...] | None = None) -> TypePair:
    """Type pair of a probability measure on local views.

    pi(a) is the mu-mass of color a and omega(a,b) the mu-mean of the
    color-b count among color-a views. An asymmetric omega is returned
    as-is; check `TypePair.is_consistent`.
    """
    mu.require_probability()
    alphabet = alphabet or mu.alphabet
    if alphabet is None:
        raise ValueError("alphabet required (not carried by the measure)")
    alphabet = tuple(alphabet)
    idx = {a: i for i, a in enumerate(alphabet)}
    k = len(alphabet)
    pi = np.zeros(k)
    omega = np.zeros((k, k))
    for view, w in mu.items():
        a = idx[view.color]
        pi[a] += w
        for b, cnt in enumerate(view.counts):
            omega[a, b] += w * cnt
    return TypePair(alphabet, pi, omega)


def type_pair_of_graph(g: ColoredGeometricGraph) -> TypePair:
    """(pi_n, omega_n) computed directly from colors and edges."""
    k = g.k
    pi = np.bincount(g.colors, minlength=k).astype(float) / g.n
    omega = np.zeros((k, k))
    if g.edges.size:
        cu = g.colors[g.edges[:, 0]]
        cv = g.colors[g.edges[:, 1]]
        np.add.at(omega, (cu, cv), 1.0)
        np.add.at(omega, (cv, cu), 1.0)
    omega /= g.n
    return TypePair(g.alphabet, pi, omega)


# --- truncated-support enumeration -------------------------------------------
#
# Views on a k-letter alphabet with counts capped at L are indexed by a
# mixed-radix id: id = color_code * (L+1)^k + sum_b counts[b] * (L+1)^b.
# Every table built on the truncated support (kernel masses, distortion
# matrices) shares this ordering.

_MAX_SUPPORT = 5_000_000


def counts_grid(k: int, cap: int) -> np.ndarray:
    """All count vectors below the cap, ordered by mixed-radix id."""
    base = cap + 1
    size = base ** k
    if size * k > _MAX_SUPPORT:
        raise ValueError(
            f"truncated count space too large ({size} vectors); reduce the cap")
    ids = np.arange(size)
    grid = np.empty((size, k), dtype=np.int64)
    for b in range(k):
        grid[:, b] = (ids // base ** b) % base
    return grid


def enumerate_views(alphabet: Sequence[str], cap: int) -> list[LocalView]:
    """Every truncated view, ordered by its mixed-radix id."""
    grid = counts_grid(len(alphabet), cap)
    return [LocalView(a, tuple(int(c) for c in row))
            for a in alphabet for row in grid]


def view_ids(colors: np.ndarray, counts: np.ndarray, cap: int) -> np.ndarray:
    """Mixed-radix ids of (color code, count vector) rows."""
    base = cap + 1
    k = counts.shape[-1]
    weights = base ** np.arange(k, dtype=np.int64)
    return colors * base ** k + counts @ weights


# --- canonical rendering and CSV ---------------------------------------------


def render_atom(atom) -> str:
    """Canonical text for a measure atom.

    Local view -> "color|c_1,...,c_k"; pairs are joined with ";".
    """
    if isinstance(atom, LocalView):
        return f"{atom.color}|{','.join(str(c) for c in atom.counts)}"
    if isinstance(atom, tuple) and len(atom) == 2:
        if all(isinstance(p, LocalView) for p in atom):
            return f"{render_atom(atom[0])};{render_atom(atom[1])}"
        return f"{atom[0]};{atom[1]}"
    return str(atom)


def parse_view(text: str) -> LocalView:
    color, _, counts = text.partition("|")
    if not counts:
        raise ValueError(f"not a local view: {text!r}")
    return LocalView(color, tuple(int(c) for c in counts.split(",")))


def _parse_atom(text: str):
    if ";" in text:
        left, right = text.split(";")
        if "|" in left:
            return (parse_view(left), parse_view(right))
        return (left, right)
    if "|" in text:
        return parse_view(text)
    return text


def measure_to_csv(mu: Measure, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["atom_repr", "weight"])
        for atom in sorted(mu.weights, key=render_atom):
            writer.writerow([render_atom(atom), f"{mu.weights[atom]:.17g}"])


def measure_from_csv(path, space: str | None = None) -> Measure:
    weights: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["atom_repr", "weight"]:
            raise ValueError("unexpected measure CSV header")
        for row in reader:
            weights[_parse_atom(row[0])] = float(row[1])
    return Measure(weights, space=space)


# --- statistical helpers ------------------------------------------------------


def poisson_gof(samples: np.ndarray, intensity: float,
                min_expected: float = 5.0) -> tuple[float, float, int]:
    """Pearson chi-square of integer samples against Poisson(intensity).

    Bins with expected count below `min_expected` are merged into their
    neighbors; one degree of freedom is charged for the plug-in intensity.
    Returns (statistic, p_value, dof).
    """
    samples = np.asarray(samples, dtype=np.int64)
    m = len(samples)
    if m == 0:
        raise ValueError("no samples")
    kmax = int(samples.max())
    ks = np.arange(kmax + 1)
    if intensity > 0:
        logp = (ks * np.log(intensity) - intensity
                - np.array([math.lgamma(k + 1) for k in ks]))
        probs = np.exp(logp)
    else:
        probs = np.where(ks == 0, 1.0, 0.0)
    probs = np.append(probs, max(0.0, 1.0 - probs.sum()))  # right tail bucket
    observed = np.append(np.bincount(samples, minlength=kmax + 1), 0).astype(float)
    expected = probs * m
    # merge small-expectation bins from the right, then from the left
    obs, exp = list(observed), list(expected)
    i = len(exp) - 1
    while i > 0 and exp[i] < min_expected:
        exp[i - 1] += exp[i]
        obs[i - 1] += obs[i]
        del exp[i], obs[i]
        i -= 1
    while len(exp) > 1 and exp[0] < min_expected:
        exp[1] += exp[0]
        obs[1] += obs[0]
        del exp[0], obs[0]
    if len(exp) < 2:
        return 0.0, 1.0, 0
    stat = float(sum((o - e) ** 2 / e for o, e in zip(obs, exp)))
    dof = max(1, len(exp) - 1 - 1)
    return stat, float(chi2.sf(stat, dof)), dof


def _within_tolerance(tp_hat: TypePair, target: TypePair, tau: float) -> bool:
    return (float(np.max(np.abs(tp_hat.pi - target.pi))) <= tau and
            float(np.max(np.abs(tp_hat.omega - target.omega))) <= tau)


def sample_soft_conditioned(params: ModelParams, target: TypePair,
                            tau: float = 0.05, max_attempts: int = 1000
                            ) -> tuple[ColoredGeometricGraph, int]:
    """Rejection-sample a graph whose type pair is within tau of `target`.

    Soft surrogate for conditioning on an exact type-pair event. Returns
    the accepted graph and the number of attempts used.
    """
    for attempt in range(max_attempts):
        g = sample_graph(params,
                         rng=np.random.default_rng((params.seed, attempt)))
        if _within_tolerance(type_pair_of_graph(g), target, tau):
            return g, attempt + 1
    raise RuntimeError(
        f"no sample within tolerance {tau} after {max_attempts} attempts")
