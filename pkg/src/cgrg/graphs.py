"""Colored geometric random graphs on the d-dimensional unit torus.

A graph instance is built from n points dropped uniformly on [0,1)^d with
i.i.d. colors, and an edge between two vertices whenever their torus
distance is at most a color-pair radius r(a,b) = (lambda(a,b)/n)^(1/d).
With that radius the expected number of color-b neighbors of a color-a
vertex converges to v_d * lambda(a,b) * pi(b), where v_d is the unit-ball
volume, so the empirical ordered-pair edge intensity converges to
v_d * lambda(a,b) * pi(a) * pi(b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "ModelParams",
    "ColoredGeometricGraph",
    "ball_volume_coefficient",
    "torus_distance",
    "sample_graph",
    "sample_graph_pair",
    "edges_by_scan",
    "verify_edges",
    "graph_to_text",
    "graph_from_text",
    "save_graph",
    "load_graph",
]


def ball_volume_coefficient(d: int) -> float:
    """Volume of the unit ball in dimension d: pi^(d/2) / Gamma(d/2 + 1)."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def torus_distance(p, q) -> float:
    """Euclidean distance on the unit torus (per-coordinate wraparound)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    delta = np.abs(p - q)
    delta = np.minimum(delta, 1.0 - delta)
    return float(np.sqrt(np.dot(delta, delta)))


def _torus_sq_dists(block: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Squared torus distances between every row of `block` and of `points`."""
    out = None
    for dim in range(points.shape[1]):
        d = np.abs(block[:, None, dim] - points[None, :, dim])
        np.minimum(d, 1.0 - d, out=d)
        d *= d
        out = d if out is None else out.__iadd__(d)
    return out


@dataclass(frozen=True)
class ModelParams:
    """Parameters of a colored geometric random graph model.

    Attributes
    ----------
    d : dimension of the torus (>= 1)
    n : number of vertices (>= 1)
    alphabet : ordered color labels
    pi : color law, sums to 1
    lam : symmetric nonnegative intensity matrix lambda(a,b)
    seed : reproducibility seed; all randomness derives from it
    exact_composition : draw colors as an exact multiset of size n*pi
        (largest-remainder apportionment) instead of i.i.d. pi
    """

    d: int
    n: int
    alphabet: tuple[str, ...]
    pi: np.ndarray
    lam: np.ndarray
    seed: int
    exact_composition: bool = False

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be >= 1")
        alphabet = tuple(str(a) for a in self.alphabet)
        if len(alphabet) < 1:
            raise ValueError("alphabet must be nonempty")
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet labels must be distinct")
        pi = np.asarray(self.pi, dtype=float).copy()
        lam = np.asarray(self.lam, dtype=float).copy()
        k = len(alphabet)
        if pi.shape != (k,):
            raise ValueError(f"pi must have shape ({k},)")
        if lam.shape != (k, k):
            raise ValueError(f"lambda must have shape ({k},{k})")
        if np.any(pi < 0) or abs(float(pi.sum()) - 1.0) > 1e-12:
            raise ValueError("pi must be nonnegative and sum to 1 within 1e-12")
        if np.any(lam < 0):
            raise ValueError("lambda must be nonnegative")
        if not np.array_equal(lam, lam.T):
            raise ValueError("lambda must be exactly symmetric")
        pi.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "lam", lam)

    @property
    def k(self) -> int:
        return len(self.alphabet)

    def radii(self) -> np.ndarray:
        """Connection radii r(a,b) = (lambda(a,b)/n)^(1/d)."""
        return (self.lam / self.n) ** (1.0 / self.d)

    def with_seed(self, seed: int) -> "ModelParams":
        return ModelParams(self.d, self.n, self.alphabet, self.pi, self.lam,
                           seed, self.exact_composition)

    def with_n(self, n: int) -> "ModelParams":
        return ModelParams(self.d, n, self.alphabet, self.pi, self.lam,
                           self.seed, self.exact_composition)


@dataclass(frozen=True)
class ColoredGeometricGraph:
    """A realized colored geometric graph.

    points : (n, d) coordinates in [0,1)
    colors : (n,) integer codes into `alphabet`
    edges : (m, 2) vertex pairs with u < v, lexicographically sorted
    """

    points: np.ndarray
    colors: np.ndarray
    alphabet: tuple[str, ...]
    edges: np.ndarray
    params: ModelParams | None = field(default=None, compare=False)

    def __post_init__(self):
        points = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        colors = np.ascontiguousarray(np.asarray(self.colors, dtype=np.int64))
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if points.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        if colors.shape != (points.shape[0],):
            raise ValueError("colors must align with points")
        if np.any(points < 0.0) or np.any(points >= 1.0):
            raise ValueError("coordinates must lie in [0, 1)")
        if edges.size:
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValueError("edges must satisfy u < v")
            if np.any(edges < 0) or np.any(edges >= points.shape[0]):
                raise ValueError("edge endpoint out of range")
        points.setflags(write=False)
        colors.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "colors", colors)
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "edges", edges)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def k(self) -> int:
        return len(self.alphabet)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def color_labels(self) -> list[str]:
        return [self.alphabet[c] for c in self.colors]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if self.edges.size:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def neighbor_color_counts(self) -> np.ndarray:
        """(n, k) matrix: entry (v, b) is v's number of color-b neighbors."""
        counts = np.zeros((self.n, self.k), dtype=np.int64)
        if self.edges.size:
            u, v = self.edges[:, 0], self.edges[:, 1]
            np.add.at(counts, (u, self.colors[v]), 1)
            np.add.at(counts, (v, self.colors[u]), 1)
        return counts

    def adjacency_sets(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].add(int(v))
            adj[v].add(int(u))
        return adj


def _exact_composition_counts(pi: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder apportionment of n slots to the color law pi."""
    raw = pi * n
    counts = np.floor(raw).astype(np.int64)
    short = n - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _sample_colors(params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    if params.exact_composition:
        counts = _exact_composition_counts(params.pi, params.n)
        colors = np.repeat(np.arange(params.k), counts)
        return rng.permutation(colors)
    return rng.choice(params.k, size=params.n, p=params.pi)


def _edges_kdtree(points: np.ndarray, colors: np.ndarray,
                  radii: np.ndarray) -> np.ndarray:
    """Edge set via a periodic spatial index, filtered by color-pair radii."""
    n, d = points.shape
    r_max = float(radii.max())
    if r_max <= 0.0 or n < 2:
        return np.empty((0, 2), dtype=np.int64)
    tree = cKDTree(points, boxsize=np.ones(d))
    pairs = tree.query_pairs(r_max, output_type="ndarray")
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.sort(pairs, axis=1)
    delta = np.abs(points[pairs[:, 0]] - points[pairs[:, 1]])
    delta = np.minimum(delta, 1.0 - delta)
    dist = np.sqrt((delta * delta).sum(axis=1))
    keep = dist <= radii[colors[pairs[:, 0]], colors[pairs[:, 1]]]
    pairs = pairs[keep]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return np.ascontiguousarray(pairs[order], dtype=np.int64)


def edges_by_scan(points: np.ndarray, colors: np.ndarray,
                  radii: np.ndarray, chunk_rows: int = 512) -> np.ndarray:
    """Reference O(n^2) edge construction; oracle for the indexed path."""
    points = np.asarray(points, dtype=float)
    colors = np.asarray(colors, dtype=np.int64)
    n = points.shape[0]
    rows = []
    for start in range(0, n, chunk_rows):
        stop = min(start + chunk_rows, n)
        sq = _torus_sq_dists(points[start:stop], points)
        rmat = radii[colors[start:stop, None], colors[None, :]]
        hit = sq <= rmat * rmat
        ii, jj = np.nonzero(hit)
        ii = ii + start
        keep = ii < jj
        if keep.any():
            rows.append(np.stack([ii[keep], jj[keep]], axis=1))
    if not rows:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.concatenate(rows, axis=0)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return np.ascontiguousarray(pairs[order], dtype=np.int64)


def sample_graph(params: ModelParams,
                 rng: np.random.Generator | None = None) -> ColoredGeometricGraph:
    """Draw one colored geometric random graph.

    Points are i.i.d. uniform on the torus, colors follow the color law,
    and edges obey the calibrated radius rule. Deterministic given the
    params seed; pass `rng` to draw replicates from a derived stream.
    """
    radii = params.radii()
    if params.n > 1 and np.any(radii >= 0.5):
        raise ValueError(
            "connection radius >= 1/2 exceeds the torus injectivity scale; "
            "reduce lambda or increase n")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    points = rng.random((params.n, params.d))
    colors = _sample_colors(params, rng)
    edges = _edges_kdtree(points, colors, radii)
    return ColoredGeometricGraph(points, colors, params.alphabet, edges,
                                 params=params)


def sample_graph_pair(params: ModelParams, coupling: str = "shared_points",
                      rng: np.random.Generator | None = None
                      ) -> tuple[ColoredGeometricGraph, ColoredGeometricGraph]:
    """Draw a pair of processes for joint statistics.

    "shared_points": one point cloud, two independent colorings, each
    process filtering its own edges through its own colors (so a
    color-independent kernel yields one shared edge set). "independent":
    two fully independent graphs. Views of the pair are matched by vertex
    index either way.
    """
    if coupling not in ("shared_points", "independent"):
        raise ValueError(f"unknown coupling {coupling!r}")
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if coupling == "independent":
        return sample_graph(params, rng=rng), sample_graph(params, rng=rng)
    radii = params.radii()
    if params.n > 1 and np.any(radii >= 0.5):
        raise ValueError(
            "connection radius >= 1/2 exceeds the torus injectivity scale; "
            "reduce lambda or increase n")
    points = rng.random((params.n, params.d))
    graphs = []
    for _ in range(2):
        colors = _sample_colors(params, rng)
        edges = _edges_kdtree(points, colors, radii)
        graphs.append(ColoredGeometricGraph(points, colors, params.alphabet,
                                            edges, params=params))
    return graphs[0], graphs[1]


def verify_edges(g: ColoredGeometricGraph,
                 params: ModelParams | None = None) -> bool:
    """Re-check the full adjacency with the O(n^2) scan."""
    params = params if params is not None else g.params
    if params is None:
        raise ValueError("no model parameters available for verification")
    expected = edges_by_scan(g.points, g.colors, params.radii())
    return g.edges.shape == expected.shape and bool(np.array_equal(g.edges, expected))


# --- plain-text graph format -------------------------------------------------
#
# header:   d n |X| label_1 ... label_k
# vertices: index color coord_1 ... coord_d     (17 significant digits)
# edges:    u v


def graph_to_text(g: ColoredGeometricGraph) -> str:
    lines = [f"{g.d} {g.n} {g.k} " + " ".join(g.alphabet)]
    for i in range(g.n):
        coords = " ".join(f"{x:.17g}" for x in g.points[i])
        lines.append(f"{i} {g.alphabet[g.colors[i]]} {coords}")
    for u, v in g.edges:
        lines.append(f"{u} {v}")
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> ColoredGeometricGraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty graph file")
    head = lines[0].split()
    d, n, k = int(head[0]), int(head[1]), int(head[2])
    alphabet = tuple(head[3:])
    if len(alphabet) != k:
        raise ValueError("alphabet labels do not match declared size")
    code = {a: i for i, a in enumerate(alphabet)}
    points = np.zeros((n, d))
    colors = np.zeros(n, dtype=np.int64)
    for i in range(n):
        parts = lines[1 + i].split()
        idx = int(parts[0])
        if idx != i:
            raise ValueError(f"vertex lines out of order at {idx}")
        colors[i] = code[parts[1]]
        points[i] = [float(x) for x in parts[2:2 + d]]
    edges = []
    for ln in lines[1 + n:]:
        u, v = (int(x) for x in ln.split())
        edges.append((u, v))
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return ColoredGeometricGraph(points, colors, alphabet, edges)


def save_graph(g: ColoredGeometricGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(graph_to_text(g))


def load_graph(path) -> ColoredGeometricGraph:
    with open(path) as fh:
        return graph_from_text(fh.read())
