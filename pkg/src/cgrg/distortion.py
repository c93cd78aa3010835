"""Single-letter distortion functions on local-view pairs.

A distortion is a bounded nonnegative function of two local views. The
per-graph average sigma_n is the arithmetic mean of per-vertex distortions
and equals the integral of the distortion against the joint empirical
measure. Built-in kinds: Hamming on colors, squared total-degree
difference, and explicit tables on the truncated support.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .empirical import (DEFAULT_CAP, LocalView, Measure, enumerate_views,
                        parse_view, render_atom, view_ids)

__all__ = [
    "DistortionFn",
    "hamming_color",
    "squared_degree",
    "make_hamming",
    "make_squared_degree",
    "make_table",
    "table_from_csv",
    "table_to_csv",
    "sigma_n",
    "in_ball",
    "measure_inner_product",
]


def hamming_color(vx: LocalView, vy: LocalView) -> float:
    """1 if the two views carry different colors, else 0."""
    return 0.0 if vx.color == vy.color else 1.0


def squared_degree(vx: LocalView, vy: LocalView) -> float:
    """Squared difference of total (truncated) degrees."""
    diff = sum(vx.counts) - sum(vy.counts)
    return float(diff * diff)


@dataclass
class DistortionFn:
    """A distortion kind plus optional explicit table.

    kind : "hamming_color", "squared_degree" or "table"
    table : map (LocalView, LocalView) -> value; required for table kind
        and expected to cover the full truncated support it is used on
    """

    kind: str
    table: dict | None = None
    _dense_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("hamming_color", "squared_degree", "table"):
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        if self.kind == "table":
            if not self.table:
                raise ValueError("table kind requires a nonempty table")
            for value in self.table.values():
                if value < 0:
                    raise ValueError("distortion values must be nonnegative")

    def __call__(self, vx: LocalView, vy: LocalView) -> float:
        if self.kind == "hamming_color":
            return hamming_color(vx, vy)
        if self.kind == "squared_degree":
            return squared_degree(vx, vy)
        try:
            return float(self.table[(vx, vy)])
        except KeyError:
            raise KeyError(f"table distortion undefined at "
                           f"({render_atom(vx)}, {render_atom(vy)})") from None

    @property
    def is_symmetric(self) -> bool:
        if self.kind in ("hamming_color", "squared_degree"):
            return True
        return all(self.table.get((b, a)) == v for (a, b), v in self.table.items())

    def bound(self, alphabet: Sequence[str], cap: int = DEFAULT_CAP) -> float:
        """Supremum over the truncated support."""
        if self.kind == "hamming_color":
            return 1.0 if len(alphabet) > 1 else 0.0
        if self.kind == "squared_degree":
            return float(len(alphabet) * cap) ** 2
        return max(self.table.values())

    def matrix(self, views_x: Sequence[LocalView],
               views_y: Sequence[LocalView] | None = None) -> np.ndarray:
        """Dense value matrix over two view lists."""
        views_y = views_x if views_y is None else views_y
        if len(views_x) * len(views_y) > 50_000_000:
            raise ValueError("view-pair table too large; reduce the cap "
                             "or the alphabet")
        if self.kind == "hamming_color":
            cx = np.array([v.color for v in views_x])
            cy = np.array([v.color for v in views_y])
            return (cx[:, None] != cy[None, :]).astype(float)
        if self.kind == "squared_degree":
            tx = np.array([sum(v.counts) for v in views_x], dtype=float)
            ty = np.array([sum(v.counts) for v in views_y], dtype=float)
            diff = tx[:, None] - ty[None, :]
            return diff * diff
        out = np.empty((len(views_x), len(views_y)))
        for i, vx in enumerate(views_x):
            for j, vy in enumerate(views_y):
                out[i, j] = self(vx, vy)
        return out

    def dense(self, alphabet: Sequence[str], cap: int) -> np.ndarray:
        """Value matrix over the full truncated support, cached per context."""
        key = (tuple(alphabet), cap)
        cached = self._dense_cache.get(key)
        if cached is None:
            cached = self.matrix(enumerate_views(alphabet, cap))
            self._dense_cache[key] = cached
        return cached

    def batch(self, colors_x: np.ndarray, counts_x: np.ndarray,
              colors_y: np.ndarray, counts_y: np.ndarray,
              alphabet: Sequence[str] | None = None,
              cap: int = DEFAULT_CAP) -> np.ndarray:
        """Vectorized per-vertex values for paired view arrays.

        The y-side arrays may carry a leading batch axis. Table kind needs
        the (alphabet, cap) context to resolve ids into its dense matrix.
        """
        if self.kind == "hamming_color":
            return (colors_x != colors_y).astype(float)
        if self.kind == "squared_degree":
            diff = (counts_x.sum(axis=-1) - counts_y.sum(axis=-1)).astype(float)
            return diff * diff
        if alphabet is None:
            raise ValueError("table distortion needs the alphabet context")
        dense = self.dense(alphabet, cap)
        ids_x = view_ids(colors_x, counts_x, cap)
        ids_y = view_ids(colors_y, counts_y, cap)
        return dense[ids_x, ids_y]


def make_hamming() -> DistortionFn:
    return DistortionFn("hamming_color")


def make_squared_degree() -> DistortionFn:
    return DistortionFn("squared_degree")


def make_table(table: dict) -> DistortionFn:
    return DistortionFn("table", table=dict(table))


def table_from_csv(path) -> DistortionFn:
    """Load a table distortion; columns view_x, view_y, value."""
    table = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["view_x", "view_y", "value"]:
            raise ValueError("unexpected distortion CSV header")
        for row in reader:
            table[(parse_view(row[0]), parse_view(row[1]))] = float(row[2])
    return make_table(table)


def table_to_csv(fn: DistortionFn, path) -> None:
    if fn.kind != "table":
        raise ValueError("only table distortions are serialized")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["view_x", "view_y", "value"])
        for (vx, vy) in sorted(fn.table, key=lambda p: (render_atom(p[0]),
                                                        render_atom(p[1]))):
            writer.writerow([render_atom(vx), render_atom(vy),
                             f"{fn.table[(vx, vy)]:.17g}"])


def sigma_n(xs: Sequence[LocalView], ys: Sequence[LocalView],
            fn: DistortionFn) -> float:
    """Average per-vertex distortion between two view sequences."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) == 0:
        raise ValueError("empty view sequences")
    return math.fsum(fn(vx, vy) for vx, vy in zip(xs, ys)) / len(xs)


def in_ball(xs: Sequence[LocalView], ys: Sequence[LocalView],
            fn: DistortionFn, alpha: float) -> bool:
    """Whether ys lies in the distortion ball of radius alpha around xs."""
    return sigma_n(xs, ys, fn) <= alpha


def measure_inner_product(fn: DistortionFn, mu: Measure) -> float:
    """Integral of the distortion against a measure on view pairs."""
    return math.fsum(w * fn(a, b) for (a, b), w in mu.items())
