"""Two-class sensor-network topologies: limits, thresholds, and fitting.

Sensor deployments carry two node classes, SG (sense, process, and relay)
and SI (sense and relay only). The limiting ordered-pair link intensity of
the model is omega(a,b) = v_d * lambda(a,b) * pi(a) * pi(b); the
squared-degree rate-distortion function degenerates to a step at a
threshold built from the intensity matrix. Real topologies load from node
and link CSV files and are fitted back to model parameters.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .empirical import TypePair, poisson_gof
from .graphs import ColoredGeometricGraph, ModelParams, ball_volume_coefficient

__all__ = [
    "WsnDataset",
    "WsnFit",
    "omega_limit",
    "rd_threshold",
    "rd_step",
    "fit_from_dataset",
    "dataset_from_graph",
    "load_dataset",
    "save_dataset",
]

SG = "SG"
SI = "SI"


@dataclass(frozen=True)
class WsnDataset:
    """Node/link topology with coordinates normalized to the unit torus."""

    ids: tuple[str, ...]
    types: tuple[str, ...]
    coords: np.ndarray
    links: tuple[tuple[str, str], ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        types = tuple(str(t) for t in self.types)
        coords = np.asarray(self.coords, dtype=float)
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be distinct")
        if len(types) != len(ids) or coords.shape[0] != len(ids):
            raise ValueError("ids, types and coords must align")
        if coords.size and (np.any(coords < 0.0) or np.any(coords >= 1.0)):
            raise ValueError("coordinates must be normalized to [0, 1)")
        known = set(ids)
        links = tuple((str(u), str(v)) for u, v in self.links)
        for u, v in links:
            if u == v:
                raise ValueError(f"self-link at node {u!r}")
            if u not in known or v not in known:
                raise ValueError(f"link references unknown node: {u!r}-{v!r}")
        coords = coords.copy()
        coords.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "links", links)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.coords.shape[1] if self.coords.ndim == 2 else 0

    def index(self) -> dict[str, int]:
        return {i: k for k, i in enumerate(self.ids)}


def _normalize_coords(raw: np.ndarray) -> tuple[np.ndarray, dict]:
    """Map a raw bounding box onto [0,1)^d; record box and per-axis scale."""
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = (raw - lo) / (span * (1.0 + 1e-9))
    meta = {
        "bounding_box_low": [float(x) for x in lo],
        "bounding_box_high": [float(x) for x in hi],
        "axis_scale": [float(x) for x in span],
        "anisotropic": bool(span.max() > span.min() * (1 + 1e-12)),
    }
    return scaled, meta


def load_dataset(nodes_path, links_path, normalize: bool = True,
                 source: str = "") -> WsnDataset:
    """Read nodes (id,type,x_1,...,x_d) and links (id_u,id_v) CSV files."""
    ids, types, rows = [], [], []
    with open(nodes_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id", "type"]:
            raise ValueError("node CSV must start with columns id,type")
        d = len(header) - 2
        for row in reader:
            ids.append(row[0])
            types.append(row[1])
            rows.append([float(x) for x in row[2:2 + d]])
    coords = np.asarray(rows, dtype=float).reshape(len(ids), d)
    links = []
    with open(links_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["id_u", "id_v"]:
            raise ValueError("link CSV must start with columns id_u,id_v")
        for row in reader:
            links.append((row[0], row[1]))
    meta = {"source": source or str(nodes_path)}
    if normalize and len(ids):
        coords, box_meta = _normalize_coords(coords)
        meta.update(box_meta)
    return WsnDataset(tuple(ids), tuple(types), coords, tuple(links), meta)


def save_dataset(ds: WsnDataset, nodes_path, links_path) -> None:
    with open(nodes_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "type"] + [f"x_{i + 1}" for i in range(ds.d)])
        for i in range(ds.n):
            writer.writerow([ds.ids[i], ds.types[i]]
                            + [f"{x:.17g}" for x in ds.coords[i]])
    with open(links_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id_u", "id_v"])
        for u, v in ds.links:
            writer.writerow([u, v])


def dataset_from_graph(g: ColoredGeometricGraph,
                       source: str = "synthetic") -> WsnDataset:
    """Wrap a sampled graph as a dataset (colors become node types)."""
    ids = tuple(f"v{i}" for i in range(g.n))
    types = tuple(g.alphabet[c] for c in g.colors)
    links = tuple((ids[u], ids[v]) for u, v in g.edges)
    return WsnDataset(ids, types, g.points, links, {"source": source})


def omega_limit(lam: np.ndarray, pi: np.ndarray, d: int,
                alphabet=(SG, SI)) -> TypePair:
    """Limiting ordered-pair intensity v_d * lambda(a,b) * pi(a) * pi(b)."""
    lam = np.asarray(lam, dtype=float)
    pi = np.asarray(pi, dtype=float)
    v_d = ball_volume_coefficient(d)
    omega = v_d * lam * np.outer(pi, pi)
    return TypePair(tuple(alphabet), pi, omega)


def rd_threshold(tp: TypePair) -> float:
    """2*omega(SG,SI) + omega(SG,SG) + omega(SI,SI) + 2*omega(SI,SG)."""
    if set(tp.alphabet) != {SG, SI}:
        raise ValueError(f"alphabet must be {{SG, SI}}, got {tp.alphabet}")
    g, i = tp.index(SG), tp.index(SI)
    om = tp.omega
    return float(2.0 * om[g, i] + om[g, g] + om[i, i] + 2.0 * om[i, g])


def rd_step(alpha: float, threshold: float) -> float:
    """Step rate-distortion value: 0 at and above the threshold, else +inf."""
    return 0.0 if alpha >= threshold else math.inf


@dataclass
class WsnFit:
    """Model parameters fitted from a topology, with diagnostics.

    lam_hat entries are NaN where the fit is undetermined (a type pair
    with no mass); `missing` lists those pairs. `gof` holds one row per
    ordered type pair: observed neighbor counts tested against the
    Poisson law implied by the fitted intensities.
    """

    alphabet: tuple[str, ...]
    n: int
    pi_hat: np.ndarray
    lam_hat: np.ndarray
    omega_hat: TypePair
    threshold: float | None
    residual: float
    gof: list[dict]
    missing: list[tuple[str, str]]

    def to_json(self) -> str:
        def clean(x):
            return None if (isinstance(x, float) and math.isnan(x)) else x

        return json.dumps({
            "alphabet": list(self.alphabet),
            "n": self.n,
            "pi_hat": [float(x) for x in self.pi_hat],
            "lambda_hat": [[clean(float(x)) for x in row]
                           for row in self.lam_hat],
            "omega_hat": [[float(x) for x in row]
                          for row in self.omega_hat.omega],
            "rd_threshold": self.threshold,
            "residual": self.residual,
            "missing_pairs": [list(p) for p in self.missing],
            "gof": self.gof,
        }, indent=2, sort_keys=True)

    def model_params(self, d: int, seed: int = 0) -> ModelParams:
        if self.missing:
            raise ValueError(f"fit incomplete for pairs {self.missing}")
        return ModelParams(d, self.n, self.alphabet, self.pi_hat,
                           self.lam_hat, seed)


def fit_from_dataset(ds: WsnDataset, d: int | None = None) -> WsnFit:
    """Fit (pi, lambda) from type frequencies and ordered link counts.

    pi_hat is the empirical type law; omega_hat the ordered-pair link
    intensity; lambda_hat inverts the limit formula entrywise, guarded
    where a type pair carries no mass. Goodness of fit compares each
    type pair's neighbor-count histogram to the implied Poisson law.
    """
    if ds.n == 0:
        raise ValueError("empty dataset")
    d = ds.d if d is None else d
    alphabet = tuple(sorted(set(ds.types)))
    code = {a: i for i, a in enumerate(alphabet)}
    k = len(alphabet)
    type_codes = np.array([code[t] for t in ds.types])
    pi_hat = np.bincount(type_codes, minlength=k).astype(float) / ds.n

    idx = ds.index()
    omega = np.zeros((k, k))
    counts = np.zeros((ds.n, k), dtype=np.int64)
    for u, v in ds.links:
        iu, iv = idx[u], idx[v]
        a, b = type_codes[iu], type_codes[iv]
        omega[a, b] += 1.0
        omega[b, a] += 1.0
        counts[iu, b] += 1
        counts[iv, a] += 1
    omega /= ds.n
    omega_hat = TypePair(alphabet, pi_hat, omega)

    v_d = ball_volume_coefficient(d)
    lam_hat = np.full((k, k), np.nan)
    missing = []
    for a in range(k):
        for b in range(k):
            denom = v_d * pi_hat[a] * pi_hat[b]
            if denom > 0:
                lam_hat[a, b] = omega[a, b] / denom
            else:
                missing.append((alphabet[a], alphabet[b]))

    threshold = None
    if set(alphabet) == {SG, SI}:
        threshold = rd_threshold(omega_hat)

    defined = ~np.isnan(lam_hat)
    if defined.any():
        back = v_d * np.where(defined, lam_hat, 0.0) * np.outer(pi_hat, pi_hat)
        residual = float(np.max(np.abs(back[defined] - omega[defined])))
    else:
        residual = float("nan")

    gof = []
    for a in range(k):
        sel = type_codes == a
        if not sel.any():
            continue
        for b in range(k):
            intensity = omega[a, b] / pi_hat[a]
            stat, pval, dof = poisson_gof(counts[sel, b], intensity)
            gof.append({
                "type_x": alphabet[a], "type_neighbor": alphabet[b],
                "intensity": float(intensity), "chi_square": stat,
                "p_value": pval, "dof": dof,
            })
    return WsnFit(alphabet, ds.n, pi_hat, lam_hat, omega_hat, threshold,
                  residual, gof, missing)
