"""Batch command-line front end.

Every pipeline is a subcommand driven by a config file; outputs are CSV
(with header rows, +inf serialized as the literal token `inf`) plus a JSON
run manifest holding the fully resolved config, so any run can be
reproduced bit-identically from its manifest alone. Nothing is written
outside the configured output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config_file, parse_config
from .empirical import (empirical_measure, local_views, measure_to_csv,
                        poisson_gof, total_variation, type_pair_of_graph)
from .graphs import graph_to_text, sample_graph
from .kernel import PoissonFiberKernel
from .ratedist import (EmpiricalCumulant, make_single_letter_cumulant,
                       mc_ball_exponent, rd_curve)
from .wsn import fit_from_dataset, load_dataset, omega_limit

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) if isinstance(x, float) else x
                             for x in row])


def _write_manifest(cfg: RunConfig) -> None:
    manifest = {
        "tool": "cgrg",
        "version": __version__,
        "experiment": cfg.experiment,
        "config": cfg.resolved,
    }
    path = os.path.join(cfg.out_dir, "manifest.json")
    with open(path, "w") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _limit_kernel(cfg: RunConfig) -> PoissonFiberKernel:
    model = cfg.model
    tp = omega_limit(model.lam, model.pi, model.d, model.alphabet)
    return PoissonFiberKernel(tp, cap=cfg.sampling["cap"])


def run_generate(cfg: RunConfig, threads: int) -> None:
    for i in range(cfg.sampling["graphs"]):
        rng = np.random.default_rng((cfg.seed, i))
        g = sample_graph(cfg.model, rng=rng)
        with open(os.path.join(cfg.out_dir, f"graph_{i:04d}.txt"), "w") as fh:
            fh.write(graph_to_text(g))


def run_stats(cfg: RunConfig, threads: int) -> None:
    cap = cfg.sampling["cap"]
    g = sample_graph(cfg.model)
    tp = type_pair_of_graph(g)
    with open(os.path.join(cfg.out_dir, "type_pair.json"), "w") as fh:
        fh.write(tp.to_json() + "\n")
    mu = empirical_measure(local_views(g, cap), g.alphabet)
    measure_to_csv(mu, os.path.join(cfg.out_dir, "views.csv"))
    counts = np.minimum(g.neighbor_color_counts(), cap)
    rows = []
    for a in range(g.k):
        sel = g.colors == a
        if not sel.any():
            continue
        for b in range(g.k):
            intensity = tp.omega[a, b] / tp.pi[a]
            stat, pval, dof = poisson_gof(counts[sel, b], intensity)
            rows.append([g.alphabet[a], g.alphabet[b], float(intensity),
                         float(stat), float(pval), dof])
    _write_csv(os.path.join(cfg.out_dir, "gof.csv"),
               ["color", "neighbor_color", "intensity", "chi_square",
                "p_value", "dof"], rows)


def run_slln(cfg: RunConfig, threads: int) -> None:
    cap = cfg.sampling["cap"]
    rows = []
    medians = []
    for n in cfg.sampling["n_values"]:
        params = cfg.model.with_n(int(n))
        tvs = []
        for s in range(cfg.sampling["seeds"]):
            rng = np.random.default_rng((cfg.seed, int(n), s))
            g = sample_graph(params, rng=rng)
            mu = empirical_measure(local_views(g, cap), g.alphabet)
            kernel = PoissonFiberKernel(type_pair_of_graph(g), cap=cap)
            tv = total_variation(mu, kernel.measure())
            tvs.append(tv)
            rows.append([int(n), s, float(tv)])
        medians.append([int(n), float(np.median(tvs))])
    _write_csv(os.path.join(cfg.out_dir, "slln.csv"),
               ["n", "seed", "tv"], rows)
    _write_csv(os.path.join(cfg.out_dir, "slln_summary.csv"),
               ["n", "median_tv"], medians)


def run_cumulant(cfg: RunConfig, threads: int) -> None:
    s = cfg.sampling
    kernel = _limit_kernel(cfg)
    single = make_single_letter_cumulant(cfg.sigma, kernel)
    est = EmpiricalCumulant(cfg.sigma, cfg.model, s["m_outer"], s["k_inner"],
                            cap=s["cap"], coupling=s["coupling"],
                            threads=threads)
    rows = [[float(t), float(single(t)), float(est.value(t)),
             float(est.stderr(t))] for t in s["t_values"]]
    _write_csv(os.path.join(cfg.out_dir, "cumulant.csv"),
               ["t", "single_letter", "empirical", "stderr"], rows)


def run_rd_curve(cfg: RunConfig, threads: int) -> None:
    s = cfg.sampling
    kernel = _limit_kernel(cfg)
    curve = rd_curve(cfg.sigma, kernel, s["alphas"], cfg.model,
                     reps=(s["m_outer"], s["k_inner"]), t_max=s["t_max"],
                     coupling=s["coupling"])
    _write_csv(os.path.join(cfg.out_dir, "rd_curve.csv"),
               ["alpha", "R", "stderr"], curve.to_rows())
    brackets = {
        "alpha_min": curve.alpha_min,
        "alpha_av": curve.alpha_av,
        "alpha_min_inf_flag": curve.alpha_min_inf_flag,
        "min_bias_delta": curve.brackets.min_bias_delta,
        "m_outer": curve.brackets.m_outer,
        "k_inner": curve.brackets.k_inner,
    }
    with open(os.path.join(cfg.out_dir, "brackets.json"), "w") as fh:
        fh.write(json.dumps(brackets, indent=2, sort_keys=True) + "\n")


def run_ball(cfg: RunConfig, threads: int) -> None:
    s = cfg.sampling
    res = mc_ball_exponent(cfg.model, cfg.sigma, s["alpha"], s["k_ball"],
                           cap=s["cap"], coupling=s["coupling"],
                           threads=threads)
    _write_csv(os.path.join(cfg.out_dir, "ball.csv"),
               ["alpha", "exponent", "ci_low", "ci_high", "hits", "k"],
               [[res.alpha, res.estimate, res.ci_low, res.ci_high,
                 res.hits, res.k_inner]])
    if res.warning:
        print(f"warning: {res.warning}", file=sys.stderr)


def run_wsn_fit(cfg: RunConfig, threads: int) -> None:
    ds = load_dataset(cfg.input["nodes_path"], cfg.input["links_path"],
                      normalize=cfg.input.get("normalize", True))
    fit = fit_from_dataset(ds, cfg.input.get("d"))
    with open(os.path.join(cfg.out_dir, "fit.json"), "w") as fh:
        fh.write(fit.to_json() + "\n")
    rows = [[r["type_x"], r["type_neighbor"], float(r["intensity"]),
             float(r["chi_square"]), float(r["p_value"]), r["dof"]]
            for r in fit.gof]
    _write_csv(os.path.join(cfg.out_dir, "fit_gof.csv"),
               ["type_x", "type_neighbor", "intensity", "chi_square",
                "p_value", "dof"], rows)


_RUNNERS = {
    "generate": run_generate,
    "stats": run_stats,
    "slln-check": run_slln,
    "cumulant": run_cumulant,
    "rd-curve": run_rd_curve,
    "ball-exponent": run_ball,
    "wsn-fit": run_wsn_fit,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgrg",
        description="colored geometric random graph experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="TOML config path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the model seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for replicate sampling")
        p.add_argument("--out", default=None, help="output directory")
    p = sub.add_parser("rerun", help="re-run an experiment from its manifest")
    p.add_argument("manifest", help="manifest.json from a previous run")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    # --out is resolved against the caller's working directory; only the
    # config file's own [output] dir is config-relative
    out_override = os.path.abspath(args.out) if args.out else None
    try:
        if args.command == "rerun":
            with open(args.manifest) as fh:
                manifest = json.load(fh)
            cfg = parse_config(manifest.get("config", {}),
                               experiment=manifest.get("experiment"),
                               base_dir=os.path.dirname(
                                   os.path.abspath(args.manifest)),
                               out_override=out_override)
        else:
            data = load_config_file(args.config)
            cfg = parse_config(data, experiment=args.command,
                               base_dir=os.path.dirname(
                                   os.path.abspath(args.config)),
                               seed_override=args.seed,
                               out_override=out_override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        _RUNNERS[cfg.experiment](cfg, max(1, args.threads))
        _write_manifest(cfg)
    except ValueError as exc:
        print(f"infeasible experiment: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
