"""Strict experiment configuration.

Configs are TOML (or JSON) with nested sections; every experiment names
exactly the parameters it consumes and unknown keys are fatal, so a typo
cannot silently fall back to a default. A seed is always required; there
is no wall-clock seeding. The resolved config (defaults filled in, paths
made absolute, output directory excluded) is what run manifests embed.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .distortion import DistortionFn, make_hamming, make_squared_degree, table_from_csv
from .graphs import ModelParams

__all__ = ["ConfigError", "RunConfig", "load_config_file", "parse_config",
           "EXPERIMENTS"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


EXPERIMENTS = ("generate", "stats", "slln-check", "cumulant", "rd-curve",
               "ball-exponent", "wsn-fit")

_MODEL_KEYS = {
    "d": int, "n": int, "alphabet": list, "pi": list, "lambda": list,
    "seed": int, "exact_composition": bool,
}
_MODEL_REQUIRED = ("d", "n", "alphabet", "pi", "lambda", "seed")

_DISTORTION_KEYS = {"kind": str, "table_path": str}

_INPUT_KEYS = {"nodes_path": str, "links_path": str, "d": int,
               "normalize": bool}

_OUTPUT_KEYS = {"dir": str}

# sampling keys consumed per experiment: name -> {key: (type, default)}
_SAMPLING: dict[str, dict] = {
    "generate": {"graphs": (int, 1)},
    "stats": {"cap": (int, 30)},
    "slln-check": {"cap": (int, 30), "seeds": (int, 20),
                   "n_values": (list, [500, 2000, 8000])},
    "cumulant": {"cap": (int, 30), "m_outer": (int, 50),
                 "k_inner": (int, 2000), "t_values": (list, [-1.0, 0.5, 1.0]),
                 "coupling": (str, "independent")},
    "rd-curve": {"cap": (int, 30), "m_outer": (int, 50),
                 "k_inner": (int, 2000), "alphas": (list, None),
                 "t_max": (float, 200.0), "coupling": (str, "independent")},
    "ball-exponent": {"cap": (int, 30), "alpha": (float, None),
                      "k_ball": (int, 100_000),
                      "coupling": (str, "independent")},
    "wsn-fit": {},
}
_SAMPLING_REQUIRED = {"rd-curve": ("alphas",), "ball-exponent": ("alpha",)}

_NEEDS_MODEL = ("generate", "stats", "slln-check", "cumulant", "rd-curve",
                "ball-exponent")
_NEEDS_DISTORTION = ("cumulant", "rd-curve", "ball-exponent")


def _typecheck(section: str, key: str, value, expected) -> None:
    if expected is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be a number")
        return
    if expected is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be an integer")
        return
    if not isinstance(value, expected):
        raise ConfigError(
            f"[{section}] {key} must be of type {expected.__name__}")


def _check_section(name: str, data: dict, allowed: dict,
                   required=()) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"missing key(s) in [{name}]: {missing}")
    for key, value in data.items():
        _typecheck(name, key, value, allowed[key])


@dataclass
class RunConfig:
    """A validated experiment configuration."""

    experiment: str
    model: ModelParams | None
    sigma: DistortionFn | None
    sampling: dict
    input: dict
    out_dir: str
    resolved: dict = field(repr=False)

    @property
    def seed(self) -> int:
        if self.model is not None:
            return self.model.seed
        return int(self.resolved.get("model", {}).get("seed", 0))


def load_config_file(path) -> dict:
    """Read a TOML config or a JSON manifest config."""
    text = open(path, "rb").read()
    if str(path).endswith(".json"):
        obj = json.loads(text.decode())
        # accept either a bare config or a full manifest
        return obj.get("config", obj)
    try:
        return tomllib.loads(text.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc


def _build_model(section: dict) -> ModelParams:
    alphabet = tuple(str(a) for a in section["alphabet"])
    try:
        return ModelParams(
            d=section["d"], n=section["n"], alphabet=alphabet,
            pi=np.asarray(section["pi"], dtype=float),
            lam=np.asarray(section["lambda"], dtype=float),
            seed=section["seed"],
            exact_composition=section.get("exact_composition", False))
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from exc


def _build_distortion(section: dict, base_dir: str) -> tuple[DistortionFn, dict]:
    kind = section.get("kind")
    if kind == "hamming_color":
        if "table_path" in section:
            raise ConfigError("[distortion] table_path only valid for table kind")
        return make_hamming(), {"kind": kind}
    if kind == "squared_degree":
        if "table_path" in section:
            raise ConfigError("[distortion] table_path only valid for table kind")
        return make_squared_degree(), {"kind": kind}
    if kind == "table":
        path = section.get("table_path")
        if not path:
            raise ConfigError("[distortion] table kind requires table_path")
        path = os.path.abspath(os.path.join(base_dir, path))
        try:
            return table_from_csv(path), {"kind": kind, "table_path": path}
        except OSError as exc:
            raise ConfigError(f"[distortion] cannot read table: {exc}") from exc
    raise ConfigError(f"[distortion] unknown kind {kind!r}")


def parse_config(data: dict, experiment: str | None = None,
                 base_dir: str = ".", seed_override: int | None = None,
                 out_override: str | None = None) -> RunConfig:
    """Validate a config dict and resolve defaults into a RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    known_sections = {"model", "distortion", "experiment", "sampling",
                      "input", "output"}
    unknown = set(data) - known_sections
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")

    exp_section = data.get("experiment", {})
    _check_section("experiment", exp_section, {"name": str})
    experiment = experiment or exp_section.get("name")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"choose one of {', '.join(EXPERIMENTS)}")

    resolved: dict = {"experiment": {"name": experiment}}

    model = None
    if experiment in _NEEDS_MODEL:
        if "model" not in data:
            raise ConfigError(f"experiment {experiment!r} requires [model]")
        section = dict(data["model"])
        _check_section("model", section, _MODEL_KEYS, _MODEL_REQUIRED)
        if seed_override is not None:
            section["seed"] = seed_override
        model = _build_model(section)
        resolved["model"] = {
            "d": model.d, "n": model.n, "alphabet": list(model.alphabet),
            "pi": [float(x) for x in model.pi],
            "lambda": [[float(x) for x in row] for row in model.lam],
            "seed": model.seed,
            "exact_composition": model.exact_composition,
        }
    elif "model" in data:
        raise ConfigError(f"experiment {experiment!r} does not take [model]")

    sigma = None
    if experiment in _NEEDS_DISTORTION:
        if "distortion" not in data:
            raise ConfigError(f"experiment {experiment!r} requires [distortion]")
        _check_section("distortion", data["distortion"], _DISTORTION_KEYS,
                       ("kind",))
        sigma, sigma_desc = _build_distortion(data["distortion"], base_dir)
        resolved["distortion"] = sigma_desc
    elif "distortion" in data:
        raise ConfigError(f"experiment {experiment!r} does not take [distortion]")

    sampling_spec = _SAMPLING[experiment]
    section = data.get("sampling", {})
    allowed = {k: v[0] for k, v in sampling_spec.items()}
    _check_section("sampling", section, allowed,
                   _SAMPLING_REQUIRED.get(experiment, ()))
    numeric_lists = {"n_values": int, "t_values": float, "alphas": float}
    sampling = {}
    for key, (typ, default) in sampling_spec.items():
        value = section.get(key, default)
        if value is None:
            raise ConfigError(f"missing key(s) in [sampling]: ['{key}']")
        if typ is float and isinstance(value, int):
            value = float(value)
        if key in numeric_lists:
            elem = numeric_lists[key]
            for x in value:
                if isinstance(x, bool) or not isinstance(
                        x, (int, float) if elem is float else int):
                    raise ConfigError(
                        f"[sampling] {key} entries must be "
                        f"{'numbers' if elem is float else 'integers'}")
            value = [elem(x) for x in value]
        sampling[key] = value
    if "coupling" in sampling and sampling["coupling"] not in (
            "independent", "shared_points"):
        raise ConfigError("[sampling] coupling must be 'independent' "
                          "or 'shared_points'")
    for key in ("graphs", "seeds", "m_outer", "k_inner", "k_ball", "cap"):
        if key in sampling and sampling[key] < 1:
            raise ConfigError(f"[sampling] {key} must be >= 1")
    resolved["sampling"] = {
        k: (list(v) if isinstance(v, list) else v) for k, v in sampling.items()}

    inputs = {}
    if experiment == "wsn-fit":
        if "input" not in data:
            raise ConfigError("experiment 'wsn-fit' requires [input]")
        _check_section("input", data["input"], _INPUT_KEYS,
                       ("nodes_path", "links_path"))
        inputs = dict(data["input"])
        for key in ("nodes_path", "links_path"):
            inputs[key] = os.path.abspath(os.path.join(base_dir, inputs[key]))
        inputs.setdefault("normalize", True)
        resolved["input"] = dict(inputs)
    elif "input" in data:
        raise ConfigError(f"experiment {experiment!r} does not take [input]")

    out_section = data.get("output", {})
    _check_section("output", out_section, _OUTPUT_KEYS)
    out_dir = out_override or out_section.get("dir") or "out"
    if not os.path.isabs(out_dir):
        out_dir = os.path.abspath(os.path.join(base_dir, out_dir))

    return RunConfig(experiment, model, sigma, sampling, inputs, out_dir,
                     resolved)
