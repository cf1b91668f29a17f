"""Run configuration: strict JSON schema, defaults, and object builders."""

from __future__ import annotations

import copy
import hashlib
import json
import math

import jsonschema

from .analysis import InitSpec
from .dynamics import IntegratorConfig, RK4Fixed, RK45Adaptive
from .games import kernel_from_dict
from .measures import density_from_dict
from .protocols import RevisionProtocol

STUDIES = ("simulate", "converge", "paralysis", "equilibrium", "bl-dist", "probe")
# legacy name of the split-offset family, still accepted in configs
INIT_ALIASES = {"paper-section-4": "split-offset"}


class ConfigError(ValueError):
    pass


_positive = {"type": "number", "exclusiveMinimum": 0}
_resolution = {"type": "integer", "minimum": 1}

_density = {
    "oneOf": [
        {"type": "object", "properties": {"kind": {"const": "uniform"}},
         "required": ["kind"], "additionalProperties": False},
        {"type": "object",
         "properties": {"kind": {"const": "piecewise"},
                        "breaks": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                        "values": {"type": "array", "items": {"type": "number", "minimum": 0},
                                   "minItems": 1}},
         "required": ["kind", "breaks", "values"], "additionalProperties": False},
    ]
}

_game = {
    "oneOf": [
        {"type": "object", "properties": {"kind": {"enum": ["anticoordination", "zero"]}},
         "required": ["kind"], "additionalProperties": False},
        {"type": "object",
         "properties": {"kind": {"const": "bump"},
                        "width": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
         "required": ["kind", "width"], "additionalProperties": False},
        {"type": "object",
         "properties": {"kind": {"const": "tabulated"},
                        "points": {"type": "array", "items": {"type": "number"}},
                        "matrix": {"type": "array",
                                   "items": {"type": "array", "items": {"type": "number"}}}},
         "required": ["kind", "points", "matrix"], "additionalProperties": False},
    ]
}

_init = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["density", "samples", "split-offset", "dirichlet", "vertex", "weights",
                          *INIT_ALIASES]},
        "density": _density,
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
        "index": {"type": "integer", "minimum": 0},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_integrator = {
    "oneOf": [
        {"type": "object",
         "properties": {"method": {"const": "rk45"}, "rel_tol": _positive, "abs_tol": _positive,
                        "dt_max": {"anyOf": [_positive, {"type": "null"}]},
                        "renorm_every": {"type": "integer", "minimum": 1},
                        "negative_clip": _positive,
                        "emit": {"type": "integer", "minimum": 2}},
         "required": ["method"], "additionalProperties": False},
        {"type": "object",
         "properties": {"method": {"const": "rk4"}, "dt": _positive,
                        "renorm_every": {"type": "integer", "minimum": 1},
                        "negative_clip": _positive,
                        "emit": {"type": "integer", "minimum": 2}},
         "required": ["method", "dt"], "additionalProperties": False},
    ]
}

_measure = {
    "type": "object",
    "properties": {"points": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
                              "minItems": 1},
                   "weights": {"type": "array", "items": {"type": "number", "minimum": 0},
                               "minItems": 1}},
    "required": ["points", "weights"],
    "additionalProperties": False,
}

_common = {
    "study": {"enum": list(STUDIES)},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "output_dir": {"type": "string"},
}

_dynamics_common = {
    "game": _game,
    "protocol": {"enum": ["replicator", "bnn", "smith"]},
    "placement": {"enum": ["endpoints", "midpoints"]},
    "integrator": _integrator,
    "init": _init,
}

_specific = {
    "simulate": ({"n": _resolution, "T": _positive}, ["game", "protocol", "n", "init", "T"]),
    "converge": ({"resolutions": {"type": "array", "items": _resolution, "minItems": 1},
                  "reference_n": {"anyOf": [_resolution, {"type": "null"}]},
                  "T": _positive},
                 ["game", "protocol", "resolutions", "init", "T"]),
    "paralysis": ({"resolutions": {"type": "array", "items": _resolution, "minItems": 1},
                   "T": _positive, "threshold": _positive, "residual_tol": _positive,
                   "t_max": _positive, "payoff_scaling": {"enum": ["none", "resolution"]}},
                  ["game", "protocol", "resolutions", "init", "T"]),
    "equilibrium": ({"n": _resolution, "residual_tol": _positive, "t_max": _positive},
                    ["game", "protocol", "n", "init"]),
    "probe": ({"game": _game, "sample_count": {"type": "integer", "minimum": 2}}, ["game"]),
    "bl-dist": ({"mu": _measure, "nu": _measure}, []),
}

DEFAULTS = {
    "seed": 0,
    "output_dir": "evodyn-out",
    "placement": "endpoints",
    "integrator": {"method": "rk45", "rel_tol": 1e-8, "abs_tol": 1e-10, "dt_max": 0.1,
                   "renorm_every": 16, "negative_clip": 1e-12, "emit": 200},
    "reference_n": None,
    "threshold": 0.1,
    "residual_tol": 1e-10,
    "t_max": 1e6,
    "payoff_scaling": "none",
    "sample_count": 2000,
}


def schema_for(study: str) -> dict:
    props = dict(_common)
    extra, required = _specific[study]
    if study not in ("probe", "bl-dist"):
        props.update(_dynamics_common)
    props.update(extra)
    return {"type": "object", "properties": props, "required": required,
            "additionalProperties": False}


def resolve(raw: dict, study: str, seed_override=None) -> dict:
    """Validate ``raw`` for ``study`` and fill defaults. Raises ``ConfigError``."""
    if study not in STUDIES:
        raise ConfigError(f"unknown study {study!r}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("study", study) != study:
        raise ConfigError(f"config is for study {raw['study']!r}, not {study!r}")
    try:
        jsonschema.validate(raw, schema_for(study))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None

    cfg = copy.deepcopy(raw)
    cfg["study"] = study
    allowed = schema_for(study)["properties"]
    for key, value in DEFAULTS.items():
        if key in allowed and key not in cfg:
            cfg[key] = copy.deepcopy(value)
    if "integrator" in cfg:
        base = DEFAULTS["integrator"] if cfg["integrator"]["method"] == "rk45" else {
            "renorm_every": 16, "negative_clip": 1e-12, "emit": 200}
        cfg["integrator"] = {**base, **cfg["integrator"]}
    if "init" in cfg:
        cfg["init"]["kind"] = INIT_ALIASES.get(cfg["init"]["kind"], cfg["init"]["kind"])
    if seed_override is not None:
        cfg["seed"] = int(seed_override)

    try:
        build(cfg)
    except (ValueError, KeyError, IndexError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def fingerprint(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_integrator(block: dict, t_end: float = 1.0) -> IntegratorConfig:
    if block["method"] == "rk4":
        method = RK4Fixed(block["dt"])
    else:
        dt_max = block.get("dt_max")
        method = RK45Adaptive(block["rel_tol"], block["abs_tol"],
                              math.inf if dt_max is None else dt_max)
    return IntegratorConfig(method=method, t_end=t_end, renorm_every=block["renorm_every"],
                            negative_clip=block["negative_clip"], emit=block["emit"])


def build_init(block: dict, seed: int) -> InitSpec:
    kind = INIT_ALIASES.get(block["kind"], block["kind"])
    kwargs = {"kind": kind, "seed": seed}
    if "density" in block:
        kwargs["density"] = density_from_dict(block["density"])
    if "epsilon" in block:
        kwargs["epsilon"] = block["epsilon"]
    if "index" in block:
        kwargs["index"] = block["index"]
    if "weights" in block:
        kwargs["weights"] = tuple(block["weights"])
    if kind in ("density", "samples") and "density" not in block:
        raise ValueError(f"init kind {kind!r} needs a density")
    return InitSpec(**kwargs)


def build(cfg: dict) -> dict:
    """Turn a resolved config into library objects (validation pass included)."""
    out = {}
    if "game" in cfg:
        out["kernel"] = kernel_from_dict(cfg["game"])
    if "protocol" in cfg:
        out["protocol"] = RevisionProtocol.named(cfg["protocol"])
    if "integrator" in cfg:
        out["integrator"] = build_integrator(cfg["integrator"], cfg.get("T", 1.0))
    if "init" in cfg:
        out["init"] = build_init(cfg["init"], cfg["seed"])
        for n in cfg.get("resolutions", []) + [cfg[k] for k in ("n", "reference_n") if cfg.get(k)]:
            out["init"].build(n, cfg["placement"])
    if cfg.get("reference_n") is not None and cfg["resolutions"][-1] > cfg["reference_n"]:
        raise ValueError("resolutions must not exceed reference_n")
    if "resolutions" in cfg and sorted(set(cfg["resolutions"])) != cfg["resolutions"]:
        raise ValueError("resolutions must be strictly increasing")
    return out
