"""JSON run configuration: defaults, schema validation and seed overrides."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

DEFAULTS = {
    "oracle": {"blend_normal": 0.7, "geom_scale": 1.0, "k": 100, "grid_min": 0.0, "grid_max": 0.04,
               "ranges": None, "n_train": 1669, "n_test": 200},
    "surrogate": {"T": 30, "feature_dim": 512, "lengthscale": 2.5, "ridge": 1e-3,
                  "gamma": "fit", "sigma_floor": 1e-3},
    "pso": {"swarm_size": 80, "c1": 1.49445, "c2": 1.49445, "w": 0.729, "alpha": 4.0,
            "max_iters": 300, "lam": 1.0, "t_stabilizer": 1e-3},
    "chain": {"burn_in": 20, "n_keep": 50, "prior_alpha": 6.0, "step_fraction": 0.05,
              "psi": None, "max_resample": 1000, "shrinkage": 0.5},
    "likelihood": {"n_mc": 4096},
    "ga": {"population": 100, "generations": 100, "crossover_rate": 0.9, "mutation_rate": 0.1,
           "mutation_scale": 0.1, "elitism": 2},
    "benchmark": {"n_targets": 10, "tolerance_fraction": 0.1, "n_designs": 50},
    "seeds": {"data": 1, "test": 2, "train": 0, "design": 0},
    "paths": {"dataset": "train.csv", "test_dataset": "test.csv", "model": "model.npz",
              "target": "target.json", "designs": "designs.csv", "out_dir": "."},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}
_prob = {"type": "number", "minimum": 0, "maximum": 1}


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "oracle": _section({
            "blend_normal": _prob, "geom_scale": _pos, "k": {"type": "integer", "minimum": 2},
            "grid_min": _num, "grid_max": _pos,
            "ranges": {"oneOf": [{"type": "null"}, {
                "type": "object", "required": ["low", "high"], "additionalProperties": False,
                "properties": {"low": {"type": "array", "items": _num},
                               "high": {"type": "array", "items": _num}}}]},
            "n_train": {"type": "integer"}, "n_test": {"type": "integer"}}),
        "surrogate": _section({
            "T": {"type": "integer", "minimum": 2}, "feature_dim": _count, "lengthscale": _pos,
            "ridge": _pos, "sigma_floor": _pos,
            "gamma": {"oneOf": [{"const": "fit"}, {"type": "number", "minimum": 0}]}}),
        "pso": _section({
            "swarm_size": {"type": "integer", "minimum": 2}, "c1": _pos, "c2": _pos, "w": _pos,
            "alpha": _pos, "max_iters": _count, "lam": {"type": "number", "minimum": 0},
            "t_stabilizer": _pos}),
        "chain": _section({
            "burn_in": {"type": "integer", "minimum": 0}, "n_keep": _count, "prior_alpha": _pos,
            "step_fraction": _pos, "psi": {"oneOf": [{"type": "null"}, _pos]},
            "max_resample": _count, "shrinkage": _prob}),
        "likelihood": _section({"n_mc": {"type": "integer", "minimum": 2}}),
        "ga": _section({
            "population": {"type": "integer", "minimum": 2},
            "generations": {"type": "integer", "minimum": 0},
            "crossover_rate": _prob, "mutation_rate": _prob,
            "mutation_scale": {"type": "number", "minimum": 0},
            "elitism": {"type": "integer", "minimum": 0}}),
        "benchmark": _section({"n_targets": _count, "tolerance_fraction": _pos, "n_designs": _count}),
        "seeds": _section({k: {"type": "integer", "minimum": 0} for k in DEFAULTS["seeds"]}),
        "paths": _section({k: {"type": "string"} for k in DEFAULTS["paths"]}),
    },
}


def merge_defaults(user: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    for section, values in user.items():
        if isinstance(values, dict) and isinstance(cfg.get(section), dict):
            cfg[section].update(values)
        else:
            cfg[section] = values
    return cfg


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return cfg


def apply_seed_overrides(cfg: dict, overrides) -> dict:
    """Apply ``NAME=VALUE`` strings to the seeds section."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or []:
        name, sep, value = item.partition("=")
        if not sep or name not in DEFAULTS["seeds"]:
            raise ConfigError(f"bad seed override {item!r}; expected one of "
                              f"{sorted(DEFAULTS['seeds'])}=INT")
        try:
            cfg["seeds"][name] = int(value)
        except ValueError:
            raise ConfigError(f"seed {name} must be an integer, got {value!r}") from None
    return cfg


def load_config(path, overrides=None) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    validate(raw)
    cfg = validate(apply_seed_overrides(merge_defaults(raw), overrides))
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def resolve_path(cfg: dict, key: str, out_dir=None) -> Path:
    """Relative paths resolve against ``out_dir`` (flag) or ``paths.out_dir``."""
    p = Path(cfg["paths"][key])
    if p.is_absolute():
        return p
    return Path(out_dir if out_dir is not None else cfg["paths"]["out_dir"]) / p
