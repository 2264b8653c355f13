"""Experiment configuration: schema, defaults, overrides and validation.

A configuration is a YAML mapping with a schema version, an experiment
``kind``, a master ``seed`` and four blocks (``system``, ``sampling``,
``task``, ``output``).  Missing fields are filled from per-kind defaults;
the resolved snapshot records for every leaf whether it is a reference value (``paper``),
a repository default, the file, the environment or a command-line flag.
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import yaml

from ..correlate import FAMILIES, OTOC_FAMILIES, default_n_psi

__all__ = [
    "SCHEMA_VERSION",
    "KINDS",
    "GEOMETRIES",
    "ENV_OUT_DIR",
    "ENV_WORKERS",
    "FULL_SCALE_MAX_SITES",
    "Diagnostic",
    "ConfigError",
    "load_config",
    "resolve_config",
    "validate_config",
    "config_schema",
]

SCHEMA_VERSION = 1
KINDS = ("correlators", "fisher-probe", "fisher-link", "learn-probe", "learn-link",
         "learn-geometry", "disjoint", "pheno-overlay")
GEOMETRIES = ("chain", "ring", "crossed", "weak-link-ring", "three-way")
ENV_OUT_DIR = "OTOCLAB_OUT_DIR"
ENV_WORKERS = "OTOCLAB_WORKERS"
# runs above this size need an explicit --full-scale acknowledgment
FULL_SCALE_MAX_SITES = 10

_TIMES = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}
_POS_INTS = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_POS_NUMS = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}
_GRID = {
    "type": "object",
    "properties": {
        "C": _POS_NUMS,
        "gamma": _POS_NUMS,
        "k": {"type": "array", "items": {"anyOf": [{"type": "integer", "minimum": 1},
                                                   {"const": "all"}]}, "minItems": 1},
    },
    "required": ["C", "gamma"],
    "additionalProperties": False,
}
_CORRELATOR = {
    "type": "object",
    "properties": {
        "family": {"enum": list(FAMILIES)},
        "axes": {"enum": ["XX", "ZZ"]},
        "sites": {"anyOf": [{"const": "all"}, {"type": "array", "items": {"type": "integer", "minimum": 0}}]},
        "pairs": {"anyOf": [{"const": "all"},
                            {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                                        "minItems": 2, "maxItems": 2}}]},
        "phi": {"type": "number"},
    },
    "required": ["family"],
    "additionalProperties": False,
}

_TASKS: dict[str, dict] = {
    "correlators": {"times": _TIMES, "correlators": {"type": "array", "items": _CORRELATOR, "minItems": 1}},
    "fisher-probe": {"d_values": _POS_INTS, "times": _TIMES, "crossing": {"type": ["integer", "null"], "minimum": 1},
                     "step": {"type": "number", "exclusiveMinimum": 0}, "log_scale": {"type": "boolean"},
                     "otoc": {"type": "boolean"}},
    "fisher-link": {"links": _POS_NUMS, "times": _TIMES, "radius": {"type": "integer", "minimum": 1},
                    "max_pair_distance": {"type": ["integer", "null"], "minimum": 0},
                    "step": {"type": "number", "exclusiveMinimum": 0}, "log_scale": {"type": "boolean"}},
    "learn-probe": {"d_values": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2},
                    "times": _TIMES, "n_train": {"type": "integer", "minimum": 2},
                    "n_test": {"type": "integer", "minimum": 1}, "grid": _GRID,
                    "n_folds": {"type": "integer", "minimum": 2}, "epsilon": {"type": "number", "minimum": 0}},
    "learn-link": {"links": _POS_NUMS, "times": _TIMES, "deltas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                   "cavity_g": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                   "n_train": {"type": "integer", "minimum": 2}, "n_test": {"type": "integer", "minimum": 1},
                   "radius": {"type": "integer", "minimum": 1},
                   "max_pair_distance": {"type": ["integer", "null"], "minimum": 0}, "grid": _GRID,
                   "n_folds": {"type": "integer", "minimum": 2},
                   "threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
    "learn-geometry": {"access": {"type": "array", "items": {"enum": ["probe", "global"]}, "minItems": 1},
                       "d_values": _POS_INTS, "global_d": {"type": "integer", "minimum": 1},
                       "times": _TIMES, "phis": _POS_NUMS, "n_train": {"type": "integer", "minimum": 2},
                       "n_test": {"type": "integer", "minimum": 1}, "grid": _GRID,
                       "n_folds": {"type": "integer", "minimum": 2}},
    "disjoint": {"n_values": {"type": "array", "items": {"type": "integer", "minimum": 2, "multipleOf": 2}, "minItems": 1},
                 "n_trials": {"type": "integer", "minimum": 1},
                 "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                 "n_queries": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
    "pheno-overlay": {"d_values": _POS_NUMS, "links": _POS_NUMS,
                      "params": {"type": "object", "additionalProperties": {"type": "number"}}},
}

_DRIVE = {"enum": ["floquet", "static"]}
_CAVITY = {
    "type": ["object", "null"],
    "properties": {"g": {"type": "number", "minimum": 0}, "omega": {"type": "number", "exclusiveMinimum": 0},
                   "cutoff": {"type": ["integer", "null"], "minimum": 0}},
    "required": ["g"],
    "additionalProperties": False,
}


def config_schema(kind: str) -> dict:
    """JSON schema of a configuration of the given kind."""
    return {
        "type": "object",
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "name": {"type": "string", "minLength": 1},
            "description": {"type": "string"},
            "kind": {"enum": list(KINDS)},
            "seed": {"type": "integer", "minimum": 0},
            "workers": {"type": "integer", "minimum": 1},
            "runtime": {"type": "string"},
            "system": {
                "type": "object",
                "properties": {"L": {"type": "integer", "minimum": 2},
                               "geometry": {"enum": list(GEOMETRIES)},
                               "drive": _DRIVE, "cavity": _CAVITY},
                "additionalProperties": False,
            },
            "sampling": {
                "type": "object",
                "properties": {"n_psi": {"type": ["integer", "null"], "minimum": 1},
                               "n_realizations": {"type": "integer", "minimum": 1},
                               "delta": {"type": "number", "minimum": 0}},
                "additionalProperties": False,
            },
            "task": {"type": "object", "properties": _TASKS.get(kind, {}), "additionalProperties": False},
            "output": {
                "type": "object",
                "properties": {"dir": {"type": "string"},
                               "formats": {"type": "array", "items": {"enum": ["tsv"]}}},
                "additionalProperties": False,
            },
            "full_scale": {"type": "object"},
        },
        "required": ["schema_version", "kind", "seed"],
        "additionalProperties": False,
    }


_COMMON = {
    "schema_version": SCHEMA_VERSION,
    "workers": 1,
    "system": {"L": 10, "geometry": "chain", "drive": "floquet", "cavity": None},
    "sampling": {"n_psi": None, "n_realizations": 1, "delta": 0.03},
    "output": {"dir": "runs", "formats": ["tsv"]},
}

# per-kind defaults; the task blocks mirror the reference grids where they are known
_KIND_DEFAULTS: dict[str, dict] = {
    "correlators": {"system": {"geometry": "ring"},
                    "task": {"times": [8.0], "correlators": [{"family": "AutoTOC", "axes": "ZZ"}]}},
    "fisher-probe": {"system": {"geometry": "crossed"},
                     "task": {"d_values": [1, 2, 3, 4, 5], "times": [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0],
                              "crossing": None, "step": 0.01, "log_scale": False, "otoc": True}},
    "fisher-link": {"system": {"geometry": "weak-link-ring"},
                    "task": {"links": [0.01, 0.017, 0.03, 0.06, 0.1, 0.17, 0.3, 0.6, 1.0],
                             "times": [0.5, 1.0, 1.5, 2.0, 3.0], "radius": 2, "max_pair_distance": None,
                             "step": 0.01, "log_scale": True}},
    "learn-probe": {"system": {"geometry": "crossed"},
                    "task": {"d_values": [0, 1, 2, 3, 4, 5], "times": [round(12 * i / 29, 6) for i in range(30)],
                             "n_train": 60, "n_test": 40,
                             "grid": {"C": [10.0, 30.0, 100.0],
                                      "gamma": [0.03, 0.06, 0.1, 0.3, 1.0, 3.0, 6.0, 10.0]},
                             "n_folds": 5, "epsilon": 0.1}},
    "learn-link": {"system": {"geometry": "weak-link-ring"},
                   "task": {"links": [0.01, 0.017, 0.03, 0.06, 0.1, 0.17, 0.3, 0.6, 1.0],
                            "times": [0.5, 1.0, 1.5, 2.0, 3.0], "deltas": [0.03], "cavity_g": [0.0],
                            "n_train": 100, "n_test": 60, "radius": 2, "max_pair_distance": None,
                            "grid": {"C": [0.1, 1.0, 10.0, 100.0, 1000.0],
                                     "gamma": [0.1, 0.3, 1.0, 3.0, 10.0, 30.0], "k": [8, 32, 128, "all"]},
                            "n_folds": 5, "threshold": 0.9}},
    "learn-geometry": {"system": {"geometry": "three-way"},
                       "task": {"access": ["probe", "global"], "d_values": [1, 2, 3], "global_d": 2,
                                "times": [0.5, 1.0, 2.0, 3.0, 4.0, 6.0], "phis": [0.25, 0.5, 1.0],
                                "n_train": 60, "n_test": 40,
                                "grid": {"C": [0.1, 1.0, 10.0], "gamma": [0.3, 3.0, 30.0]}, "n_folds": 4}},
    "disjoint": {"task": {"n_values": [8], "n_trials": 100, "threshold": 0.5, "n_queries": [2, 4, 8, 16]}},
    "pheno-overlay": {"task": {"d_values": [1, 2, 3, 4, 5, 6, 7, 8],
                               "links": [0.01, 0.017, 0.03, 0.06, 0.1, 0.17, 0.3],
                               "params": {"v_B": 1.0, "A": 1.0, "D": 1.0, "gamma": 1.0, "eps": 0.001,
                                          "a": 1.0, "J": 1.0}}},
}

# leaves whose defaults are reference values
_PAPER_LEAVES = {
    "system.drive", "sampling.n_psi", "sampling.delta",
    "task.grid.C", "task.grid.gamma", "task.grid.k", "task.n_folds", "task.links",
    "task.deltas", "task.times", "task.phis", "task.d_values", "task.threshold",
}


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.field}: {self.message}"


class ConfigError(ValueError):
    """Raised for configurations with schema or cross-field errors."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics if d.level == "error"))


def load_config(path: str | Path) -> dict:
    """Read a YAML configuration (no defaults applied)."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError([Diagnostic("error", "<root>", "configuration must be a mapping")])
    return data


def _merge(base: dict, extra: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict) and k not in ("params",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _leaves(tree: Mapping, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in tree.items():
        path = f"{prefix}{k}"
        if isinstance(v, Mapping) and v and k not in ("params", "cavity", "full_scale"):
            out.update(_leaves(v, path + "."))
        else:
            out[path] = v
    return out


def _set(tree: dict, path: str, value) -> None:
    keys = path.split(".")
    for k in keys[:-1]:
        tree = tree.setdefault(k, {})
    tree[keys[-1]] = value


def defaults_for(kind: str) -> dict:
    return _merge(_COMMON, _KIND_DEFAULTS.get(kind, {}))


def resolve_config(raw: Mapping, flags: Mapping | None = None, env: Mapping | None = None,
                   full_scale: bool = False) -> tuple[dict, dict[str, str]]:
    """Expand defaults and apply overrides (config < env < flag).

    ``flags`` may hold ``seed``, ``workers`` and ``out_dir``.  With
    ``full_scale`` the configuration's ``full_scale`` block is merged over
    the desk-scale values.  Returns the resolved configuration and the
    origin of every leaf.
    """
    env = os.environ if env is None else env
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    kind = raw.get("kind")
    base = defaults_for(kind)
    origins = {path: ("paper" if path in _PAPER_LEAVES else "repo-default")
               for path in _leaves(base)}
    user = {k: v for k, v in raw.items() if k != "full_scale"}
    if full_scale and isinstance(raw.get("full_scale"), Mapping):
        user = _merge(user, raw["full_scale"])
    resolved = _merge(base, user)
    for path in _leaves(user):
        origins[path] = "config"
    if raw.get("full_scale") is not None:
        resolved["full_scale"] = copy.deepcopy(raw["full_scale"])
    for var, path, cast in ((ENV_OUT_DIR, "output.dir", str), (ENV_WORKERS, "workers", int)):
        if env.get(var):
            _set(resolved, path, cast(env[var]))
            origins[path] = "env"
    for key, path in (("seed", "seed"), ("workers", "workers"), ("out_dir", "output.dir")):
        if key in flags:
            _set(resolved, path, flags[key])
            origins[path] = "flag"
    if resolved["sampling"].get("n_psi") is None and "system" in resolved:
        resolved["sampling"]["n_psi"] = default_n_psi(resolved["system"]["L"])
    resolved.setdefault("name", kind or "experiment")
    return resolved, dict(sorted(origins.items()))


def _path(error: jsonschema.ValidationError) -> str:
    parts = []
    for p in error.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else ("." if parts else "") + str(p))
    return "".join(parts) or "<root>"


def validate_config(raw: Mapping, full_scale: bool = False) -> list[Diagnostic]:
    """Schema and cross-field checks; returns diagnostics (empty means ok)."""
    diags: list[Diagnostic] = []
    kind = raw.get("kind")
    if kind not in KINDS:
        return [Diagnostic("error", "kind", f"must be one of {', '.join(KINDS)}")]
    validator = jsonschema.Draft202012Validator(config_schema(kind))
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        field = _path(err)
        if err.validator == "required":
            missing = err.message.split("'")[1]
            field = f"{field}.{missing}" if field != "<root>" else missing
        diags.append(Diagnostic("error", field, err.message))
    if diags:
        return diags
    cfg, _ = resolve_config(raw, env={}, full_scale=full_scale)
    return diags + _cross_checks(cfg, full_scale)


def _cross_checks(cfg: dict, full_scale: bool) -> list[Diagnostic]:
    out = []
    kind = cfg["kind"]
    system, task, sampling = cfg["system"], cfg.get("task", {}), cfg["sampling"]
    L = system["L"]

    def err(field, msg):
        out.append(Diagnostic("error", field, msg))

    if L > FULL_SCALE_MAX_SITES and not full_scale and kind not in ("disjoint", "pheno-overlay"):
        err("system.L", f"L > {FULL_SCALE_MAX_SITES} is full scale; pass --full-scale to run it")
    cavity = system.get("cavity")
    if cavity and cavity.get("cutoff") is not None and cavity["cutoff"] > L:
        err("system.cavity.cutoff", f"must not exceed L = {L}")
    if sampling.get("n_psi") is not None and sampling["n_psi"] != default_n_psi(L):
        out.append(Diagnostic("warning", "sampling.n_psi",
                              f"{sampling['n_psi']} differs from the documented default "
                              f"{default_n_psi(L)} for L = {L}"))
    geometry = system["geometry"]
    expect = {"fisher-link": ("weak-link-ring",), "learn-link": ("weak-link-ring",),
              "learn-geometry": ("three-way",), "learn-probe": ("crossed",),
              "fisher-probe": ("chain", "crossed")}
    if kind in expect and geometry not in expect[kind]:
        err("system.geometry", f"{kind} needs one of {', '.join(expect[kind])}")
    for name in ("d_values",):
        if name in task and kind in ("fisher-probe", "learn-probe"):
            if max(task[name]) > L - 2:
                err(f"task.{name}", f"distances must leave room in an L = {L} system (max {L - 2})")
    if kind == "fisher-probe" and task.get("crossing") is not None and task["crossing"] > L - 3:
        err("task.crossing", f"must be at most L - 3 = {L - 3}")
    if kind == "learn-geometry":
        if max(task["d_values"]) > L - 4 or task["global_d"] > L - 4:
            err("task.d_values", f"three-way geometries need d <= L - 4 = {L - 4}")
    if kind == "learn-link" and any(g > 0 for g in task.get("cavity_g", [])) and system["drive"] != "floquet":
        err("task.cavity_g", "the cavity model is defined for the Floquet drive")
    if kind == "correlators":
        for i, c in enumerate(task["correlators"]):
            fam = c["family"]
            where = f"task.correlators[{i}]"
            if fam in ("GlobalTOC", "GlobalOTOC") and "phi" not in c:
                err(f"{where}.phi", f"{fam} requires phi")
            if fam in OTOC_FAMILIES and c.get("axes", "ZZ") != "ZZ":
                err(f"{where}.axes", "OTOC families use V = W = Z")
            if fam in ("TwoPointTOC", "TwoPointOTOC") and "pairs" not in c:
                err(f"{where}.pairs", f"{fam} requires pairs")
            for s in ([] if c.get("sites", "all") == "all" else c["sites"]):
                if s >= L:
                    err(f"{where}.sites", f"site {s} outside 0..{L - 1}")
            if isinstance(c.get("pairs"), list):
                for a, b in c["pairs"]:
                    if max(a, b) >= L:
                        err(f"{where}.pairs", f"pair {(a, b)} outside 0..{L - 1}")
    if kind == "disjoint":
        if max(task["n_values"]) > 14:
            err("task.n_values", "dense oracles are limited to n <= 14")
    if kind == "pheno-overlay":
        for key, v in task["params"].items():
            if key not in ("v_B", "A", "D", "gamma", "eps", "a", "J", "L", "phi"):
                err(f"task.params.{key}", "unknown phenomenological parameter")
            elif v <= 0 and key not in ("phi",):
                err(f"task.params.{key}", "must be positive")
    return out
