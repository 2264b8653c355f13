"""Command-line entry point: ``otoclab run | validate | list-presets``."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
import traceback
from importlib import metadata, resources
from pathlib import Path

import yaml

from .. import __version__
from ..io import write_table
from .config import (ENV_OUT_DIR, ENV_WORKERS, ConfigError, Diagnostic, load_config, resolve_config,
                     validate_config)
from .experiments import run_experiment

__all__ = ["main", "run", "validate", "list_presets", "preset_path", "RunResult"]

MANIFEST_VERSION = 1


def _preset_dir():
    return resources.files("otoclab.cli") / "presets"


def list_presets() -> list[dict]:
    """Shipped presets: name, kind, description and documented runtime."""
    out = []
    for entry in sorted(_preset_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".yaml"):
            data = yaml.safe_load(entry.read_text(encoding="utf-8"))
            out.append({"name": data["name"], "kind": data["kind"], "description": data.get("description", ""),
                        "runtime": data.get("runtime", ""), "file": entry.name})
    return out


def preset_path(name: str) -> Path:
    """Path of a preset by name (``fig3d-cavity``) or file name."""
    for entry in _preset_dir().iterdir():
        if entry.name in (name, f"{name}.yaml"):
            return Path(str(entry))
    raise FileNotFoundError(f"no preset named {name!r}")


def _locate(config: str) -> Path:
    path = Path(config)
    if path.exists():
        return path
    return preset_path(config)


def validate(config: str | Path, full_scale: bool = False) -> list[Diagnostic]:
    """Diagnostics for a configuration file or preset name."""
    try:
        raw = load_config(_locate(str(config)))
    except ConfigError as exc:
        return exc.diagnostics
    except (OSError, yaml.YAMLError) as exc:
        return [Diagnostic("error", "<file>", str(exc))]
    return validate_config(raw, full_scale)


def _versions() -> dict:
    out = {"python": platform.python_version(), "otoclab": __version__}
    for pkg in ("numpy", "scipy", "scikit-learn", "pyyaml", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "missing"
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunResult:
    """Exit status and output directory of :func:`run`."""

    def __init__(self, status: int, out_dir: Path | None, diagnostics: list[Diagnostic]):
        self.status = status
        self.out_dir = out_dir
        self.diagnostics = diagnostics


def run(config: str | Path, seed: int | None = None, workers: int | None = None,
        out_dir: str | None = None, full_scale: bool = False, env=None) -> RunResult:
    """Validate, resolve and execute one experiment; write tables and a manifest."""
    try:
        raw = load_config(_locate(str(config)))
    except ConfigError as exc:
        return RunResult(2, None, exc.diagnostics)
    except (OSError, yaml.YAMLError) as exc:
        return RunResult(2, None, [Diagnostic("error", "<file>", str(exc))])
    diags = validate_config(raw, full_scale)
    if any(d.level == "error" for d in diags):
        return RunResult(2, None, diags)
    cfg, origins = resolve_config(raw, {"seed": seed, "workers": workers, "out_dir": out_dir},
                                  env=os.environ if env is None else env, full_scale=full_scale)
    # flags are re-validated so a bad override is reported like a bad file
    diags = validate_config({**{k: v for k, v in cfg.items() if k != "full_scale"}}, full_scale)
    if any(d.level == "error" for d in diags):
        return RunResult(2, None, diags)
    target = Path(cfg["output"]["dir"]) / cfg["name"]
    target.mkdir(parents=True, exist_ok=True)
    snapshot = {"config": cfg, "origins": origins}
    (target / "resolved_config.yaml").write_text(yaml.safe_dump(snapshot, sort_keys=True), encoding="utf-8")
    manifest = {"manifest_version": MANIFEST_VERSION, "name": cfg["name"], "kind": cfg["kind"],
                "seed": cfg["seed"], "workers": cfg["workers"], "full_scale": full_scale,
                "versions": _versions(), "warnings": [str(d) for d in diags], "tables": [],
                "realizations": []}
    start = time.perf_counter()
    status = 0
    try:
        outcome = run_experiment(cfg)
        for name, rows in outcome.tables.items():
            path = write_table(target / f"{name}.tsv", rows)
            manifest["tables"].append({"file": path.name, "rows": len(rows), "sha256": _sha256(path)})
        manifest["realizations"] = outcome.realizations
        manifest["summary"] = outcome.summary
        manifest["status"] = "ok"
    except Exception as exc:  # partial results are still described by the manifest
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()
        status = 1
    manifest["wall_time_s"] = round(time.perf_counter() - start, 3)
    (target / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str),
                                          encoding="utf-8")
    return RunResult(status, target, diags)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otoclab", description="Desk-scale correlator learning experiments.")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("config_path", nargs="?", help="config file or preset name")
    r.add_argument("--config", help="config file or preset name")
    r.add_argument("--seed", type=int, help="master seed (overrides the config)")
    r.add_argument("--workers", type=int, help=f"worker processes (env {ENV_WORKERS})")
    r.add_argument("--out-dir", help=f"output root (env {ENV_OUT_DIR})")
    r.add_argument("--full-scale", action="store_true", help="allow and apply the full-scale parameters")
    v = sub.add_parser("validate", help="check a configuration without running it")
    v.add_argument("config_path", nargs="?")
    v.add_argument("--config")
    v.add_argument("--full-scale", action="store_true")
    sub.add_parser("list-presets", help="list shipped configurations")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.verb == "list-presets":
        for item in list_presets():
            print(f"{item['name']:<24}{item['kind']:<16}{item['runtime']:<20}{item['description']}")
        return 0
    config = args.config or args.config_path
    if config is None:
        print("error: a config path or preset name is required", file=sys.stderr)
        return 2
    if args.verb == "validate":
        diags = validate(config, args.full_scale)
        for d in diags:
            print(d)
        if not any(d.level == "error" for d in diags):
            print("ok")
            return 0
        return 1
    result = run(config, args.seed, args.workers, args.out_dir, args.full_scale)
    for d in result.diagnostics:
        print(d, file=sys.stderr)
    if result.out_dir is not None:
        print(result.out_dir)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
