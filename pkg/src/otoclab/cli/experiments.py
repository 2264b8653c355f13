"""Experiment kinds: each turns a resolved configuration into result tables.

Every runner returns an :class:`Outcome` with named tables (lists of row
dicts) and the realizations it used together with their seed streams.
Disorder streams are ``(seed, code, class, r)``; Haar streams append ``1``
(learning kinds) or are ``(seed, code, class, r)`` itself for Fisher
information, where both sides of the finite difference share the states.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import pheno
from ..correlate import CorrelatorEngine, CorrelatorSpec, OTOC_FAMILIES
from ..disjoint import CASES, run_trials, sample_oracle, time_ordered_baseline
from ..fisher import disorder_average_fisher
from ..learn.datasets import TASK_CODES, link_feature_specs, parallel_map, probe_feature_specs
from ..learn.tasks import (FEATURE_SETS, GeometryTaskConfig, ProbeTaskConfig, WeakLinkTaskConfig,
                           run_geometry_task, run_probe_distance_task, run_weak_link_task)
from ..system import (CavitySpec, Geometry, chain, crossed_chains, make_system, probe_path, ring,
                      three_way, weak_link_ring)

__all__ = ["Outcome", "RUNNERS", "build_geometry", "run_experiment", "KIND_CODES"]

# seed-stream codes of the kinds that do not go through the learning tasks
KIND_CODES = {"correlators": TASK_CODES["custom"], "fisher-probe": 5, "fisher-link": 6, "disjoint": 7}


@dataclass
class Outcome:
    tables: dict[str, list[dict]]
    realizations: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def build_geometry(system: dict, crossing: int | None = None) -> Geometry:
    """Geometry named by the ``system`` block."""
    L, kind = system["L"], system["geometry"]
    if kind == "chain":
        return chain(L)
    if kind == "ring":
        return ring(L)
    if kind == "crossed":
        return crossed_chains(L, crossing if crossing is not None else L // 2)
    if kind == "weak-link-ring":
        return weak_link_ring(L)
    if kind == "three-way":
        return three_way(L, 1, "A")
    raise ValueError(f"unknown geometry {kind!r}")


def _cavity(system: dict, g: float | None = None) -> CavitySpec | None:
    block = system.get("cavity")
    g = (block or {}).get("g", 0.0) if g is None else g
    if not g:
        return None
    block = block or {}
    return CavitySpec(float(g), float(block.get("omega", 1.7)), block.get("cutoff"))


def _grid(block: dict) -> dict:
    return {k: tuple(v) for k, v in block.items()}


def _records(seed, code, classes, rows, haar_suffix=(1,)):
    return [{"id": f"c{c}-r{r}", "disorder_stream": [seed, code, c, r],
             "haar_stream": [seed, code, c, r, *haar_suffix]} for c in classes for r in rows]


# -- correlators ------------------------------------------------------------------


def _expand_correlators(cfg: dict, geometry: Geometry) -> list[CorrelatorSpec]:
    task = cfg["task"]
    others = [x for x in range(geometry.n_sites) if x != geometry.probe]
    specs = []
    for t in task["times"]:
        for entry in task["correlators"]:
            fam = entry["family"]
            axes = entry.get("axes", "ZZ")
            v, w = axes[0], axes[1]
            if fam == "AutoTOC":
                specs.append(CorrelatorSpec(fam, t, v, w))
            elif fam in ("PerturbedTOC", "LocalOTOC"):
                sites = others if entry.get("sites", "all") == "all" else entry["sites"]
                specs += [CorrelatorSpec(fam, t, v, w, x) for x in sites]
            elif fam in ("TwoPointTOC", "TwoPointOTOC"):
                pairs = entry["pairs"]
                if pairs == "all":
                    pairs = [(a, b) for a in range(geometry.n_sites) for b in range(geometry.n_sites)]
                specs += [CorrelatorSpec(fam, t, v, w, a, b) for a, b in pairs]
            else:
                specs.append(CorrelatorSpec(fam, t, v, w, phi=float(entry["phi"])))
    return specs


def _correlator_job(args):
    geometry, specs, n_psi, seed, code, r, drive, cavity = args
    system = make_system(geometry, seed, code, 0, r, drive=drive, cavity=cavity)
    samples = CorrelatorEngine(system, n_psi, (seed, code, 0, r, 1)).evaluate(specs)
    return samples.means(), samples.stderrs()


def run_correlators(cfg: dict) -> Outcome:
    seed, code = cfg["seed"], KIND_CODES["correlators"]
    geometry = build_geometry(cfg["system"])
    specs = _expand_correlators(cfg, geometry)
    n_real = cfg["sampling"]["n_realizations"]
    jobs = [(geometry, specs, cfg["sampling"]["n_psi"], seed, code, r, cfg["system"]["drive"],
             _cavity(cfg["system"])) for r in range(n_real)]
    results = parallel_map(_correlator_job, jobs, cfg["workers"])
    rows, summary = [], []
    for r, (means, errs) in enumerate(results):
        for s, m, e in zip(specs, means, errs):
            rows.append({"realization": f"c0-r{r}", **s.as_record(), "value": float(m), "stderr": float(e)})
    values = np.array([m for m, _ in results])
    for i, s in enumerate(specs):
        col = values[:, i]
        sem = float(col.std(ddof=1) / math.sqrt(len(col))) if len(col) > 1 else math.nan
        summary.append({**s.as_record(), "mean": float(col.mean()), "sem": sem, "n_realizations": len(col)})
    return Outcome({"correlators": rows, "summary": summary}, _records(seed, code, [0], range(n_real)))


# -- Fisher information -------------------------------------------------------------


def _fisher_rows(label_key, label, estimates) -> tuple[list[dict], list[dict], list[dict]]:
    fi, curve, per = [], [], []
    for cls, est in estimates.items():
        ex = est.extrapolation
        fi.append({label_key: label, "class": cls, "max_fi": est.max_fi, "stderr": est.stderr,
                   "fi_inf": est.fi_inf, "raw_intercept": ex.raw_intercept if ex else math.nan,
                   "clamped": bool(ex.clamped) if ex else False,
                   "residual": ex.residual if ex else math.nan, "n_realizations": est.n_realizations})
        curve += [{label_key: label, "class": cls, "n_psi": n, "fi": v} for n, v in sorted(est.curve.items())]
        per += [{label_key: label, "class": cls, "realization": f"r{r}", "max_fi": float(v)}
                for r, v in enumerate(est.per_realization)]
    return fi, curve, per


def _probe_fisher_job(d, geometry, specs, cfg):
    seed, code = cfg["seed"], KIND_CODES["fisher-probe"]
    bond = probe_path(geometry, d)[d - 1]
    system = cfg["system"]
    factory = functools.partial(_probe_system, geometry, seed, code, system["drive"], _cavity(system))
    return disorder_average_fisher(factory, bond, specs, cfg["sampling"]["n_realizations"],
                                   cfg["sampling"]["n_psi"], (seed, code, 0), cfg["task"]["step"],
                                   cfg["task"]["log_scale"])


def _probe_system(geometry, seed, code, drive, cavity, r):
    return make_system(geometry, seed, code, 0, r, drive=drive, cavity=cavity)


def run_fisher_probe(cfg: dict) -> Outcome:
    task = cfg["task"]
    crossing = task.get("crossing") or max(task["d_values"])
    geometry = build_geometry(cfg["system"], crossing)
    specs = probe_feature_specs(geometry.n_sites, task["times"], otoc=task["otoc"], probe=geometry.probe)
    fn = functools.partial(_probe_fisher_job, geometry=geometry, specs=specs, cfg=cfg)
    results = parallel_map(fn, list(task["d_values"]), cfg["workers"])
    tables = {"fisher": [], "curve": [], "per_realization": []}
    for d, est in zip(task["d_values"], results):
        for name, rows in zip(tables, _fisher_rows("d", d, est)):
            tables[name] += rows
    seed, code = cfg["seed"], KIND_CODES["fisher-probe"]
    recs = [{"id": f"r{r}", "disorder_stream": [seed, code, 0, r], "haar_stream": [seed, code, 0, r]}
            for r in range(cfg["sampling"]["n_realizations"])]
    return Outcome(tables, recs)


def _link_fisher_job(link, geometry, specs, cfg, code):
    seed = cfg["seed"]
    system = cfg["system"]
    factory = functools.partial(_link_system, geometry, seed, code, link, system["drive"], _cavity(system))
    return disorder_average_fisher(factory, "link", specs, cfg["sampling"]["n_realizations"],
                                   cfg["sampling"]["n_psi"], (seed, code, 0), cfg["task"]["step"],
                                   cfg["task"]["log_scale"])


def _link_system(geometry, seed, code, link, drive, cavity, r):
    return make_system(geometry, seed, code, 0, r, weak_link=link, drive=drive, cavity=cavity)


def run_fisher_link(cfg: dict) -> Outcome:
    task = cfg["task"]
    code = KIND_CODES["fisher-link"]
    geometry = build_geometry(cfg["system"])
    specs = link_feature_specs(geometry, task["times"], radius=task["radius"],
                               max_pair_distance=task["max_pair_distance"])
    links = sorted(task["links"])
    fn = functools.partial(_link_fisher_job, geometry=geometry, specs=specs, cfg=cfg, code=code)
    results = parallel_map(fn, links, cfg["workers"])
    tables = {"fisher": [], "curve": [], "per_realization": []}
    for link, est in zip(links, results):
        for name, rows in zip(tables, _fisher_rows("J_link", link, est)):
            tables[name] += rows
    scaling = []
    for cls in ("TOC", "OTOC"):
        xs = [r["J_link"] for r in tables["fisher"] if r["class"] == cls]
        ys = [r["fi_inf"] for r in tables["fisher"] if r["class"] == cls]
        try:
            fit = pheno.fit_scaling(xs, ys, "power")
            scaling.append({"class": cls, "exponent": fit.exponent, "r2": fit.r2, "n_used": fit.n_used})
        except ValueError as exc:
            scaling.append({"class": cls, "exponent": math.nan, "r2": math.nan, "n_used": 0,
                            "note": str(exc)})
    tables["scaling"] = scaling
    seed = cfg["seed"]
    recs = [{"id": f"r{r}", "disorder_stream": [seed, code, 0, r], "haar_stream": [seed, code, 0, r]}
            for r in range(cfg["sampling"]["n_realizations"])]
    return Outcome(tables, recs)


# -- learning ---------------------------------------------------------------------------


def run_learn_probe(cfg: dict) -> Outcome:
    task, seed = cfg["task"], cfg["seed"]
    config = ProbeTaskConfig(n_sites=cfg["system"]["L"], d_values=tuple(task["d_values"]),
                             n_train=task["n_train"], n_test=task["n_test"], times=tuple(task["times"]),
                             delta=cfg["sampling"]["delta"], n_psi=cfg["sampling"]["n_psi"], seed=seed,
                             drive=cfg["system"]["drive"], grid=_grid(task["grid"]),
                             n_folds=task["n_folds"], epsilon=task["epsilon"], workers=cfg["workers"])
    report = run_probe_distance_task(config)
    summary = [{"features": name, "mae": report.mae[name], "baseline_mae": report.baseline_mae,
                "C": report.params[name]["C"], "gamma": report.params[name]["gamma"]}
               for name in FEATURE_SETS]
    recs = _records(seed, TASK_CODES["probe"], task["d_values"],
                    range(task["n_train"] + task["n_test"]))
    return Outcome({"predictions": report.rows(), "summary": summary}, recs)


def run_learn_link(cfg: dict) -> Outcome:
    task, seed, system = cfg["task"], cfg["seed"], cfg["system"]
    g_values = task.get("cavity_g")
    if g_values is None:
        g_values = [(system.get("cavity") or {}).get("g", 0.0)]
    accuracy, thresholds, params = [], [], []
    for g in g_values:
        config = WeakLinkTaskConfig(n_sites=system["L"], links=tuple(task["links"]), n_train=task["n_train"],
                                    n_test=task["n_test"], times=tuple(task["times"]),
                                    deltas=tuple(task["deltas"]), n_psi=cfg["sampling"]["n_psi"], seed=seed,
                                    drive=system["drive"], cavity=_cavity(system, g), radius=task["radius"],
                                    max_pair_distance=task["max_pair_distance"], grid=_grid(task["grid"]),
                                    n_folds=task["n_folds"], threshold=task["threshold"],
                                    workers=cfg["workers"])
        report = run_weak_link_task(config)
        accuracy += [{"g": float(g), **row} for row in report.rows()]
        for delta, by_set in report.j_star.items():
            thresholds += [{"g": float(g), "delta": delta, "features": k, "J_star": v} for k, v in by_set.items()]
        for delta, by_set in report.params.items():
            for name, by_link in by_set.items():
                params += [{"g": float(g), "delta": delta, "features": name, "J_link": link, **p}
                           for link, p in by_link.items()]
    n_links = len(task["links"]) + 1
    recs = _records(seed, TASK_CODES["link"], range(n_links), range(task["n_train"] + task["n_test"]))
    for p in params:
        p["k"] = str(p["k"])
    return Outcome({"accuracy": accuracy, "thresholds": thresholds, "params": params}, recs)


def run_learn_geometry(cfg: dict) -> Outcome:
    task, seed = cfg["task"], cfg["seed"]
    rows = []
    codes = set()
    for access in task["access"]:
        config = GeometryTaskConfig(access=access, n_sites=cfg["system"]["L"], d_values=tuple(task["d_values"]),
                                    global_d=task["global_d"], n_train=task["n_train"], n_test=task["n_test"],
                                    times=tuple(task["times"]), phis=tuple(task["phis"]),
                                    delta=cfg["sampling"]["delta"], n_psi=cfg["sampling"]["n_psi"], seed=seed,
                                    drive=cfg["system"]["drive"], grid=_grid(task["grid"]),
                                    n_folds=task["n_folds"], workers=cfg["workers"])
        report = run_geometry_task(config)
        rows += report.rows()
        ds = config.d_values if access == "probe" else (config.global_d,)
        codes |= {10 * d + c for d in ds for c in range(3)}
    recs = _records(seed, TASK_CODES["geometry"], sorted(codes), range(task["n_train"] + task["n_test"]))
    return Outcome({"accuracy": rows}, recs)


# -- disjoint unitaries and phenomenology ------------------------------------------------


def run_disjoint(cfg: dict) -> Outcome:
    task, seed = cfg["task"], cfg["seed"]
    code = KIND_CODES["disjoint"]
    trials, summary, baseline = [], [], []
    for n in task["n_values"]:
        keys = (seed, code, n)
        records = run_trials(n, task["n_trials"], keys, task["threshold"])
        trials += [{k: rec[k] for k in ("n", "case", "trial", "otoc", "label", "correct")} for rec in records]
        for case in CASES:
            vals = np.array([r["otoc"] for r in records if r["case"] == case])
            summary.append({"n": n, "case": case, "mean_otoc": float(vals.mean()), "min_otoc": float(vals.min()),
                            "max_otoc": float(vals.max()),
                            "accuracy": float(np.mean([r["correct"] for r in records if r["case"] == case]))})
        for q in task["n_queries"]:
            hits = []
            for c, case in enumerate(CASES):
                for trial in range(task["n_trials"]):
                    inst = sample_oracle(n, case, keys + (c, trial))
                    hits.append(time_ordered_baseline(inst, q, keys + (c, trial, 1, q)) == case)
            baseline.append({"n": n, "n_queries": q, "accuracy": float(np.mean(hits))})
    recs = [{"id": f"n{n}-{case}-{t}", "haar_stream": [seed, code, n, c, t]}
            for n in task["n_values"] for c, case in enumerate(CASES) for t in range(task["n_trials"])]
    return Outcome({"trials": trials, "summary": summary, "baseline": baseline}, recs)


def run_pheno_overlay(cfg: dict) -> Outcome:
    task = cfg["task"]
    p = dict(task["params"])
    L = int(p.pop("L", cfg["system"]["L"]))
    params = pheno.PhenoParams(L=L, **p)
    analytic = {
        ("OTOC", "local", False): lambda d: pheno.otoc_fi_max(d, params),
        ("OTOC", "global", False): lambda d: pheno.global_otoc_fi_max(d, params),
        ("TOC", "local", True): lambda d: (params.D / (2 * params.J**2 * d * d)) ** 2,
        ("TOC", "local", False): lambda d: math.exp(-2 * params.gamma * d / params.v_B),
    }
    scaling = []
    for corr, control, conserved in (("TOC", "local", False), ("TOC", "global", False), ("TOC", "local", True),
                                     ("TOC", "global", True), ("OTOC", "local", False), ("OTOC", "global", False)):
        law = pheno.predicted_fi_scaling(corr, control, conserved)
        form: Callable | None = analytic.get((corr, control, conserved))
        for d in task["d_values"]:
            scaling.append({"correlator": corr, "control": control, "conserved": conserved, "law": law.label,
                            "model": law.model, "exponent": law.exponent, "d": float(d),
                            "law_value": float(law(d)), "analytic_fi": float(form(d)) if form else math.nan})
    links = []
    err = pheno.error_decay_and_crossovers(params) if params.eps > 0 else None
    for j in task["links"]:
        links.append({"J_link": float(j), "toc_fi": pheno.weak_link_fi(j, "TOC", params.J),
                      "otoc_fi": pheno.weak_link_fi(j, "OTOC", params.J, L),
                      "otoc_fi_with_errors": err.link_fi(j) if err else math.nan})
    summary = {}
    if err:
        summary = {"crossover_d": err.crossover_d, "t_star": err.t_star}
    return Outcome({"scaling": scaling, "links": links}, [], summary)


RUNNERS: dict[str, Callable[[dict], Outcome]] = {
    "correlators": run_correlators,
    "fisher-probe": run_fisher_probe,
    "fisher-link": run_fisher_link,
    "learn-probe": run_learn_probe,
    "learn-link": run_learn_link,
    "learn-geometry": run_learn_geometry,
    "disjoint": run_disjoint,
    "pheno-overlay": run_pheno_overlay,
}


def run_experiment(cfg: dict) -> Outcome:
    return RUNNERS[cfg["kind"]](cfg)
