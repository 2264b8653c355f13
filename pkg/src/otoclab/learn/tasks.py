"""The three learning tasks: probe distance, weak link and geometry.

Each task simulates one clean dataset containing TOC and OTOC columns, adds
read-out noise, and then trains two models on the same rows: one on the TOC
columns only and one on all columns.  Hyperparameters come from
cross-validation on the training split alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..system import CavitySpec, crossed_chains, three_way, weak_link_ring
from .datasets import (ClassRecipe, Dataset, TASK_CODES, add_noise, geometry_feature_specs,
                       link_feature_specs, probe_feature_specs, simulate_dataset)
from .model_selection import (GEOMETRY_GRID, LINK_GRID, PROBE_GRID, CVResult, build_model,
                              cross_validate)

__all__ = [
    "FEATURE_SETS",
    "ABOVE_GRID",
    "FitResult",
    "fit_and_score",
    "interpolate_threshold",
    "ProbeTaskConfig",
    "ProbeTaskReport",
    "run_probe_distance_task",
    "WeakLinkTaskConfig",
    "WeakLinkTaskReport",
    "run_weak_link_task",
    "GeometryTaskConfig",
    "GeometryTaskReport",
    "run_geometry_task",
]

FEATURE_SETS = ("TOC", "TOC+OTOC")
ABOVE_GRID = math.inf


@dataclass
class FitResult:
    """A cross-validated model and its test performance."""

    cv: CVResult
    model: object
    predictions: np.ndarray
    score: float


def fit_and_score(train: Dataset, test: Dataset, kind: str, grid, n_folds: int = 5, seed: int = 0,
                  epsilon: float = 0.1) -> FitResult:
    """Cross-validate on ``train``, refit the best point and score on ``test``.

    The score is accuracy for classifiers and mean absolute error for
    regressors.
    """
    overlap = set(train.realization) & set(test.realization)
    if overlap:
        raise ValueError(f"train and test share realizations: {sorted(overlap)[:3]}")
    cv = cross_validate(train.X, train.y, grid, kind, n_folds, seed, epsilon)
    model = build_model(kind, cv.best_params, epsilon).fit(train.X, train.y)
    pred = model.predict(test.X)
    if kind == "classifier":
        score = float(np.mean(pred == test.y))
    else:
        score = float(np.mean(np.abs(pred - test.y.astype(float))))
    return FitResult(cv, model, pred, score)


def interpolate_threshold(x: Sequence[float], accuracy: Sequence[float],
                          level: float = 0.9) -> float:
    """Smallest ``x`` above which the linearly interpolated accuracy stays at ``level``.

    ``x`` must be increasing.  The crossing is taken after the last grid
    point below ``level``.  Returns ``x[0]`` if every point reaches the
    level and :data:`ABOVE_GRID` if the last point does not.
    """
    x = np.asarray(x, dtype=float)
    acc = np.asarray(accuracy, dtype=float)
    if len(x) == 0 or len(x) != len(acc):
        raise ValueError("need matching nonempty grids")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    below = np.flatnonzero(acc < level)
    if len(below) == 0:
        return float(x[0])
    i = int(below[-1])
    if i == len(x) - 1:
        return ABOVE_GRID
    frac = (level - acc[i]) / (acc[i + 1] - acc[i])
    return float(x[i] + frac * (x[i + 1] - x[i]))


def _split_sets(data: dict[str, Dataset]):
    for name in FEATURE_SETS:
        otoc = name == "TOC+OTOC"
        yield name, data["train"].columns(otoc), data["test"].columns(otoc)


# -- probe distance -------------------------------------------------------------


@dataclass
class ProbeTaskConfig:
    """Regression of the crossing distance ``d`` from probe correlators."""

    n_sites: int = 10
    d_values: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    n_train: int = 60
    n_test: int = 40
    times: tuple[float, ...] = tuple(np.linspace(0.0, 12.0, 30))
    delta: float = 0.03
    n_psi: int | None = None
    seed: int = 0
    drive: str = "floquet"
    grid: dict = field(default_factory=lambda: dict(PROBE_GRID))
    n_folds: int = 5
    epsilon: float = 0.1
    workers: int = 1


@dataclass
class ProbeTaskReport:
    """Per feature set: test MAE, per-``d`` mean and spread of predictions."""

    config: ProbeTaskConfig
    mae: dict[str, float]
    per_d: dict[str, dict[int, tuple[float, float]]]
    mae_per_d: dict[str, dict[int, float]]
    baseline_mae: float
    params: dict[str, dict]

    def rows(self) -> list[dict]:
        out = []
        for name in FEATURE_SETS:
            for d, (mean, std) in self.per_d[name].items():
                out.append({"features": name, "d": d, "mean_prediction": mean, "std_prediction": std,
                            "mae": self.mae_per_d[name][d]})
        return out


def run_probe_distance_task(config: ProbeTaskConfig, data: dict[str, Dataset] | None = None
                            ) -> ProbeTaskReport:
    """Train TOC-only and TOC+OTOC regressors for ``d``; ``data`` skips the simulation."""
    if data is None:
        recipes = [ClassRecipe(d, crossed_chains(config.n_sites, d), d, drive=config.drive)
                   for d in config.d_values]
        specs = probe_feature_specs(config.n_sites, config.times)
        clean = simulate_dataset(recipes, specs, config.n_train, config.n_test, config.n_psi,
                                 config.seed, "probe", config.workers)
        data = {k: add_noise(v, config.delta, (config.seed, TASK_CODES["probe"]))
                for k, v in clean.items()}
    y_test = data["test"].y.astype(float)
    baseline = float(np.mean(np.abs(y_test - data["train"].y.astype(float).mean())))
    mae, per_d, mae_d, params = {}, {}, {}, {}
    for name, train, test in _split_sets(data):
        res = fit_and_score(train, test, "regressor", config.grid, config.n_folds, config.seed,
                            config.epsilon)
        mae[name] = res.score
        params[name] = res.cv.best_params
        per_d[name] = {}
        mae_d[name] = {}
        for d in sorted(set(y_test)):
            sel = y_test == d
            p = res.predictions[sel]
            per_d[name][int(d)] = (float(p.mean()), float(p.std()))
            mae_d[name][int(d)] = float(np.mean(np.abs(p - d)))
    return ProbeTaskReport(config, mae, per_d, mae_d, baseline, params)


# -- weak link ------------------------------------------------------------------


@dataclass
class WeakLinkTaskConfig:
    """Binary detection of a weak link of strength ``J_l`` against no link."""

    n_sites: int = 10
    links: tuple[float, ...] = (0.01, 0.017, 0.03, 0.06, 0.1, 0.17, 0.3, 0.6, 1.0)
    n_train: int = 100
    n_test: int = 60
    times: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 3.0)
    deltas: tuple[float, ...] = (0.03,)
    n_psi: int | None = None
    seed: int = 0
    drive: str = "floquet"
    cavity: CavitySpec | None = None
    radius: int = 2
    max_pair_distance: int | None = None
    grid: dict = field(default_factory=lambda: dict(LINK_GRID))
    n_folds: int = 5
    threshold: float = 0.9
    workers: int = 1


@dataclass
class WeakLinkTaskReport:
    """Accuracy per ``(delta, feature set, J_l)`` and the threshold ``J*_l``."""

    config: WeakLinkTaskConfig
    accuracy: dict[float, dict[str, dict[float, float]]]
    j_star: dict[float, dict[str, float]]
    params: dict[float, dict[str, dict[float, dict]]]

    def rows(self) -> list[dict]:
        out = []
        for delta, by_set in self.accuracy.items():
            for name, accs in by_set.items():
                for link, acc in accs.items():
                    out.append({"delta": delta, "features": name, "J_link": link, "accuracy": acc,
                                "J_star": self.j_star[delta][name]})
        return out


def run_weak_link_task(config: WeakLinkTaskConfig, clean: dict[float, dict[str, Dataset]] | None = None
                       ) -> WeakLinkTaskReport:
    """Accuracy versus ``J_l`` and the 90% crossing, for each read-out error.

    Realizations without a link are simulated once and shared by every
    ``J_l``.  ``clean`` (``J_l -> {"train", "test"}``, including ``0.0``)
    skips the simulation.
    """
    links = sorted(config.links)
    if not links:
        raise ValueError("J_l grid must be nonempty")
    geometry = weak_link_ring(config.n_sites)
    if clean is None:
        specs = link_feature_specs(geometry, config.times, radius=config.radius,
                                   max_pair_distance=config.max_pair_distance)
        clean = {}
        for code, link in enumerate([0.0] + links):
            recipe = ClassRecipe(int(link > 0), geometry, code, weak_link=link, drive=config.drive,
                                 cavity=config.cavity)
            clean[link] = simulate_dataset([recipe], specs, config.n_train, config.n_test,
                                           config.n_psi, config.seed, "link", config.workers)
    accuracy, j_star, params = {}, {}, {}
    for delta in config.deltas:
        noisy = {link: {k: add_noise(v, delta, (config.seed, TASK_CODES["link"]))
                        for k, v in splits.items()}
                 for link, splits in clean.items()}
        accuracy[delta] = {name: {} for name in FEATURE_SETS}
        params[delta] = {name: {} for name in FEATURE_SETS}
        for link in links:
            data = {k: Dataset.concatenate([noisy[0.0][k], noisy[link][k]]) for k in ("train", "test")}
            for name, train, test in _split_sets(data):
                res = fit_and_score(train, test, "classifier", config.grid, config.n_folds,
                                    config.seed)
                accuracy[delta][name][link] = res.score
                params[delta][name][link] = res.cv.best_params
        j_star[delta] = {name: interpolate_threshold(links, [accuracy[delta][name][j] for j in links],
                                                     config.threshold)
                         for name in FEATURE_SETS}
    return WeakLinkTaskReport(config, accuracy, j_star, params)


# -- geometry -------------------------------------------------------------------


@dataclass
class GeometryTaskConfig:
    """Three-way geometry classification.

    ``access="probe"`` sweeps ``d_values`` with ``V`` on the probe;
    ``access="global"`` drops the probe, so ``V`` is the total
    magnetization and only one geometry offset ``global_d`` is used.
    """

    access: str = "probe"
    n_sites: int = 10
    d_values: tuple[int, ...] = (1, 2, 3)
    global_d: int = 2
    n_train: int = 60
    n_test: int = 40
    times: tuple[float, ...] = (0.5, 1.0, 2.0, 3.0, 4.0, 6.0)
    phis: tuple[float, ...] = (0.25, 0.5, 1.0)
    delta: float = 0.03
    n_psi: int | None = None
    seed: int = 0
    drive: str = "floquet"
    grid: dict = field(default_factory=lambda: dict(GEOMETRY_GRID))
    n_folds: int = 4
    shuffle_labels: bool = False
    workers: int = 1


@dataclass
class GeometryTaskReport:
    """Accuracy per ``d`` (a single entry for global access) and feature set."""

    config: GeometryTaskConfig
    accuracy: dict[int, dict[str, float]]
    params: dict[int, dict[str, dict]]

    def rows(self) -> list[dict]:
        return [{"access": self.config.access, "d": d, "features": name, "accuracy": acc}
                for d, by_set in self.accuracy.items() for name, acc in by_set.items()]


def run_geometry_task(config: GeometryTaskConfig) -> GeometryTaskReport:
    if config.access not in ("probe", "global"):
        raise ValueError("access must be 'probe' or 'global'")
    d_values = config.d_values if config.access == "probe" else (config.global_d,)
    specs = geometry_feature_specs(config.times, config.phis)
    accuracy, params = {}, {}
    for d in d_values:
        recipes = []
        for code, which in enumerate("ABC"):
            geom = three_way(config.n_sites, d, which)
            if config.access == "global":
                geom = replace(geom, probe=None)
            recipes.append(ClassRecipe(code, geom, 10 * d + code, drive=config.drive))
        clean = simulate_dataset(recipes, specs, config.n_train, config.n_test, config.n_psi,
                                 config.seed, "geometry", config.workers)
        data = {k: add_noise(v, config.delta, (config.seed, TASK_CODES["geometry"]))
                for k, v in clean.items()}
        if config.shuffle_labels:
            rng = np.random.default_rng(config.seed)
            data = {k: replace(v, y=rng.permutation(v.y)) for k, v in data.items()}
        accuracy[d], params[d] = {}, {}
        for name, train, test in _split_sets(data):
            res = fit_and_score(train, test, "classifier", config.grid, config.n_folds, config.seed)
            accuracy[d][name] = res.score
            params[d][name] = res.cv.best_params
    return GeometryTaskReport(config, accuracy, params)
