"""Labeled correlator datasets for the learning tasks.

A dataset row is one disorder realization: its (optionally noisy)
correlator values in a fixed column order, a label and a realization id.
Clean values are simulated once; read-out noise is added afterwards with its
own random stream, so sweeps over the noise level reuse one simulation.

Seeds: realization ``r`` of class ``c`` uses disorder stream
``(seed, task, c, r)`` and Haar stream ``(seed, task, c, r, 1)``.  Training
realizations are ``r < n_train`` and test realizations follow them, so the
two splits never share a realization.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..correlate import CorrelatorEngine, CorrelatorSpec, OTOC_FAMILIES, add_readout_noise
from ..operators import rng_stream
from ..system import CavitySpec, Geometry, SystemSpec, make_system

__all__ = [
    "DATASET_FORMAT_VERSION",
    "Dataset",
    "ClassRecipe",
    "feature_name",
    "probe_feature_specs",
    "link_feature_specs",
    "geometry_feature_specs",
    "simulate_class",
    "simulate_dataset",
    "add_noise",
    "generate_dataset",
    "parallel_map",
]

DATASET_FORMAT_VERSION = 1

# task codes keep the seed streams of different tasks apart
TASK_CODES = {"probe": 1, "link": 2, "geometry": 3, "custom": 9}


def feature_name(spec: CorrelatorSpec) -> str:
    """Stable column name of a correlator spec."""
    parts = [spec.family, f"{spec.v_axis}{spec.w_axis}"]
    if spec.site_x is not None:
        parts.append(f"x={spec.site_x}")
    if spec.site_xp is not None:
        parts.append(f"xp={spec.site_xp}")
    parts.append(f"t={spec.t:g}")
    if spec.phi is not None:
        parts.append(f"phi={spec.phi:g}")
    return ":".join(parts)


def _schema_hash(names: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()[:16]


@dataclass
class Dataset:
    """Feature matrix with labels, realization ids and provenance.

    Attributes
    ----------
    X : ndarray, shape (n_samples, n_features)
    y : ndarray, shape (n_samples,)
    realization : ndarray of str
        Unique per row, e.g. ``"c1-r17"``.
    feature_names : tuple of str
    otoc_mask : ndarray of bool
        Columns that are OTOCs.
    provenance : dict
        Noise level, state count, seeds and anything else needed to rebuild
        the table.
    """

    X: np.ndarray
    y: np.ndarray
    realization: np.ndarray
    feature_names: tuple[str, ...]
    otoc_mask: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y)
        self.realization = np.asarray(self.realization, dtype=str)
        self.otoc_mask = np.asarray(self.otoc_mask, dtype=bool)
        self.feature_names = tuple(self.feature_names)
        n = len(self.y)
        if self.X.shape != (n, len(self.feature_names)):
            raise ValueError("X does not match labels and feature names")
        if len(self.realization) != n or len(self.otoc_mask) != len(self.feature_names):
            raise ValueError("inconsistent dataset fields")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def schema_hash(self) -> str:
        return _schema_hash(self.feature_names)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, X=self.X[rows], y=self.y[rows], realization=self.realization[rows])

    def columns(self, otoc: bool = True) -> "Dataset":
        """All columns, or only the TOC columns when ``otoc`` is false."""
        if otoc:
            return self
        keep = ~self.otoc_mask
        return replace(self, X=self.X[:, keep],
                       feature_names=tuple(n for n, k in zip(self.feature_names, keep) if k),
                       otoc_mask=self.otoc_mask[keep])

    def relabel(self, mapping: dict) -> "Dataset":
        return replace(self, y=np.array([mapping[v] for v in self.y]))

    @staticmethod
    def concatenate(parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        first = parts[0]
        for p in parts[1:]:
            if p.feature_names != first.feature_names:
                raise ValueError("datasets have different feature schemas")
        realization = np.concatenate([p.realization for p in parts])
        if len(set(realization)) != len(realization):
            raise ValueError("duplicate realization ids")
        provenance = dict(first.provenance)
        return Dataset(np.vstack([p.X for p in parts]), np.concatenate([p.y for p in parts]),
                       realization, first.feature_names, first.otoc_mask, provenance)


def probe_feature_specs(n_sites: int, times: Sequence[float], otoc: bool = True,
                        probe: int = 0) -> list[CorrelatorSpec]:
    """Probe-local correlators: auto TOC, perturbed TOC and local OTOC.

    TOCs use ``V = W`` in {X, Z}; OTOCs use Z.  ``x`` runs over every site
    except the probe.
    """
    sites = [x for x in range(n_sites) if x != probe]
    specs = []
    for t in times:
        for a in ("X", "Z"):
            specs.append(CorrelatorSpec("AutoTOC", t, a, a))
            specs += [CorrelatorSpec("PerturbedTOC", t, a, a, x) for x in sites]
        if otoc:
            specs += [CorrelatorSpec("LocalOTOC", t, "Z", "Z", x) for x in sites]
    return specs


def link_feature_specs(geometry: Geometry, times: Sequence[float], otoc: bool = True,
                       radius: int = 2, max_pair_distance: int | None = None) -> list[CorrelatorSpec]:
    """Two-point correlators with ``x, x'`` within ``radius`` of the weak link.

    With ``max_pair_distance`` only pairs at most that far apart (graph
    distance) are kept.
    """
    left, right = geometry.sites_near_link(radius)
    sites = sorted(left + right)
    pairs = [(x, xp) for x in sites for xp in sites]
    if max_pair_distance is not None:
        dist = {x: geometry.distances(x) for x in sites}
        pairs = [(x, xp) for x, xp in pairs if dist[x][xp] <= max_pair_distance]
    specs = []
    for t in times:
        for a in ("X", "Z"):
            specs += [CorrelatorSpec("TwoPointTOC", t, a, a, x, xp) for x, xp in pairs]
        if otoc:
            specs += [CorrelatorSpec("TwoPointOTOC", t, "Z", "Z", x, xp) for x, xp in pairs]
    return specs


def geometry_feature_specs(times: Sequence[float], phis: Sequence[float],
                           otoc: bool = True) -> list[CorrelatorSpec]:
    """Global-rotation correlators (plus the auto TOC, i.e. ``phi = 0``).

    On a geometry with a probe, ``V`` sits on the probe; without one, ``V``
    is the normalized total magnetization.
    """
    specs = []
    for t in times:
        for a in ("X", "Z"):
            specs.append(CorrelatorSpec("GlobalTOC", t, a, a, phi=0.0))
            specs += [CorrelatorSpec("GlobalTOC", t, a, a, phi=p) for p in phis]
        if otoc:
            specs += [CorrelatorSpec("GlobalOTOC", t, "Z", "Z", phi=p) for p in phis]
    return specs


@dataclass(frozen=True)
class ClassRecipe:
    """How to draw realizations of one class.

    Parameters
    ----------
    label : object
        Class label (or regression target).
    geometry : Geometry
    code : int
        Class index used in the seed stream.
    weak_link : float, optional
    drive : str
    cavity : CavitySpec, optional
    """

    label: object
    geometry: Geometry
    code: int
    weak_link: float | None = None
    drive: str = "floquet"
    cavity: CavitySpec | None = None

    def system(self, seed: int, task: int, r: int) -> SystemSpec:
        return make_system(self.geometry, seed, task, self.code, r, weak_link=self.weak_link,
                           drive=self.drive, cavity=self.cavity)


def _simulate_one(args):
    recipe, specs, n_psi, seed, task, r = args
    system = recipe.system(seed, task, r)
    engine = CorrelatorEngine(system, n_psi, (seed, task, recipe.code, r, 1))
    return engine.evaluate(specs).means()


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally in a process pool (order preserved)."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def simulate_class(recipe: ClassRecipe, specs: Sequence[CorrelatorSpec], rows: Sequence[int],
                   n_psi: int | None = None, seed: int = 0, task: str = "custom",
                   workers: int = 1) -> Dataset:
    """Noise-free correlator table for realizations ``rows`` of one class."""
    specs = list(specs)
    if not rows:
        raise ValueError("need at least one realization")
    code = TASK_CODES[task]
    jobs = [(recipe, specs, n_psi, seed, code, int(r)) for r in rows]
    X = np.array(parallel_map(_simulate_one, jobs, workers))
    names = [feature_name(s) for s in specs]
    provenance = {"format": DATASET_FORMAT_VERSION, "task": task, "seed": seed,
                  "n_psi": n_psi, "delta": 0.0, "schema": _schema_hash(names)}
    return Dataset(X, np.array([recipe.label] * len(rows)),
                   np.array([f"c{recipe.code}-r{r}" for r in rows]), names,
                   np.array([s.family in OTOC_FAMILIES for s in specs]), provenance)


def simulate_dataset(recipes: Sequence[ClassRecipe], specs: Sequence[CorrelatorSpec],
                     n_train: int, n_test: int, n_psi: int | None = None, seed: int = 0,
                     task: str = "custom", workers: int = 1) -> dict[str, Dataset]:
    """Clean train and test tables over several classes."""
    if n_train < 1 or n_test < 0:
        raise ValueError("need n_train >= 1 and n_test >= 0")
    out = {}
    for split, rows in (("train", range(n_train)), ("test", range(n_train, n_train + n_test))):
        if not rows:
            continue
        parts = [simulate_class(rc, specs, list(rows), n_psi, seed, task, workers) for rc in recipes]
        out[split] = Dataset.concatenate(parts)
    return out


def add_noise(data: Dataset, delta: float, seed=0) -> Dataset:
    """Copy with Gaussian read-out error of width ``delta`` on every entry.

    Noise for each row is drawn from a stream keyed by ``seed`` and the
    row's realization id, so it does not depend on row order.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    keys = (seed,) if isinstance(seed, (int, np.integer)) else tuple(seed)
    X = data.X.copy()
    if delta > 0:
        for i, rid in enumerate(data.realization):
            digest = int(hashlib.sha256(rid.encode()).hexdigest()[:12], 16)
            X[i] = add_readout_noise(X[i], delta, rng_stream(*keys, 2, digest))
    provenance = dict(data.provenance, delta=float(delta), noise_seed=list(keys))
    return replace(data, X=X, provenance=provenance)


def generate_dataset(recipes: Sequence[ClassRecipe], specs: Sequence[CorrelatorSpec],
                     n_train: int, n_test: int, delta: float, seed: int = 0,
                     n_psi: int | None = None, task: str = "custom",
                     workers: int = 1) -> dict[str, Dataset]:
    """Simulate fresh realizations and return noisy ``{"train", "test"}`` splits."""
    clean = simulate_dataset(recipes, specs, n_train, n_test, n_psi, seed, task, workers)
    return {k: add_noise(v, delta, (seed, TASK_CODES[task])) for k, v in clean.items()}

