"""Fisher information of couplings from correlator derivatives.

Under Gaussian read-out noise the Fisher information a correlator carries
about a coupling is its squared derivative, ``FI(J | C) = (dC/dJ)^2`` (the
factor ``1/delta^2`` is dropped; multiply by it to restore units).
Derivatives are central finite differences in which both evaluations use the
same Haar states, so most of the sampling noise cancels.

The finite-``N_psi`` maximum over correlators is biased upward by sampling
noise roughly as ``A / N_psi``; :func:`extrapolate_fisher` removes the bias
with a straight-line fit in ``1 / N_psi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .correlate import CorrelatorEngine, CorrelatorSpec, OTOC_FAMILIES
from .operators import rng_stream
from .system import SystemSpec

__all__ = [
    "DEFAULT_STEP",
    "Extrapolation",
    "FisherEstimate",
    "resolve_coupling",
    "derivative_samples",
    "correlator_derivative",
    "fisher_curve",
    "max_fisher",
    "fisher_by_class",
    "extrapolate_fisher",
    "disorder_average_fisher",
]

DEFAULT_STEP = 1e-2


@dataclass(frozen=True)
class Extrapolation:
    """Straight-line fit ``FI(N) = fi_inf + slope / N``."""

    fi_inf: float
    slope: float
    residual: float
    clamped: bool = False
    raw_intercept: float = math.nan


@dataclass
class FisherEstimate:
    """Fisher information of one coupling, maximized over a set of correlators.

    Attributes
    ----------
    values : ndarray
        Per-correlator FI at the full state count (one per spec).
    max_fi : float
        ``max(values)``; for disorder averages, the mean of per-realization maxima.
    argmax : CorrelatorSpec or None
        The maximizing correlator (of the last realization for averages).
    curve : dict
        ``N_psi -> max FI`` from random subsets of the sampled states.
    extrapolation : Extrapolation or None
    """

    coupling: object
    log_scale: bool
    specs: list[CorrelatorSpec]
    values: np.ndarray
    max_fi: float
    argmax: CorrelatorSpec | None
    curve: dict[int, float] = field(default_factory=dict)
    extrapolation: Extrapolation | None = None
    n_realizations: int = 1
    stderr: float = math.nan
    per_realization: np.ndarray | None = None

    @property
    def fi_inf(self) -> float:
        return self.extrapolation.fi_inf if self.extrapolation is not None else self.max_fi


def resolve_coupling(system: SystemSpec, coupling) -> tuple[int, int]:
    """Edge of ``coupling``: an edge tuple, or ``"link"`` for the weak link."""
    if isinstance(coupling, str):
        if coupling != "link":
            raise KeyError(f"unknown coupling {coupling!r}")
        if system.geometry.weak_link is None:
            raise KeyError("system has no weak link")
        return system.geometry.weak_link
    a, b = coupling
    edge = (min(a, b), max(a, b))
    if edge not in system.geometry.edges:
        raise KeyError(f"coupling {edge} not found in the geometry")
    return edge


def _effective_step(value: float, step: float) -> float:
    # keep J - step >= 0 so the weak link stays a valid (nonnegative) coupling
    if value - step < 0:
        return value / 2 if value > 0 else step
    return step


def derivative_samples(system: SystemSpec, specs: Sequence[CorrelatorSpec], coupling,
                       step: float = DEFAULT_STEP, seed=0, n_psi: int | None = None,
                       exact: bool = False, method: str = "auto") -> np.ndarray:
    """Per-state central differences ``(q(J+h) - q(J-h)) / 2h``, shape ``(n_specs, n_states)``.

    Both sides use the same Haar states (common random numbers).  If
    ``J - step`` would be negative the step is reduced to ``J / 2``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    edge = resolve_coupling(system, coupling)
    j0 = system.coupling(edge)
    h = _effective_step(j0, step)
    if j0 - h < 0:
        raise ValueError("cannot take a central difference at a zero weak link")
    sides = []
    for value in (j0 + h, j0 - h):
        sys_ = system.with_coupling(edge, value)
        engine = CorrelatorEngine(sys_, n_psi, seed, exact, method=method)
        sides.append(engine.evaluate(specs).real)
    return (sides[0] - sides[1]) / (2 * h)


def correlator_derivative(system: SystemSpec, spec: CorrelatorSpec, coupling,
                          step: float = DEFAULT_STEP, seed=0, exact: bool = False) -> float:
    """``dC/dJ`` by a central difference with common random numbers."""
    samples = derivative_samples(system, [spec], coupling, step, seed, spec.n_psi, exact)
    return float(samples[0].mean())


def fisher_curve(deriv: np.ndarray, scale: float = 1.0, ns: Sequence[int] | None = None,
                 n_subsets: int = 32, seed=0) -> dict[int, float]:
    """``N -> mean over random N-subsets of max_spec (scale * mean derivative)^2``.

    Averaging over subsets (instead of taking prefixes) smooths the curve
    without changing its expectation.
    """
    n_states = deriv.shape[1]
    ns = list(range(1, n_states + 1)) if ns is None else list(ns)
    rng = rng_stream(*((seed,) if isinstance(seed, int) else seed), 7919)
    out = {}
    for n in ns:
        if n > n_states:
            raise ValueError("subset larger than the sample")
        if n == n_states:
            draws = [np.arange(n_states)]
        else:
            draws = [rng.choice(n_states, size=n, replace=False) for _ in range(n_subsets)]
        vals = [np.max((scale * deriv[:, idx].mean(axis=1)) ** 2) for idx in draws]
        out[n] = float(np.mean(vals))
    return out


def extrapolate_fisher(values: Mapping[int, float]) -> Extrapolation:
    """Least-squares fit of ``FI(N) = fi_inf + slope / N``.

    A negative intercept is clamped to zero (FI is nonnegative) and flagged.
    ``residual`` is the root-mean-square deviation of the points from the fit.
    """
    if len(values) < 3:
        raise ValueError("need at least three N_psi values")
    ns = np.array(sorted(values), dtype=float)
    fi = np.array([values[int(n)] for n in ns], dtype=float)
    design = np.column_stack([np.ones_like(ns), 1.0 / ns])
    (intercept, slope), *_ = np.linalg.lstsq(design, fi, rcond=None)
    residual = float(np.sqrt(np.mean((design @ [intercept, slope] - fi) ** 2)))
    clamped = intercept < 0
    return Extrapolation(max(float(intercept), 0.0), float(slope), residual, bool(clamped),
                         float(intercept))


def _estimate_from_samples(deriv, specs, coupling, log_scale, j0, extrapolate, seed):
    scale = j0 if log_scale else 1.0
    values = (scale * deriv.mean(axis=1)) ** 2
    best = int(np.argmax(values)) if len(values) else -1
    curve = {}
    extra = None
    if extrapolate and deriv.shape[1] >= 3:
        curve = fisher_curve(deriv, scale, seed=seed)
        extra = extrapolate_fisher(curve)
    return FisherEstimate(coupling, log_scale, list(specs), values,
                          float(values[best]) if best >= 0 else 0.0,
                          specs[best] if best >= 0 else None, curve, extra)


def max_fisher(system: SystemSpec, coupling, specs: Sequence[CorrelatorSpec],
               n_psi: int | None = None, seed=0, step: float = DEFAULT_STEP,
               log_scale: bool = False, exact: bool = False,
               extrapolate: bool = True) -> FisherEstimate:
    """Maximum of ``(dC/dJ)^2`` over ``specs``.

    With ``log_scale`` the information about ``log J`` is returned, using
    the identity ``FI(log J) = J^2 FI(J)``.
    """
    if not specs:
        raise ValueError("need at least one correlator")
    edge = resolve_coupling(system, coupling)
    deriv = derivative_samples(system, specs, edge, step, seed, n_psi, exact)
    return _estimate_from_samples(deriv, list(specs), coupling, log_scale, system.coupling(edge),
                                  extrapolate and not exact, seed)


def fisher_by_class(system: SystemSpec, coupling, specs: Sequence[CorrelatorSpec],
                    n_psi: int | None = None, seed=0, step: float = DEFAULT_STEP,
                    log_scale: bool = False, exact: bool = False,
                    extrapolate: bool = True) -> dict[str, FisherEstimate]:
    """:func:`max_fisher` split into ``TOC`` and ``OTOC`` classes, sharing one simulation."""
    edge = resolve_coupling(system, coupling)
    specs = list(specs)
    deriv = derivative_samples(system, specs, edge, step, seed, n_psi, exact)
    j0 = system.coupling(edge)
    out = {}
    for label in ("TOC", "OTOC"):
        idx = [i for i, s in enumerate(specs) if (s.family in OTOC_FAMILIES) == (label == "OTOC")]
        if idx:
            out[label] = _estimate_from_samples(deriv[idx], [specs[i] for i in idx], coupling,
                                                log_scale, j0, extrapolate and not exact, seed)
    return out


def disorder_average_fisher(make_system: Callable[[int], SystemSpec], coupling,
                            specs: Sequence[CorrelatorSpec], n_realizations: int,
                            n_psi: int | None = None, seed=0, step: float = DEFAULT_STEP,
                            log_scale: bool = False, exact: bool = False,
                            extrapolate: bool = True) -> dict[str, FisherEstimate]:
    """Average of per-realization maximum FI, split by TOC/OTOC class.

    ``make_system(r)`` returns realization ``r``.  The finite-``N_psi`` curves
    are averaged over realizations before the extrapolation fit.
    """
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    keys = (seed,) if isinstance(seed, int) else tuple(seed)
    runs: dict[str, list[FisherEstimate]] = {}
    for r in range(n_realizations):
        system = make_system(r)
        for label, est in fisher_by_class(system, coupling, specs, n_psi, keys + (r,), step,
                                          log_scale, exact, extrapolate).items():
            runs.setdefault(label, []).append(est)
    out = {}
    for label, ests in runs.items():
        maxima = np.array([e.max_fi for e in ests])
        curve = {}
        extra = None
        if ests[0].curve:
            curve = {n: float(np.mean([e.curve[n] for e in ests])) for n in ests[0].curve}
            extra = extrapolate_fisher(curve)
        stderr = float(maxima.std(ddof=1) / math.sqrt(len(maxima))) if len(maxima) > 1 else math.nan
        out[label] = FisherEstimate(coupling, log_scale, ests[-1].specs,
                                    np.mean([e.values for e in ests], axis=0), float(maxima.mean()),
                                    ests[-1].argmax, curve, extra, len(ests), stderr, maxima)
    return out
