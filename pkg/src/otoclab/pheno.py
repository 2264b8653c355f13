"""Closed-form phenomenology of correlators and their Fisher information.

These are scaling forms, not simulations.  They provide the shapes that
simulated Fisher-information curves are compared against:

* OTOC wavefront ``C(x, t) = f((x / v_B(x) - t) / (A sqrt(t)))`` with a
  position-dependent butterfly velocity (harmonic mean of the couplings
  crossed so far);
* diffusive or exponentially decaying TOCs;
* the global OTOC ``exp(-phi^2 v_B(t) t)``;
* the Fisher-information scalings with the distance ``d`` of a coupling
  (:func:`predicted_fi_scaling`) and with a weak link ``J_l``;
* the Gaussian error envelope of OTOCs and the crossovers it implies.

:func:`fit_scaling` fits power laws or exponentials in log space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "PhenoParams",
    "bump",
    "front",
    "BUMPS",
    "max_slope",
    "butterfly_velocity",
    "otoc_profile",
    "otoc_fi_max",
    "diffusion_constant",
    "toc_profiles",
    "propagator",
    "perturbed_toc_term",
    "perturbed_toc_derivative",
    "global_otoc",
    "global_otoc_fi_max",
    "ScalingLaw",
    "predicted_fi_scaling",
    "weak_link_toc",
    "weak_link_otoc",
    "weak_link_fi",
    "ErrorModel",
    "error_decay_and_crossovers",
    "ScalingFit",
    "fit_scaling",
    "DEFAULT_FI_FLOOR",
]

DEFAULT_FI_FLOOR = 1e-12


@dataclass(frozen=True)
class PhenoParams:
    """Phenomenological parameters.

    Attributes
    ----------
    v_B : float
        Typical butterfly velocity.
    A : float
        Wavefront-width coefficient.
    D : float
        Typical diffusion constant.
    gamma : float
        TOC decay rate without conservation.
    eps : float
        Local error rate.
    a : float
        Order-one constant of the error envelope.
    phi : float
        Global rotation angle.
    couplings : tuple of float, optional
        ``J_1, J_2, ...``: bond ``y`` joins the sites at distance ``y - 1``
        and ``y`` from the probe.
    J : float
        Typical coupling (used by the weak-link and error forms).
    L : int, optional
        System size (weak-link and error forms).
    """

    v_B: float = 1.0
    A: float = 1.0
    D: float = 1.0
    gamma: float = 1.0
    eps: float = 0.0
    a: float = 1.0
    phi: float = 0.0
    couplings: tuple[float, ...] | None = None
    J: float = 1.0
    L: int | None = None

    def __post_init__(self):
        for name in ("v_B", "A", "D", "gamma", "a", "J"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.couplings is not None:
            object.__setattr__(self, "couplings", tuple(float(j) for j in self.couplings))
            if any(j <= 0 for j in self.couplings):
                raise ValueError("couplings must be positive")


# -- wavefront shapes -------------------------------------------------------------


def bump(s):
    """Symmetric smooth bump ``exp(1 - 1/(1 - s^2))`` on ``|s| < 1``; ``bump(0) = 1``."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    safe = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe**2)), 0.0)


def front(s):
    """Rising front: 0 for ``s <= -1``, the bump's left half on ``(-1, 0)``, then 1.

    This is the left-saturating reading of the wavefront shape (zero inside
    the light cone, one outside).
    """
    s = np.asarray(s, dtype=float)
    return np.where(s >= 0, 1.0, bump(s))


BUMPS: dict[str, Callable] = {"bump": bump, "front": front}


def _shape(f) -> Callable:
    return BUMPS[f] if isinstance(f, str) else f


def max_slope(f="bump", grid: int = 200_001) -> float:
    """Largest ``|f'(s)|`` on ``[-1, 1]`` (central differences on a fine grid)."""
    f = _shape(f)
    s = np.linspace(-1.0, 1.0, grid)
    return float(np.max(np.abs(np.gradient(f(s), s))))


# -- OTOC wavefront ---------------------------------------------------------------


def _harmonic_prefix(couplings: Sequence[float], n: int) -> float:
    n = max(1, min(int(n), len(couplings)))
    return n / float(np.sum(1.0 / np.asarray(couplings[:n])))


def butterfly_velocity(x: float, params: PhenoParams) -> float:
    """``v_B(x) = [(1/x) sum_{y <= x} 1/J_y]^{-1}``, or ``v_B`` without couplings.

    Only the first ``floor(x)`` bonds (at least one, at most all supplied)
    enter, so under uniform couplings the result is exactly that coupling.
    """
    if params.couplings is None:
        return params.v_B
    return _harmonic_prefix(params.couplings, math.floor(x))


def otoc_profile(x: float, t: float, params: PhenoParams, f="bump") -> float:
    """``f((x / v_B(x) - t) / (A sqrt(t)))``."""
    if t <= 0:
        raise ValueError("t must be positive")
    v = butterfly_velocity(x, params)
    return float(_shape(f)((x / v - t) / (params.A * math.sqrt(t))))


def otoc_fi_max(d: float, params: PhenoParams, J_d: float | None = None, f="front") -> float:
    """Optimal local-OTOC information ``|f'/(A J_d^2 sqrt(v_B d))|^2``.

    ``f'`` is the shape's maximal slope (the optimal probe sits on the
    steepest point of the front).
    """
    if d <= 0:
        raise ValueError("d must be positive")
    j = params.J if J_d is None else J_d
    return (max_slope(f) / (params.A * j**2 * math.sqrt(params.v_B * d))) ** 2


# -- TOCs -------------------------------------------------------------------------


def diffusion_constant(t: float, params: PhenoParams) -> float:
    """``D(t)``: harmonic mean of the couplings within ``sqrt(D t)``, or ``D``."""
    if params.couplings is None:
        return params.D
    return _harmonic_prefix(params.couplings, math.floor(math.sqrt(params.D * t)))


def toc_profiles(t: float, params: PhenoParams, conserved: bool) -> float:
    """``1/sqrt(D(t) t)`` with a conservation law, else ``exp(-gamma t)``."""
    if t <= 0:
        raise ValueError("t must be positive")
    if conserved:
        return 1.0 / math.sqrt(diffusion_constant(t, params) * t)
    return math.exp(-params.gamma * t)


def propagator(x: float, t: float, params: PhenoParams) -> float:
    """Gaussian propagator ``(2 pi D(t) t)^{-1/2} exp(-x^2 / (2 D(t) t))``."""
    if t <= 0:
        raise ValueError("t must be positive")
    dt = diffusion_constant(t, params) * t
    return math.exp(-x * x / (2 * dt)) / math.sqrt(2 * math.pi * dt)


def perturbed_toc_term(x: float, t: float, params: PhenoParams) -> float:
    """Echo term ``q(x, t/2)^2`` of the perturbed TOC."""
    return propagator(x, t / 2, params) ** 2


def perturbed_toc_derivative(x: float, t: float, d: float, params: PhenoParams,
                             J_d: float | None = None) -> float:
    """``d/dJ_d`` of the echo term, nonzero once ``d < sqrt(D t)``.

    ``[-1/(pi J^2 D^{1/2} t^{3/2}) + 2 x^2/(pi J^2 D^{3/2} t^{5/2})] exp(-2 x^2/(D t))``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    D = params.D
    if not d < math.sqrt(D * t):
        return 0.0
    j = params.J if J_d is None else J_d
    envelope = math.exp(-2 * x * x / (D * t))
    return (-1.0 / (math.pi * j**2 * D**0.5 * t**1.5)
            + 2 * x * x / (math.pi * j**2 * D**1.5 * t**2.5)) * envelope


# -- global control -----------------------------------------------------------------


def global_otoc(t: float, phi: float, params: PhenoParams) -> float:
    """``exp(-phi^2 v_B(t) t)``; ``v_B(t)`` averages the couplings within ``v_B t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = butterfly_velocity(params.v_B * t, params)
    return math.exp(-phi * phi * v * t)


def global_otoc_fi_max(d: float, params: PhenoParams, J_d: float | None = None) -> float:
    """``|v_B e^{-1} / (J_d^2 d)|^2``: optimal ``t = d / v_B`` and ``phi^2 v_B t = 1``."""
    if d <= 0:
        raise ValueError("d must be positive")
    j = params.J if J_d is None else J_d
    return (params.v_B * math.exp(-1.0) / (j * j * d)) ** 2


# -- scaling descriptors --------------------------------------------------------------


@dataclass(frozen=True)
class ScalingLaw:
    """``prefactor * d**exponent`` (power) or ``prefactor * exp(exponent * d)``."""

    model: str
    exponent: float
    label: str = ""
    prefactor: float = 1.0

    def __post_init__(self):
        if self.model not in ("power", "exponential"):
            raise ValueError("model must be 'power' or 'exponential'")

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        if self.model == "power":
            return self.prefactor * d**self.exponent
        return self.prefactor * np.exp(self.exponent * d)


_TABLE = {
    ("TOC", "local", False): ScalingLaw("exponential", -1.0, "O(exp(-d))"),
    ("TOC", "global", False): ScalingLaw("exponential", -1.0, "O(exp(-d))"),
    ("TOC", "local", True): ScalingLaw("power", -4.0, "O(1/d^4)"),
    ("TOC", "global", True): ScalingLaw("power", -4.0, "O(1/d^4)"),
    ("OTOC", "local", False): ScalingLaw("power", -1.0, "O(1/d)"),
    ("OTOC", "global", False): ScalingLaw("power", -2.0, "O(1/d^2)"),
}


def predicted_fi_scaling(correlator: str, control: str, conserved: bool = False) -> ScalingLaw:
    """Scaling of the maximal Fisher information with the coupling distance ``d``.

    ``correlator`` is ``TOC`` or ``OTOC``; ``control`` is ``local`` or
    ``global``.  Conservation only changes the TOC rows; the exponential
    rate is reported in units where ``2 gamma / v_B = 1``.
    """
    key = (correlator.upper(), control.lower(), bool(conserved) and correlator.upper() == "TOC")
    if key not in _TABLE:
        raise KeyError(f"unknown scenario {correlator!r}/{control!r}")
    return _TABLE[key]


# -- weak link ------------------------------------------------------------------------


def weak_link_toc(t: float, J_link: float, J: float = 1.0) -> float:
    """Incoherent transfer across the link: ``(J_l^2 / J) t exp(-J t)``.

    Maximal at ``t = 1/J`` with value ``(J_l^2 / J^2) / e``.
    """
    return (J_link**2 / J) * t * math.exp(-J * t)


def weak_link_otoc(t: float, J_link: float, J: float = 1.0, L: int | None = None) -> float:
    """``1 - C_OTOC ~ (J_l^2 / J) t`` up to the wrap-around time ``L / J``."""
    if L is not None and t > L / J:
        return 0.0
    return (J_link**2 / J) * t


def weak_link_fi(J_link: float, correlator: str, J: float = 1.0, L: int | None = None) -> float:
    """Fisher information of ``log J_l``: ``J_l^4/J^4`` (TOC), ``L^2 J_l^4/J^4`` (OTOC)."""
    base = (J_link / J) ** 4
    if correlator.upper() == "TOC":
        return base
    if correlator.upper() == "OTOC":
        if L is None:
            raise ValueError("the OTOC form needs L")
        return L * L * base
    raise KeyError(correlator)


# -- errors ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorModel:
    """Error-induced forms.

    ``otoc_decay(t) = exp(-a eps v_B t^2)``; the OTOC keeps its advantage for
    ``d < crossover_d = gamma v_B / eps``; the link OTOC is best read out at
    ``t_star = min(sqrt(1/(eps J)), L/J)`` where its information is
    ``link_fi(J_l) = min(J_l^4/(eps J^3), J_l^4 L^2/J^4)``.
    """

    params: PhenoParams

    def otoc_decay(self, t):
        p = self.params
        return np.exp(-p.a * p.eps * p.v_B * np.asarray(t, dtype=float) ** 2)

    @property
    def crossover_d(self) -> float:
        p = self.params
        return p.gamma * p.v_B / p.eps

    @property
    def t_star(self) -> float:
        p = self.params
        return min(math.sqrt(1.0 / (p.eps * p.J)), p.L / p.J)

    def link_fi(self, J_link: float) -> float:
        p = self.params
        return min(J_link**4 / (p.eps * p.J**3), J_link**4 * p.L**2 / p.J**4)

    def link_fi_branches(self, J_link: float) -> tuple[float, float]:
        p = self.params
        return J_link**4 / (p.eps * p.J**3), J_link**4 * p.L**2 / p.J**4


def error_decay_and_crossovers(params: PhenoParams) -> ErrorModel:
    """Error envelope, advantage crossover, optimal time and link information."""
    if params.eps <= 0:
        raise ValueError("eps must be positive")
    if params.L is None:
        raise ValueError("params.L is required")
    return ErrorModel(params)


# -- fitting --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    """Log-space least-squares fit.

    ``exponent`` is the power for ``model="power"`` and the rate for
    ``model="exponential"``; ``r2`` is the coefficient of determination of
    the log values and ``r`` the correlation coefficient.
    """

    model: str
    exponent: float
    prefactor: float
    r2: float
    r: float
    n_used: int

    def law(self) -> ScalingLaw:
        return ScalingLaw(self.model, self.exponent, prefactor=self.prefactor)


def fit_scaling(x, y, model: str = "power", floor: float = DEFAULT_FI_FLOOR) -> ScalingFit:
    """Fit ``y = c x^k`` (``power``) or ``y = c exp(k x)`` (``exponential``).

    Points with ``y < floor`` are dropped; negative values are an error.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be matching 1D arrays")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise ValueError("values must be nonnegative and finite")
    keep = y >= floor
    if model == "power":
        if np.any(x[keep] <= 0):
            raise ValueError("power-law fits need positive x")
        u = np.log(x[keep])
    elif model == "exponential":
        u = x[keep]
    else:
        raise ValueError("model must be 'power' or 'exponential'")
    if keep.sum() < 3:
        raise ValueError("need at least three points above the floor")
    v = np.log(y[keep])
    slope, intercept = np.polyfit(u, v, 1)
    resid = v - (slope * u + intercept)
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    r = float(np.corrcoef(u, v)[0, 1]) if ss_tot > 0 and np.ptp(u) > 0 else 0.0
    return ScalingFit(model, float(slope), float(math.exp(intercept)), r2, r, int(keep.sum()))
