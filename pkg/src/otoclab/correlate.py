"""Correlator families estimated from simulated dynamics.

Every estimator follows the same measurement protocol: an operator ``V`` is
prepared, the system is driven through a family-specific sequence ``M`` of
evolutions and insertions, and ``V`` is read out.  At infinite temperature
the result is ``tr(M^dag V M V) / 2^L``, which we estimate per state as
``Re <M psi| V |M V psi>`` and average over ``psi``.  The states are either
Haar-random (Monte Carlo, error ~ ``1/sqrt(N_psi 2^L)``) or the complete
computational basis (exact trace, zero error).

Families (``V`` sits on the probe unless stated otherwise):

==============  ========================================================
AutoTOC         ``M = U(t)``
PerturbedTOC    ``M = U(t/2 -> t) W_x U(0 -> t/2)``
LocalOTOC       ``M = U_back(t) W_x U(t)``
TwoPointTOC     prepare ``W_x'``, evolve, read ``V_x``:
                ``<U psi| V_x |U W_x' psi>``
TwoPointOTOC    ``V`` on site ``x``: ``M = U_back(t) W_x' U(t)``
GlobalTOC       PerturbedTOC with ``W_x`` replaced by ``exp(i phi sum W)``
GlobalOTOC      LocalOTOC with the same replacement
==============  ========================================================

``U_back`` undoes the forward schedule with the spin Hamiltonian negated; it
equals ``U^dag`` unless a cavity makes the reversal imperfect.  Global
rotations act on every site except the probe; without a probe, ``V`` is the
normalized magnetization ``sum_x Z_x / sqrt(L)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .evolve import Propagator
from .operators import PauliString, pauli_diagonal, rng_stream, sample_haar_states
from .system import SystemSpec

__all__ = [
    "FAMILIES",
    "TOC_FAMILIES",
    "OTOC_FAMILIES",
    "CorrelatorSpec",
    "CorrelatorValue",
    "CorrelatorSamples",
    "CorrelatorEngine",
    "default_n_psi",
    "estimate",
    "estimate_auto_toc",
    "estimate_perturbed_toc",
    "estimate_local_otoc",
    "estimate_two_point_toc",
    "estimate_two_point_otoc",
    "estimate_global_correlators",
    "inject_readout_noise",
    "add_readout_noise",
]

FAMILIES = ("AutoTOC", "PerturbedTOC", "LocalOTOC", "TwoPointTOC", "TwoPointOTOC",
            "GlobalTOC", "GlobalOTOC")
TOC_FAMILIES = frozenset({"AutoTOC", "PerturbedTOC", "TwoPointTOC", "GlobalTOC"})
OTOC_FAMILIES = frozenset({"LocalOTOC", "TwoPointOTOC", "GlobalOTOC"})
_PROBE_FAMILIES = frozenset({"AutoTOC", "PerturbedTOC", "LocalOTOC"})
_TWO_POINT = frozenset({"TwoPointTOC", "TwoPointOTOC"})
_GLOBAL = frozenset({"GlobalTOC", "GlobalOTOC"})

# vectors held at once by one evaluation chunk (complex entries)
_CHUNK_ENTRIES = 1 << 24


def default_n_psi(n_sites: int) -> int:
    """Haar-state count used by the learning tasks: 25 up to 8 spins, 10 at 9-10, then 1."""
    if n_sites <= 8:
        return 25
    if n_sites <= 10:
        return 10
    return 1


@dataclass(frozen=True)
class CorrelatorSpec:
    """Which correlator to estimate.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES`.
    t : float
        Time in Floquet periods.
    v_axis, w_axis : {"X", "Z"}
        Pauli axes of ``V`` and ``W``; OTOC families use ``Z`` for both.
    site_x : int, optional
        ``W`` site for the probe families (``None`` means ``W = 1``), ``V``
        site for the two-point families.
    site_xp : int, optional
        ``W`` site of the two-point families.
    phi : float, optional
        Rotation angle of the global families.
    n_psi : int, optional
        Haar-state count; ``None`` defers to the engine.
    """

    family: str
    t: float = 0.0
    v_axis: str = "Z"
    w_axis: str = "Z"
    site_x: int | None = None
    site_xp: int | None = None
    phi: float | None = None
    n_psi: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown correlator family {self.family!r}")
        for name in ("v_axis", "w_axis"):
            axis = getattr(self, name).upper()
            if axis not in ("X", "Z"):
                raise ValueError(f"{name} must be X or Z")
            object.__setattr__(self, name, axis)
        if self.family in OTOC_FAMILIES and (self.v_axis, self.w_axis) != ("Z", "Z"):
            raise ValueError("OTOC families use V = W = Z")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if self.family in _TWO_POINT and (self.site_x is None or self.site_xp is None):
            raise ValueError(f"{self.family} requires site_x and site_xp")
        if self.family in _GLOBAL and self.phi is None:
            raise ValueError(f"{self.family} requires phi")
        if self.n_psi is not None and self.n_psi < 1:
            raise ValueError("n_psi must be positive")
        object.__setattr__(self, "t", float(self.t))

    @property
    def is_otoc(self) -> bool:
        return self.family in OTOC_FAMILIES

    def check(self, system: SystemSpec) -> None:
        """Raise if the spec does not fit ``system``."""
        n = system.n_sites
        for site in (self.site_x, self.site_xp):
            if site is not None and not 0 <= site < n:
                raise ValueError(f"site {site} out of range for {n} spins")
        if self.family in _PROBE_FAMILIES and system.geometry.probe is None:
            raise ValueError(f"{self.family} needs a probe site")

    def as_record(self) -> dict:
        return {"family": self.family, "v_axis": self.v_axis, "w_axis": self.w_axis,
                "x": -1 if self.site_x is None else self.site_x,
                "xp": -1 if self.site_xp is None else self.site_xp,
                "t": self.t, "phi": math.nan if self.phi is None else self.phi}


@dataclass(frozen=True)
class CorrelatorValue:
    """An estimated correlator.

    ``stderr`` is the standard error across states: 0 for exact traces and
    NaN (unknown) when a single Haar state was used.  ``imag`` is the mean
    imaginary part, kept as a diagnostic.
    """

    mean: float
    stderr: float
    n_psi: int
    noisy: float | None = None
    imag: float = 0.0

    @property
    def measured(self) -> float:
        """The value an experiment would report: noisy if noise was injected."""
        return self.mean if self.noisy is None else self.noisy


@dataclass
class CorrelatorSamples:
    """Per-state estimates for a list of specs.

    ``real`` and ``imag`` have shape ``(n_specs, n_states)``.  Prefix means
    over the first ``N`` states give the estimate with ``N_psi = N``.
    """

    specs: list[CorrelatorSpec]
    real: np.ndarray
    imag: np.ndarray
    exact: bool = False

    @property
    def n_states(self) -> int:
        return self.real.shape[1]

    def means(self, n_psi: int | None = None) -> np.ndarray:
        n = self.n_states if n_psi is None or self.exact else n_psi
        if n > self.n_states:
            raise ValueError(f"only {self.n_states} states were sampled")
        return self.real[:, :n].mean(axis=1)

    def stderrs(self, n_psi: int | None = None) -> np.ndarray:
        if self.exact:
            return np.zeros(len(self.specs))
        n = self.n_states if n_psi is None else n_psi
        if n < 2:
            return np.full(len(self.specs), np.nan)
        return self.real[:, :n].std(axis=1, ddof=1) / math.sqrt(n)

    def values(self, n_psi: int | None = None) -> list[CorrelatorValue]:
        n = self.n_states if n_psi is None or self.exact else n_psi
        imag = self.imag[:, :n].mean(axis=1)
        return [CorrelatorValue(float(m), float(s), n, imag=float(i))
                for m, s, i in zip(self.means(n_psi), self.stderrs(n_psi), imag)]


class _SiteOp:
    """A Pauli string (or sum of commuting diagonal terms) on the spin register."""

    def __init__(self, n_qubits: int, flip: int, coef: np.ndarray):
        self.spin_dim = 1 << n_qubits
        self.perm = np.arange(self.spin_dim) ^ flip
        self.coef = coef

    @classmethod
    def pauli(cls, axis: str, site: int, n_qubits: int) -> "_SiteOp":
        flip, coef = pauli_diagonal(PauliString.single(site, axis), n_qubits)
        return cls(n_qubits, flip, coef)

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        view = vecs.reshape(self.spin_dim, -1)
        return (view[self.perm] * self.coef[:, None]).reshape(vecs.shape)


class _Magnetization:
    """``sum_x P_x / sqrt(L)``: the global read-out operator, unit normalized."""

    def __init__(self, axis: str, n_qubits: int):
        self.terms = [_SiteOp.pauli(axis, s, n_qubits) for s in range(n_qubits)]
        self.scale = 1.0 / math.sqrt(n_qubits)

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        out = self.terms[0].apply(vecs)
        for term in self.terms[1:]:
            out += term.apply(vecs)
        return out * self.scale


class _Rotation:
    """``exp(i phi sum_x W_x)`` over a set of sites, as single-site rotations."""

    def __init__(self, axis: str, phi: float, sites: Sequence[int], n_qubits: int):
        self.n = n_qubits
        self.sites = list(sites)
        pauli = {"X": np.array([[0, 1], [1, 0]]), "Z": np.diag([1, -1])}[axis]
        self.gate = math.cos(phi) * np.eye(2) + 1j * math.sin(phi) * pauli

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        shape = vecs.shape
        out = vecs.reshape(1 << self.n, -1)
        tail = out.shape[1]
        for site in self.sites:
            view = out.reshape(1 << site, 2, -1)
            out = np.einsum("ab,xbk->xak", self.gate, view).reshape(-1, tail)
        return out.reshape(shape)


class _Identity:
    def apply(self, vecs):
        return vecs


def _overlap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("dk,dk->k", a.conj(), b)


def _as_keys(seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


class CorrelatorEngine:
    """Evaluate many correlators of one system, sharing the evolution.

    Parameters
    ----------
    system : SystemSpec
    n_psi : int, optional
        Number of Haar states; defaults to :func:`default_n_psi`.
    seed : int or tuple of int
        Stream key for the Haar states.  State ``i`` is drawn from the stream
        ``(*seed, i)``, so different ``n_psi`` share a prefix and two systems
        evaluated with the same seed see the same states (common random
        numbers).
    exact : bool
        Use the complete computational basis instead of Haar states.
    propagator : Propagator, optional
        Reuse an existing propagator (it must belong to ``system``).
    """

    def __init__(self, system: SystemSpec, n_psi: int | None = None, seed=0, exact: bool = False,
                 propagator: Propagator | None = None, method: str = "auto"):
        self.system = system
        self.n = system.n_sites
        self.spin_dim = 1 << self.n
        self.cavity_dim = system.cavity_dim
        self.exact = exact
        self.n_psi = self.spin_dim if exact else (n_psi or default_n_psi(self.n))
        self.seed = _as_keys(seed)
        self.prop = propagator if propagator is not None else Propagator(system, method)
        if self.prop.spec is not system and self.prop.spec != system:
            raise ValueError("propagator belongs to a different system")
        self._probe = system.geometry.probe

    # -- states and operators -------------------------------------------------

    def _spin_states(self, start: int, stop: int) -> np.ndarray:
        if self.exact:
            out = np.zeros((self.spin_dim, stop - start), dtype=complex)
            out[np.arange(start, stop), np.arange(stop - start)] = 1.0
            return out
        cols = [sample_haar_states(self.spin_dim, 1, rng_stream(*self.seed, i))[:, 0]
                for i in range(start, stop)]
        return np.stack(cols, axis=1)

    def states(self, start: int, stop: int) -> np.ndarray:
        """States ``start..stop-1`` embedded with the cavity (if any) in vacuum."""
        spin = self._spin_states(start, stop)
        if self.cavity_dim == 1:
            return spin
        out = np.zeros((self.spin_dim, self.cavity_dim, spin.shape[1]), dtype=complex)
        out[:, 0, :] = spin
        return out.reshape(-1, spin.shape[1])

    def _v_op(self, axis: str, site: int | None = None):
        if site is None:
            site = self._probe
        if site is None:
            return _Magnetization(axis, self.n)
        return _SiteOp.pauli(axis, site, self.n)

    def _w_op(self, axis: str, site: int | None):
        return _Identity() if site is None else _SiteOp.pauli(axis, site, self.n)

    def _rotation(self, axis: str, phi: float):
        sites = [s for s in range(self.n) if s != self._probe]
        return _Rotation(axis, phi, sites, self.n)

    def _chunks(self, per_state: int):
        size = max(1, _CHUNK_ENTRIES // max(1, per_state * self.system.dim))
        for start in range(0, self.n_psi, size):
            yield start, min(self.n_psi, start + size)

    # -- family kernels: each returns complex samples [..., n_states] ----------

    def _sweep(self, vecs, times):
        """Yield ``(t, U(t) vecs)`` for sorted ``times``."""
        t_prev, cur = 0.0, vecs
        for t in times:
            cur = self.prop.evolve(cur, t_prev, t)
            t_prev = t
            yield t, cur

    def _forward_pair(self, times, v_op):
        """Correlators ``<U psi|V|U V psi>`` for the auto-correlation."""
        out = np.zeros((len(times), self.n_psi), dtype=complex)
        for a, b in self._chunks(2):
            psi = self.states(a, b)
            k = b - a
            for i, (_, cur) in enumerate(self._sweep(np.hstack([psi, v_op.apply(psi)]), times)):
                out[i, a:b] = _overlap(cur[:, :k], v_op.apply(cur[:, k:]))
        return out

    def _inserted(self, times, v_op, inserts, otoc: bool):
        """``<M psi|V|M V psi>`` with one insertion per entry of ``inserts``.

        TOC: ``M = U(t/2 -> t) W U(t/2)``.  OTOC: ``M = U_back(t) W U(t)``.
        """
        n_ins = len(inserts)
        out = np.zeros((len(times), n_ins, self.n_psi), dtype=complex)
        for a, b in self._chunks(2 * n_ins):
            psi = self.states(a, b)
            k = b - a
            pair = np.hstack([psi, v_op.apply(psi)])
            stops = [t / 2 for t in times] if not otoc else list(times)
            for i, (s, cur) in enumerate(self._sweep(pair, stops)):
                t = times[i]
                stacked = np.hstack([w.apply(cur) for w in inserts])
                if otoc:
                    done = self.prop.evolve(stacked, 0.0, t, "backward")
                else:
                    done = self.prop.evolve(stacked, s, t)
                for j in range(n_ins):
                    block = done[:, 2 * k * j: 2 * k * (j + 1)]
                    out[i, j, a:b] = _overlap(block[:, :k], v_op.apply(block[:, k:]))
        return out

    def _two_point_toc(self, times, xs, xps, v_axis, w_axis):
        out = np.zeros((len(times), len(xs), len(xps), self.n_psi), dtype=complex)
        v_ops = [self._v_op(v_axis, x) for x in xs]
        w_ops = [self._w_op(w_axis, x) for x in xps]
        for a, b in self._chunks(1 + len(xps)):
            psi = self.states(a, b)
            k = b - a
            vecs = np.hstack([psi] + [w.apply(psi) for w in w_ops])
            for i, (_, cur) in enumerate(self._sweep(vecs, times)):
                base = cur[:, :k]
                for q, _ in enumerate(xps):
                    moved = cur[:, k * (q + 1): k * (q + 2)]
                    for p, v in enumerate(v_ops):
                        out[i, p, q, a:b] = _overlap(base, v.apply(moved))
        return out

    def _two_point_otoc(self, times, xs, xps):
        out = np.zeros((len(times), len(xs), len(xps), self.n_psi), dtype=complex)
        v_ops = [self._v_op("Z", x) for x in xs]
        w_ops = [self._w_op("Z", x) for x in xps]
        nv = len(xs)
        for a, b in self._chunks((1 + nv) * (1 + len(xps))):
            psi = self.states(a, b)
            k = b - a
            vecs = np.hstack([psi] + [v.apply(psi) for v in v_ops])
            for i, (t, cur) in enumerate(self._sweep(vecs, times)):
                stacked = np.hstack([w.apply(cur) for w in w_ops])
                done = self.prop.evolve(stacked, 0.0, t, "backward")
                width = k * (1 + nv)
                for q in range(len(xps)):
                    block = done[:, q * width:(q + 1) * width]
                    base = block[:, :k]
                    for p, v in enumerate(v_ops):
                        moved = block[:, k * (p + 1): k * (p + 2)]
                        out[i, p, q, a:b] = _overlap(base, v.apply(moved))
        return out

    # -- public API -------------------------------------------------------------

    def evaluate(self, specs: Iterable[CorrelatorSpec]) -> CorrelatorSamples:
        """Per-state samples for every spec, grouped so evolutions are shared."""
        specs = list(specs)
        for s in specs:
            s.check(self.system)
        results = np.zeros((len(specs), self.n_psi), dtype=complex)
        groups: dict[tuple, list[int]] = {}
        for i, s in enumerate(specs):
            if s.family == "AutoTOC":
                key = (s.family, s.v_axis)
            elif s.family in ("PerturbedTOC", "LocalOTOC", "TwoPointTOC"):
                key = (s.family, s.v_axis, s.w_axis)
            elif s.family == "TwoPointOTOC":
                key = (s.family,)
            else:
                key = (s.family, s.v_axis, s.w_axis, s.phi)
            groups.setdefault(key, []).append(i)
        for key, members in groups.items():
            family = key[0]
            times = sorted({specs[i].t for i in members})
            t_index = {t: j for j, t in enumerate(times)}
            if family == "AutoTOC":
                vals = self._forward_pair(times, self._v_op(key[1]))
                for i in members:
                    results[i] = vals[t_index[specs[i].t]]
            elif family in ("PerturbedTOC", "LocalOTOC"):
                sites = sorted({specs[i].site_x for i in members}, key=lambda s: -1 if s is None else s)
                inserts = [self._w_op(key[2], s) for s in sites]
                vals = self._inserted(times, self._v_op(key[1]), inserts, family == "LocalOTOC")
                s_index = {s: j for j, s in enumerate(sites)}
                for i in members:
                    results[i] = vals[t_index[specs[i].t], s_index[specs[i].site_x]]
            elif family in _GLOBAL:
                _, v_axis, w_axis, phi = key
                vals = self._inserted(times, self._v_op(v_axis), [self._rotation(w_axis, phi)],
                                      family == "GlobalOTOC")
                for i in members:
                    results[i] = vals[t_index[specs[i].t], 0]
            else:
                xs = sorted({specs[i].site_x for i in members})
                xps = sorted({specs[i].site_xp for i in members})
                if family == "TwoPointTOC":
                    vals = self._two_point_toc(times, xs, xps, key[1], key[2])
                else:
                    vals = self._two_point_otoc(times, xs, xps)
                xi = {x: j for j, x in enumerate(xs)}
                xpi = {x: j for j, x in enumerate(xps)}
                for i in members:
                    s = specs[i]
                    results[i] = vals[t_index[s.t], xi[s.site_x], xpi[s.site_xp]]
        return CorrelatorSamples(specs, results.real.copy(), results.imag.copy(), self.exact)

    def estimate(self, spec: CorrelatorSpec) -> CorrelatorValue:
        return self.evaluate([spec]).values(spec.n_psi)[0]


def estimate(spec: CorrelatorSpec, system: SystemSpec, seed=0, *, exact: bool = False,
             propagator: Propagator | None = None) -> CorrelatorValue:
    """Estimate a single correlator (see :class:`CorrelatorEngine`)."""
    engine = CorrelatorEngine(system, spec.n_psi, seed, exact, propagator)
    return engine.estimate(spec)


def _family_guard(spec: CorrelatorSpec, allowed: set[str]) -> None:
    if spec.family not in allowed:
        raise ValueError(f"expected a spec of family {sorted(allowed)}, got {spec.family}")


def estimate_auto_toc(spec: CorrelatorSpec, system: SystemSpec, seed=0, **kwargs) -> CorrelatorValue:
    """Probe auto-correlation ``<V_p(t) V_p>``."""
    _family_guard(spec, {"AutoTOC"})
    return estimate(spec, system, seed, **kwargs)


def estimate_perturbed_toc(spec: CorrelatorSpec, system: SystemSpec, seed=0, **kwargs) -> CorrelatorValue:
    """Probe TOC with a local insertion ``W_x`` at ``t/2``."""
    _family_guard(spec, {"PerturbedTOC"})
    return estimate(spec, system, seed, **kwargs)


def estimate_local_otoc(spec: CorrelatorSpec, system: SystemSpec, seed=0, **kwargs) -> CorrelatorValue:
    """Probe OTOC ``<V_p(t) W_x V_p(t) W_x>`` via forward and reversed evolution."""
    _family_guard(spec, {"LocalOTOC"})
    return estimate(spec, system, seed, **kwargs)


def estimate_two_point_toc(spec: CorrelatorSpec, system: SystemSpec, seed=0, **kwargs) -> CorrelatorValue:
    """Two-point function ``<V_x(t) W_x'>``."""
    _family_guard(spec, {"TwoPointTOC"})
    return estimate(spec, system, seed, **kwargs)


def estimate_two_point_otoc(spec: CorrelatorSpec, system: SystemSpec, seed=0, **kwargs) -> CorrelatorValue:
    """Two-point OTOC ``<V_x(t) W_x' V_x(t) W_x'>``."""
    _family_guard(spec, {"TwoPointOTOC"})
    return estimate(spec, system, seed, **kwargs)


def estimate_global_correlators(spec: CorrelatorSpec, system: SystemSpec, seed=0, **kwargs) -> CorrelatorValue:
    """TOC or OTOC with the insertion replaced by the global rotation ``exp(i phi sum W)``."""
    _family_guard(spec, set(_GLOBAL))
    return estimate(spec, system, seed, **kwargs)


def inject_readout_noise(value: CorrelatorValue, delta: float, seed=0) -> CorrelatorValue:
    """Add Gaussian read-out error of width ``delta``; the exact mean is kept."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    noise = delta * rng_stream(*_as_keys(seed)).standard_normal() if delta > 0 else 0.0
    return replace(value, noisy=value.mean + noise)


def add_readout_noise(values: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Array version of :func:`inject_readout_noise`."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    values = np.asarray(values, dtype=float)
    if delta == 0:
        return values.copy()
    return values + delta * rng.standard_normal(values.shape)
