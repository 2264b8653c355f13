"""Geometries, disorder realizations and the spin (and spin-cavity) Hamiltonians.

The field Hamiltonian is ``H_f = sum_{i,a} h_i^a sigma_i^a`` and the coupling
Hamiltonian is ``H_c = sum_<ij> J_ij (X_i X_j + Y_i Y_j - 2 Z_i Z_j)``.  With a
cavity mode the two Floquet Hamiltonians become

    H_1 = +-H_f + g sum_i (a^dag s_i^- + a s_i^+) + omega a^dag a
    H_2 = +-H_c + g sum_i (a^dag s_i^- + a s_i^+) + omega a^dag a

where only the spin part changes sign on the backward leg.  Here
``s^- = |0><1|`` and ``s^+ = |1><0|``, so ``sum_i (1 - Z_i)/2 + a^dag a`` is
conserved by the coupling and exchange terms.
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .operators import PauliString, rng_stream

__all__ = [
    "Geometry",
    "chain",
    "ring",
    "crossed_chains",
    "weak_link_ring",
    "three_way",
    "load_geometry",
    "save_geometry",
    "DisorderRealization",
    "CavitySpec",
    "SystemSpec",
    "HamiltonianTerms",
    "sample_disorder",
    "build_field_hamiltonian",
    "build_coupling_hamiltonian",
    "build_cavity_hamiltonians",
    "FIELD_RANGE",
    "COUPLING_RANGE",
    "FLOQUET_HALF_PERIOD",
    "make_system",
    "probe_path",
]

FIELD_RANGE = (-1.0, 1.0)
COUPLING_RANGE = (0.6, 1.4)
FLOQUET_HALF_PERIOD = math.pi / 2
GEOMETRY_FORMAT_VERSION = 1

Edge = tuple[int, int]


def _edge(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Geometry:
    """Connectivity of the spin system.

    ``kind`` names the construction (``chain``, ``ring``, ``crossed``,
    ``weak_link_ring``, ``three_way``) and ``params`` keeps its arguments so a
    geometry can be rebuilt from a file.
    """

    n_sites: int
    edges: tuple[Edge, ...]
    probe: int | None = 0
    weak_link: Edge | None = None
    kind: str = "custom"
    params: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        edges = tuple(sorted({_edge(*e) for e in self.edges}))
        object.__setattr__(self, "edges", edges)
        if self.weak_link is not None:
            object.__setattr__(self, "weak_link", _edge(*self.weak_link))
        if self.n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop on site {a}")
            if not (0 <= a < self.n_sites and 0 <= b < self.n_sites):
                raise ValueError(f"edge {(a, b)} references a site outside 0..{self.n_sites - 1}")
        if self.probe is not None and not 0 <= self.probe < self.n_sites:
            raise ValueError("probe site out of range")
        if self.weak_link is not None and self.weak_link not in edges:
            raise ValueError("weak link must be one of the edges")
        if not self._connected():
            raise ValueError("geometry is not connected")

    def _connected(self) -> bool:
        if self.n_sites == 1:
            return True
        return all(d >= 0 for d in self.distances(0))

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n_sites)]
        for a, b in self.edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        return nbrs

    def distances(self, source: int) -> list[int]:
        """Graph distances from ``source`` by BFS (-1 for unreachable)."""
        nbrs = self.neighbors()
        dist = [-1] * self.n_sites
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def degree(self, site: int) -> int:
        return sum(site in e for e in self.edges)

    def param(self, name: str, default=None):
        return dict(self.params).get(name, default)

    def sites_near_link(self, radius: int = 2) -> tuple[list[int], list[int]]:
        """Sites at distance ``0..radius`` from the weak link on each side.

        Distances are measured with the link removed, so the two lists are
        the two fragments' sites closest to the link, nearest first.
        """
        if self.weak_link is None:
            raise ValueError("geometry has no weak link")
        a, b = self.weak_link
        cut = Geometry.__new__(Geometry)
        object.__setattr__(cut, "n_sites", self.n_sites)
        object.__setattr__(cut, "edges", tuple(e for e in self.edges if e != self.weak_link))
        da, db = Geometry.distances(cut, a), Geometry.distances(cut, b)
        left = sorted((s for s in range(self.n_sites) if 0 <= da[s] <= radius and (db[s] < 0 or da[s] < db[s])),
                      key=lambda s: (da[s], s))
        right = sorted((s for s in range(self.n_sites) if 0 <= db[s] <= radius and (da[s] < 0 or db[s] < da[s])),
                       key=lambda s: (db[s], s))
        return left, right

    def to_dict(self) -> dict:
        out = {
            "format": "otoclab-geometry",
            "version": GEOMETRY_FORMAT_VERSION,
            "kind": self.kind,
            "n_sites": self.n_sites,
            "probe": self.probe,
            "edges": [list(e) for e in self.edges],
            "weak_link": list(self.weak_link) if self.weak_link else None,
        }
        if self.params:
            out["params"] = {k: v for k, v in self.params}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Geometry":
        if data.get("format") != "otoclab-geometry":
            raise ValueError("not an otoclab geometry document")
        if int(data.get("version", 0)) != GEOMETRY_FORMAT_VERSION:
            raise ValueError(f"unsupported geometry format version {data.get('version')}")
        link = data.get("weak_link")
        return cls(
            n_sites=int(data["n_sites"]),
            edges=tuple(tuple(int(v) for v in e) for e in data["edges"]),
            probe=None if data.get("probe") is None else int(data["probe"]),
            weak_link=None if link is None else (int(link[0]), int(link[1])),
            kind=data.get("kind", "custom"),
            params=tuple(sorted((data.get("params") or {}).items())),
        )


def save_geometry(geometry: Geometry, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(geometry.to_dict(), sort_keys=False))


def load_geometry(path: str | Path) -> Geometry:
    return Geometry.from_dict(yaml.safe_load(Path(path).read_text()))


def chain(n_sites: int, probe: int = 0) -> Geometry:
    """Open chain ``0 - 1 - ... - (n-1)``."""
    return Geometry(n_sites, tuple((i, i + 1) for i in range(n_sites - 1)), probe, kind="chain")


def ring(n_sites: int, probe: int = 0) -> Geometry:
    if n_sites < 3:
        raise ValueError("a ring needs at least 3 sites")
    edges = tuple((i, (i + 1) % n_sites) for i in range(n_sites))
    return Geometry(n_sites, edges, probe, kind="ring")


def weak_link_ring(n_sites: int, link: Edge | None = None, probe: int | None = None) -> Geometry:
    """Periodic ring with one designated weak bond.

    The default link sits opposite site 0, between ``n/2 - 1`` and ``n/2``.
    """
    link = link if link is not None else (n_sites // 2 - 1, n_sites // 2)
    base = ring(n_sites)
    return Geometry(n_sites, base.edges, probe, weak_link=link, kind="weak_link_ring",
                    params=(("link", list(_edge(*link))),))


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (i < extra) for i in range(parts)]


def crossed_chains(n_sites: int, d: int) -> Geometry:
    """Two chains crossing at a site a graph distance ``d`` from the probe.

    The probe (site 0) sits at the end of one arm; sites ``0..d`` run along
    that arm to the intersection ``d``.  The remaining sites are shared as
    evenly as possible between the other arms (three when ``d >= 1``, four
    when the probe is the intersection), continuing arm first.  Arms that
    would be empty are dropped, so for large ``d`` the cross degenerates.
    """
    if not 0 <= d < n_sites:
        raise ValueError("d must satisfy 0 <= d < n_sites")
    edges = [(i, i + 1) for i in range(d)]
    n_arms = 3 if d >= 1 else 4
    nxt = d + 1
    for length in _split(n_sites - d - 1, n_arms):
        prev = d
        for _ in range(length):
            edges.append((prev, nxt))
            prev = nxt
            nxt += 1
    return Geometry(n_sites, tuple(edges), probe=0, kind="crossed", params=(("d", d),))


def three_way(n_sites: int, d: int, which: str) -> Geometry:
    """One of three geometries sharing the probe-side path ``0..d``.

    ``A``: the path continues as a straight chain.
    ``B``: a T-junction at site ``d`` with two arms.
    ``C``: sites ``d..n-1`` close into a loop attached at ``d``.
    """
    which = which.upper()
    rest = n_sites - d - 1
    if rest < 3:
        raise ValueError("need at least three sites beyond the shared path")
    edges = [(i, i + 1) for i in range(d)]
    if which == "A":
        edges += [(i, i + 1) for i in range(d, n_sites - 1)]
    elif which == "B":
        first, second = _split(rest, 2)
        prev = d
        for s in range(d + 1, d + 1 + first):
            edges.append((prev, s))
            prev = s
        prev = d
        for s in range(d + 1 + first, n_sites):
            edges.append((prev, s))
            prev = s
    elif which == "C":
        edges += [(i, i + 1) for i in range(d, n_sites - 1)]
        edges.append((n_sites - 1, d))
    else:
        raise ValueError("which must be A, B or C")
    return Geometry(n_sites, tuple(edges), probe=0, kind="three_way",
                    params=(("d", d), ("which", which)))


@dataclass(frozen=True)
class DisorderRealization:
    """On-site fields ``h[site, axis]`` and bond couplings ``J[edge]``."""

    fields: np.ndarray
    couplings: dict
    weak_link: float | None = None
    seed: tuple = ()

    def __post_init__(self):
        h = np.asarray(self.fields, dtype=float)
        if h.ndim != 2 or h.shape[1] != 3:
            raise ValueError("fields must have shape (n_sites, 3)")
        object.__setattr__(self, "fields", h)
        if self.weak_link is not None and self.weak_link < 0:
            raise ValueError("weak-link coupling must be nonnegative")

    def coupling(self, edge: Edge) -> float:
        return float(self.couplings[_edge(*edge)])


def sample_disorder(geometry: Geometry, weak_link: float | None = None, seed: int = 0,
                    *keys: int) -> DisorderRealization:
    """Uniform i.i.d. fields in [-1, 1] and couplings in [0.6, 1.4].

    The weak-link edge, if any, still receives a draw (so realizations with
    and without a link share every other parameter) but ``weak_link``
    overrides it when the Hamiltonian is built.
    """
    rng = rng_stream(seed, *keys)
    h = rng.uniform(*FIELD_RANGE, size=(geometry.n_sites, 3))
    j = rng.uniform(*COUPLING_RANGE, size=len(geometry.edges))
    couplings = {e: float(v) for e, v in zip(geometry.edges, j)}
    if geometry.weak_link is not None and weak_link is None:
        weak_link = 0.0
    return DisorderRealization(h, couplings, weak_link, (seed, *keys))


@dataclass(frozen=True)
class CavitySpec:
    g: float
    omega: float = 1.7
    cutoff: int | None = None

    def dimension(self, n_sites: int) -> int:
        return (self.cutoff if self.cutoff is not None else n_sites) + 1


@dataclass(frozen=True)
class SystemSpec:
    """A concrete Hamiltonian instance: geometry, disorder, drive and cavity."""

    geometry: Geometry
    disorder: DisorderRealization
    drive: str = "floquet"
    half_period: float = FLOQUET_HALF_PERIOD
    cavity: CavitySpec | None = None

    def __post_init__(self):
        if self.drive not in ("floquet", "static"):
            raise ValueError("drive must be 'floquet' or 'static'")
        if self.disorder.fields.shape[0] != self.geometry.n_sites:
            raise ValueError("disorder does not match geometry size")
        if self.cavity is not None and self.cavity.cutoff is not None:
            if self.cavity.cutoff > self.geometry.n_sites:
                raise ValueError("cavity cutoff must not exceed the number of spins")
            if self.cavity.cutoff < self.geometry.n_sites:
                warnings.warn("cavity cutoff below L truncates the excitation space", stacklevel=2)

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites

    @property
    def cavity_dim(self) -> int:
        return 1 if self.cavity is None else self.cavity.dimension(self.n_sites)

    @property
    def dim(self) -> int:
        return (1 << self.n_sites) * self.cavity_dim

    def coupling(self, edge: Edge) -> float:
        """Effective coupling of ``edge`` (the weak-link value on the link)."""
        edge = _edge(*edge)
        if edge == self.geometry.weak_link:
            return float(self.disorder.weak_link or 0.0)
        return self.disorder.coupling(edge)

    def with_coupling(self, edge: Edge, value: float) -> "SystemSpec":
        """Copy with one bond coupling replaced (the weak link included)."""
        edge = _edge(*edge)
        if edge not in self.geometry.edges:
            raise KeyError(f"edge {edge} not in geometry")
        if edge == self.geometry.weak_link:
            return replace(self, disorder=replace(self.disorder, weak_link=float(value)))
        couplings = dict(self.disorder.couplings)
        couplings[edge] = float(value)
        return replace(self, disorder=replace(self.disorder, couplings=couplings))


@dataclass(frozen=True)
class CavityTerms:
    g: float
    omega: float
    dim: int


@dataclass(frozen=True)
class HamiltonianTerms:
    """Real-weighted Pauli strings plus optional spin-cavity terms."""

    n_qubits: int
    terms: tuple[tuple[float, PauliString], ...] = ()
    cavity: CavityTerms | None = None

    def __post_init__(self):
        for w, p in self.terms:
            if not np.isreal(w) or not p.is_hermitian:
                raise ValueError("Hamiltonian terms must be real-weighted Hermitian Pauli strings")

    def scaled(self, factor: float) -> "HamiltonianTerms":
        """Spin part multiplied by ``factor``; cavity terms unchanged."""
        return replace(self, terms=tuple((factor * w, p) for w, p in self.terms))

    def __add__(self, other: "HamiltonianTerms") -> "HamiltonianTerms":
        if self.n_qubits != other.n_qubits:
            raise ValueError("qubit counts differ")
        if self.cavity and other.cavity:
            raise ValueError("cannot add two sets of cavity terms")
        return HamiltonianTerms(self.n_qubits, self.terms + other.terms, self.cavity or other.cavity)

    @property
    def cavity_dim(self) -> int:
        return 1 if self.cavity is None else self.cavity.dim

    @property
    def dim(self) -> int:
        return (1 << self.n_qubits) * self.cavity_dim


def build_field_hamiltonian(spec: SystemSpec) -> HamiltonianTerms:
    terms = []
    for site, h in enumerate(spec.disorder.fields):
        for axis, w in zip("XYZ", h):
            if w != 0.0:
                terms.append((float(w), PauliString.single(site, axis)))
    return HamiltonianTerms(spec.n_sites, tuple(terms))


def build_coupling_hamiltonian(spec: SystemSpec) -> HamiltonianTerms:
    terms = []
    for a, b in spec.geometry.edges:
        j = spec.coupling((a, b))
        if j == 0.0:
            continue
        for axis, c in (("X", 1.0), ("Y", 1.0), ("Z", -2.0)):
            terms.append((c * j, PauliString(((a, axis), (b, axis)))))
    return HamiltonianTerms(spec.n_sites, tuple(terms))


def build_cavity_hamiltonians(spec: SystemSpec, direction: str = "forward") -> tuple[HamiltonianTerms, HamiltonianTerms]:
    """The pair ``(H_1, H_2)`` for one direction of evolution."""
    if spec.cavity is None:
        raise ValueError("system has no cavity")
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    sign = 1.0 if direction == "forward" else -1.0
    cav = CavityTerms(spec.cavity.g, spec.cavity.omega, spec.cavity_dim)
    h1 = replace(build_field_hamiltonian(spec).scaled(sign), cavity=cav)
    h2 = replace(build_coupling_hamiltonian(spec).scaled(sign), cavity=cav)
    return h1, h2


def make_system(geometry: Geometry, seed: int, *keys: int, weak_link: float | None = None,
                drive: str = "floquet", cavity: CavitySpec | None = None) -> SystemSpec:
    """Convenience: sample disorder and wrap it in a :class:`SystemSpec`."""
    return SystemSpec(geometry, sample_disorder(geometry, weak_link, seed, *keys), drive, cavity=cavity)


def probe_path(geometry: Geometry, length: int) -> list[Edge]:
    """Bonds at distance ``1..length`` from the probe along a shortest path.

    Bond ``k`` joins the sites at graph distance ``k-1`` and ``k``; ties are
    broken towards lower site indices.
    """
    if geometry.probe is None:
        raise ValueError("geometry has no probe")
    dist = geometry.distances(geometry.probe)
    nbrs = geometry.neighbors()
    path, here = [], geometry.probe
    for k in range(1, length + 1):
        nxt = sorted(v for v in nbrs[here] if dist[v] == k)
        if not nxt:
            raise ValueError(f"no site at distance {k} from the probe")
        path.append(_edge(here, nxt[0]))
        here = nxt[0]
    return path
