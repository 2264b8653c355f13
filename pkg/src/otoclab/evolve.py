"""Matrix-free time evolution.

Two engines sit behind one interface:

* ``krylov`` -- Lanczos propagation of ``exp(-iHt)|psi>`` with full
  reorthogonalization and adaptive sub-stepping, driven by a compiled
  term-by-term Hamiltonian action.  Works for every system, including the
  spin-cavity model.
* ``exact`` -- closed-form propagators for cavity-free systems: the field
  Hamiltonian is a sum of commuting single-site terms, so its propagator is a
  product of 2x2 rotations, and the coupling Hamiltonian conserves total
  ``Z`` so it is diagonalized sector by sector.  Static drives without a
  cavity are diagonalized densely.

Times passed to :class:`Propagator` are in Floquet periods; one period is
``H_f`` for ``T`` followed by ``H_c`` for ``T`` (``T = pi/2`` by default), and
a fractional time runs partially through the period in that order.  For a
static drive one "period" is the same Hamiltonian time ``2T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .operators import pauli_diagonal
from .system import (HamiltonianTerms, SystemSpec, build_cavity_hamiltonians,
                     build_coupling_hamiltonian, build_field_hamiltonian)

__all__ = [
    "CompiledHamiltonian",
    "apply_hamiltonian",
    "dense_hamiltonian",
    "krylov_propagate",
    "KrylovConvergenceError",
    "Segment",
    "EvolutionPlan",
    "evolve_plan",
    "schedule_plan",
    "Propagator",
]

DEFAULT_TOL = 1e-8
DEFAULT_KRYLOV_DIM = 30
FULL_REORTH_MAX_DIM = 4096


class KrylovConvergenceError(RuntimeError):
    """Raised when the Lanczos step size falls below the minimum step."""


class CompiledHamiltonian:
    """Term-by-term action of a :class:`HamiltonianTerms` on state vectors.

    Pauli terms sharing a flip mask are merged into one coefficient vector,
    so ``H psi = sum_f D_f * psi[idx ^ f]`` plus the cavity terms.  Nothing of
    size ``dim**2`` is ever stored.
    """

    def __init__(self, hamiltonian: HamiltonianTerms):
        self.hamiltonian = hamiltonian
        n = hamiltonian.n_qubits
        self.n_qubits = n
        self.spin_dim = 1 << n
        self.cavity = hamiltonian.cavity
        self.cavity_dim = hamiltonian.cavity_dim
        self.dim = self.spin_dim * self.cavity_dim
        idx = np.arange(self.spin_dim, dtype=np.int64)
        groups: dict[int, np.ndarray] = {}
        for w, p in hamiltonian.terms:
            flip, coef = pauli_diagonal(p, n)
            groups[flip] = groups.get(flip, 0) + w * coef
        self.diagonal = np.real(groups.pop(0, np.zeros(self.spin_dim)))
        self.offdiag = [(idx ^ f, d) for f, d in sorted(groups.items()) if np.any(d != 0)]
        self.groups = {0: self.diagonal.astype(complex), **{f: d for f, d in groups.items()}}
        if self.cavity is not None:
            bits = [1 << (n - 1 - i) for i in range(n)]
            self._exchange = [(idx ^ b, (idx & b) == 0) for b in bits]
            occ = np.arange(self.cavity_dim, dtype=float)
            self._sqrt_n = np.sqrt(occ)
            self._occ = occ

    @property
    def sparse(self) -> sp.csr_matrix:
        """The same operator as a CSR matrix (built once, ``O(nnz)`` memory)."""
        if getattr(self, "_csr", None) is None:
            self._csr = self._build_sparse()
        return self._csr

    def _build_sparse(self) -> sp.csr_matrix:
        sd, cd = self.spin_dim, self.cavity_dim
        idx = np.arange(sd, dtype=np.int64)
        occ = np.arange(cd, dtype=np.int64)
        rows = idx[:, None] * cd + occ[None, :]
        diag = np.broadcast_to(self.diagonal[:, None], (sd, cd)).astype(complex)
        if self.cavity is not None:
            diag = diag + self.cavity.omega * occ[None, :]
        r_parts, c_parts, d_parts = [rows.ravel()], [rows.ravel()], [diag.ravel()]
        for perm, coef in self.offdiag:
            r_parts.append(rows.ravel())
            c_parts.append((perm[:, None] * cd + occ[None, :]).ravel())
            d_parts.append(np.repeat(coef, cd))
        if self.cavity is not None and self.cavity.g != 0.0 and cd > 1:
            g = self.cavity.g
            for perm, target_zero in self._exchange:
                # a^dag s^-: spin 1 -> 0 (target has the bit cleared), photon m -> m+1
                tgt = idx[target_zero]
                src = perm[target_zero]
                m = occ[:-1]
                r = (tgt[:, None] * cd + m[None, :] + 1).ravel()
                c = (src[:, None] * cd + m[None, :]).ravel()
                amp = np.broadcast_to(g * np.sqrt(m + 1.0), (len(tgt), cd - 1)).ravel().astype(complex)
                r_parts += [r, c]
                c_parts += [c, r]
                d_parts += [amp, amp]
        mat = sp.coo_matrix((np.concatenate(d_parts), (np.concatenate(r_parts), np.concatenate(c_parts))),
                            shape=(self.dim, self.dim))
        return mat.tocsr()

    def norm_bound(self) -> float:
        """Cheap upper bound on the operator 2-norm."""
        bound = sum(abs(w) for w, _ in self.hamiltonian.terms)
        if self.cavity is not None:
            c = self.cavity
            bound += abs(c.omega) * (self.cavity_dim - 1)
            bound += 2 * abs(c.g) * self.n_qubits * math.sqrt(max(self.cavity_dim - 1, 1))
        return bound

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        shape = psi.shape
        v = psi.reshape(self.spin_dim, self.cavity_dim, -1)
        out = self.diagonal[:, None, None] * v
        for perm, coef in self.offdiag:
            out += coef[:, None, None] * v[perm]
        if self.cavity is not None and self.cavity_dim > 1:
            c = self.cavity
            if c.omega != 0.0:
                out += c.omega * self._occ[None, :, None] * v
            if c.g != 0.0:
                lowered = np.zeros_like(v)
                raised = np.zeros_like(v)
                for perm, target_zero in self._exchange:
                    src = v[perm]
                    lowered[target_zero] += src[target_zero]
                    raised[~target_zero] += src[~target_zero]
                # a^dag s^-: spin 1 -> 0, photon +1
                out[:, 1:] += c.g * self._sqrt_n[None, 1:, None] * lowered[:, :-1]
                # a s^+: spin 0 -> 1, photon -1
                out[:, :-1] += c.g * self._sqrt_n[None, 1:, None] * raised[:, 1:]
        return out.reshape(shape)

    __matmul__ = matvec


def _compiled(h) -> CompiledHamiltonian:
    return h if isinstance(h, CompiledHamiltonian) else CompiledHamiltonian(h)


def apply_hamiltonian(hamiltonian, psi: np.ndarray) -> np.ndarray:
    """``H|psi>`` without materializing ``H``."""
    op = _compiled(hamiltonian)
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[0] != op.dim:
        raise ValueError(f"state dimension {psi.shape[0]} does not match Hamiltonian dimension {op.dim}")
    return op.matvec(psi)


def dense_hamiltonian(hamiltonian) -> np.ndarray:
    """Dense matrix of a (small) Hamiltonian, column by column."""
    op = _compiled(hamiltonian)
    if op.dim > 1 << 12:
        raise ValueError("system too large for a dense Hamiltonian")
    return op.matvec(np.eye(op.dim, dtype=complex))


def _orthogonalize(w, basis, count):
    for _ in range(2):
        v = basis[:count]
        coeffs = np.einsum("jdk,dk->jk", v.conj(), w)
        w = w - np.einsum("jdk,jk->dk", v, coeffs)
    return w


def _lanczos(matvec, v0, m, reorthogonalize=True):
    """``m`` Lanczos steps on each column of ``v0`` (columns unit norm).

    With ``reorthogonalize`` every new vector is orthogonalized twice against
    the whole basis; otherwise only the three-term recurrence is used.
    """
    dim, k = v0.shape
    basis = np.zeros((m, dim, k), dtype=complex)
    alpha = np.zeros((m, k))
    beta = np.zeros((m, k))  # beta[j] couples vectors j and j+1; beta[m-1] is the residual
    basis[0] = v0
    for j in range(m):
        w = matvec(basis[j])
        alpha[j] = np.real(np.einsum("dk,dk->k", basis[j].conj(), w))
        if reorthogonalize:
            w = _orthogonalize(w, basis, j + 1)
        else:
            w -= alpha[j] * basis[j]
            if j:
                w -= beta[j - 1] * basis[j - 1]
        b = np.linalg.norm(w, axis=0)
        live = b > 1e-13
        beta[j] = np.where(live, b, 0.0)
        if j + 1 < m:
            basis[j + 1] = np.where(live, w / np.where(live, b, 1.0), 0.0)
    return basis, alpha, beta


def krylov_propagate(hamiltonian, psi: np.ndarray, t: float, tol: float = DEFAULT_TOL,
                     max_krylov_dim: int = DEFAULT_KRYLOV_DIM,
                     reorthogonalize: bool = True) -> np.ndarray:
    """``exp(-iHt)|psi>`` by Lanczos with adaptive sub-stepping.

    ``psi`` may be a single vector or a ``(dim, k)`` batch; every column gets
    its own Krylov space.  The sign of ``t`` selects the direction.  The
    per-step a posteriori error estimate ``beta_m |(exp(-i tau T) e_1)_m|`` is
    kept below ``tol * tau / |t|`` so the accumulated error stays below
    ``tol`` in the Euclidean norm.  Each Krylov space is used for the longest
    sub-step that passes the check, searched on a geometric ladder.

    Raises
    ------
    KrylovConvergenceError
        If no sub-step longer than ``|t| * 1e-7`` passes the error check.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = _compiled(hamiltonian)
    psi = np.asarray(psi, dtype=complex)
    single = psi.ndim == 1
    if psi.shape[0] != op.dim:
        raise ValueError("state dimension does not match Hamiltonian")
    v = psi.reshape(op.dim, -1).copy()
    if t == 0 or v.shape[1] == 0:
        return v[:, 0] if single else v
    matvec = op.sparse.dot if op.dim > 64 else op.matvec
    total = abs(t)
    direction = math.copysign(1.0, t)
    m = max(1, min(max_krylov_dim, op.dim))
    min_step = total * 1e-7
    done = 0.0
    while done < total * (1 - 1e-14):
        norms = np.linalg.norm(v, axis=0)
        live = norms > 0
        unit = np.where(live, v / np.where(live, norms, 1.0), 0.0)
        basis, alpha, beta = _lanczos(matvec, unit, m, reorthogonalize)
        tri = np.zeros((v.shape[1], m, m))
        ar = np.arange(m)
        tri[:, ar, ar] = alpha.T
        tri[:, ar[:-1], ar[1:]] = beta[:-1].T
        tri[:, ar[1:], ar[:-1]] = beta[:-1].T
        evals, evecs = np.linalg.eigh(tri)
        first = evecs[:, 0, :].conj()
        residual = beta[m - 1] * norms
        exact_space = m >= op.dim

        def coefficients(tau):
            phases = np.exp(-1j * direction * tau * evals) * first
            return np.einsum("kij,kj->ki", evecs, phases)

        def accepted(tau):
            c = coefficients(tau)
            err = 0.0 if exact_space else np.max(residual * np.abs(c[:, m - 1]))
            return err <= 0.5 * tol * tau / total, c, err

        tau = total - done
        ok, c, err = accepted(tau)
        while not ok:
            tau *= 0.75
            if tau < min_step:
                raise KrylovConvergenceError(
                    f"Krylov step fell below {min_step:.3e} (error estimate {err:.3e}, "
                    f"krylov dim {m}, norm bound {op.norm_bound():.3e})")
            ok, c, err = accepted(tau)
        v = np.einsum("jdk,kj->dk", basis, c) * norms
        done += tau
    return v[:, 0] if single else v


@dataclass(frozen=True)
class Segment:
    hamiltonian: HamiltonianTerms
    duration: float
    direction: str = "forward"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment durations must be positive")
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")


@dataclass
class EvolutionPlan:
    segments: list[Segment] = field(default_factory=list)
    tolerance: float = DEFAULT_TOL
    max_krylov_dim: int = DEFAULT_KRYLOV_DIM

    @property
    def total_time(self) -> float:
        return sum(s.duration for s in self.segments)


def evolve_plan(plan: EvolutionPlan, psi: np.ndarray) -> np.ndarray:
    """Apply the segments in order with the Krylov engine.

    A backward segment negates the spin part of its Hamiltonian; cavity
    exchange and frequency terms keep their sign.
    """
    cache: dict[int, CompiledHamiltonian] = {}
    out = np.asarray(psi, dtype=complex)
    n_seg = max(len(plan.segments), 1)
    for seg in plan.segments:
        h = seg.hamiltonian if seg.direction == "forward" else seg.hamiltonian.scaled(-1.0)
        key = id(seg.hamiltonian) * 2 + (seg.direction == "backward")
        if key not in cache:
            cache[key] = CompiledHamiltonian(h)
        out = krylov_propagate(cache[key], out, seg.duration, plan.tolerance / n_seg, plan.max_krylov_dim)
    return out


def _schedule_pieces(t0: float, t1: float, drive: str) -> list[tuple[str, float]]:
    """Split the period interval ``[t0, t1]`` into (kind, fraction-of-period) pieces."""
    if drive == "static":
        return [("static", t1 - t0)] if t1 > t0 else []
    pieces = []
    t = t0
    eps = 1e-12
    while t < t1 - eps:
        k = math.floor(t + eps)
        phase = t - k
        if phase < 0.5 - eps:
            end = min(k + 0.5, t1)
            kind = "field"
        else:
            end = min(k + 1.0, t1)
            kind = "coupling"
        if end - t > eps:
            if pieces and pieces[-1][0] == kind:
                pieces[-1] = (kind, pieces[-1][1] + end - t)
            else:
                pieces.append((kind, end - t))
        t = end
    return pieces


def schedule_plan(spec: SystemSpec, t0: float, t1: float, direction: str = "forward",
                  tolerance: float = DEFAULT_TOL, max_krylov_dim: int = DEFAULT_KRYLOV_DIM,
                  _hams: dict | None = None) -> EvolutionPlan:
    """Plan for the drive between times ``t0 <= t1`` (in periods).

    ``forward`` realizes ``U(t0 -> t1)``; ``backward`` replays the same
    pieces in reverse order with the spin Hamiltonian negated, which equals
    ``U(t0 -> t1)^dag`` whenever the reversal is perfect.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    hams = _hams if _hams is not None else _forward_hamiltonians(spec)
    pieces = _schedule_pieces(t0, t1, spec.drive)
    if direction == "backward":
        pieces = pieces[::-1]
    period = 2 * spec.half_period
    segs = [Segment(hams[kind], frac * period, direction) for kind, frac in pieces]
    return EvolutionPlan(segs, tolerance, max_krylov_dim)


def _forward_hamiltonians(spec: SystemSpec) -> dict[str, HamiltonianTerms]:
    if spec.cavity is not None:
        h1, h2 = build_cavity_hamiltonians(spec, "forward")
        return {"field": h1, "coupling": h2, "static": h1 + build_coupling_hamiltonian(spec)}
    hf, hc = build_field_hamiltonian(spec), build_coupling_hamiltonian(spec)
    return {"field": hf, "coupling": hc, "static": hf + hc}


class _FieldKernel:
    """``exp(-i s H_f)`` as a product of single-site rotations."""

    def __init__(self, spec: SystemSpec):
        self.n = spec.n_sites
        self.fields = spec.disorder.fields
        self.cache: dict[float, list[np.ndarray]] = {}

    def _rotations(self, s):
        key = round(s, 14)
        if key not in self.cache:
            mats = []
            for h in self.fields:
                mag = float(np.linalg.norm(h))
                if mag == 0.0:
                    mats.append(None)
                    continue
                nx, ny, nz = h / mag
                c, sn = math.cos(s * mag), math.sin(s * mag)
                mats.append(np.array([[c - 1j * sn * nz, -1j * sn * (nx - 1j * ny)],
                                      [-1j * sn * (nx + 1j * ny), c + 1j * sn * nz]]))
            self.cache[key] = mats
        return self.cache[key]

    def apply(self, psi, s):
        k = psi.shape[1]
        out = psi
        for site, u in enumerate(self._rotations(s)):
            if u is None:
                continue
            view = out.reshape(1 << site, 2, -1)
            out = np.einsum("ab,xbk->xak", u, view).reshape(-1, k)
        return out


class _SectorKernel:
    """``exp(-i s H)`` for a Hamiltonian block-diagonal in total ``Z``."""

    def __init__(self, hamiltonian: HamiltonianTerms):
        op = CompiledHamiltonian(hamiltonian)
        n = hamiltonian.n_qubits
        idx = np.arange(1 << n)
        weight = np.bitwise_count(idx)
        self.sectors = []
        for w in range(n + 1):
            rows = np.flatnonzero(weight == w)
            pos = np.full(1 << n, -1)
            pos[rows] = np.arange(len(rows))
            block = np.zeros((len(rows), len(rows)), dtype=complex)
            block[np.arange(len(rows)), np.arange(len(rows))] = op.diagonal[rows]
            for flip, coef in op.groups.items():
                if flip == 0:
                    continue
                c = coef[rows]
                nz = np.flatnonzero(c)
                cols = pos[rows[nz] ^ flip]
                if np.any(cols < 0):
                    raise ValueError("Hamiltonian does not conserve total Z")
                block[nz, cols] += c[nz]
            evals, evecs = np.linalg.eigh(block)
            self.sectors.append((rows, evals, evecs))
        self.cache: dict[float, list[np.ndarray]] = {}

    def apply(self, psi, s):
        key = round(s, 14)
        if key not in self.cache:
            self.cache[key] = [(q * np.exp(-1j * s * e)) @ q.conj().T for _, e, q in self.sectors]
        out = np.empty_like(psi)
        for (rows, _, _), u in zip(self.sectors, self.cache[key]):
            out[rows] = u @ psi[rows]
        return out


class _DenseKernel:
    def __init__(self, hamiltonian: HamiltonianTerms):
        self.evals, self.evecs = np.linalg.eigh(dense_hamiltonian(hamiltonian))
        self.cache: dict[float, np.ndarray] = {}

    def apply(self, psi, s):
        key = round(s, 14)
        if key not in self.cache:
            q = self.evecs
            self.cache[key] = (q * np.exp(-1j * s * self.evals)) @ q.conj().T
        return self.cache[key] @ psi


class Propagator:
    """Evolution of state batches under one system's drive.

    Parameters
    ----------
    spec : SystemSpec
    method : {"auto", "krylov", "exact"}
        ``auto`` picks ``exact`` for cavity-free systems (static drives up to
        10 spins) and ``krylov`` otherwise.
    tolerance, max_krylov_dim :
        Krylov settings; ignored by the exact engine.
    reorthogonalize : bool, optional
        Full Lanczos reorthogonalization.  Defaults to on up to dimension
        ``FULL_REORTH_MAX_DIM`` and off above it, where its cost would
        dominate the propagation.
    """

    def __init__(self, spec: SystemSpec, method: str = "auto", tolerance: float = DEFAULT_TOL,
                 max_krylov_dim: int = DEFAULT_KRYLOV_DIM, reorthogonalize: bool | None = None):
        if method == "auto":
            if spec.cavity is not None or (spec.drive == "static" and spec.n_sites > 10):
                method = "krylov"
            else:
                method = "exact"
        if method == "exact" and spec.cavity is not None:
            raise ValueError("the exact engine does not support a cavity")
        if method not in ("krylov", "exact"):
            raise ValueError(f"unknown method {method!r}")
        self.spec = spec
        self.method = method
        self.tolerance = tolerance
        self.max_krylov_dim = max_krylov_dim
        if reorthogonalize is None:
            reorthogonalize = spec.dim <= FULL_REORTH_MAX_DIM
        self.reorthogonalize = reorthogonalize
        self.period = 2 * spec.half_period
        self._hams = _forward_hamiltonians(spec)
        self._kernels: dict[str, object] = {}
        self._compiled: dict[tuple[str, str], CompiledHamiltonian] = {}

    @property
    def dim(self) -> int:
        return self.spec.dim

    def _kernel(self, kind):
        if kind not in self._kernels:
            if kind == "field":
                self._kernels[kind] = _FieldKernel(self.spec)
            elif kind == "coupling":
                self._kernels[kind] = _SectorKernel(self._hams["coupling"])
            else:
                self._kernels[kind] = _DenseKernel(self._hams["static"])
        return self._kernels[kind]

    def _krylov(self, kind, direction):
        key = (kind, direction)
        if key not in self._compiled:
            h = self._hams[kind]
            self._compiled[key] = CompiledHamiltonian(h if direction == "forward" else h.scaled(-1.0))
        return self._compiled[key]

    def plan(self, t0: float, t1: float, direction: str = "forward") -> EvolutionPlan:
        return schedule_plan(self.spec, t0, t1, direction, self.tolerance, self.max_krylov_dim, self._hams)

    def evolve(self, psi: np.ndarray, t0: float, t1: float, direction: str = "forward") -> np.ndarray:
        """Evolve through ``[t0, t1]`` forward, or undo it (``backward``)."""
        if t1 < t0 - 1e-12:
            raise ValueError("t1 must be >= t0")
        psi = np.asarray(psi, dtype=complex)
        single = psi.ndim == 1
        v = psi.reshape(self.dim, -1)
        pieces = _schedule_pieces(t0, t1, self.spec.drive)
        if direction == "backward":
            pieces = pieces[::-1]
        sign = 1.0 if direction == "forward" else -1.0
        n_pieces = max(len(pieces), 1)
        for kind, frac in pieces:
            s = frac * self.period
            if self.method == "exact":
                v = self._kernel(kind).apply(v, sign * s)
            else:
                v = krylov_propagate(self._krylov(kind, direction), v, s,
                                     self.tolerance / n_pieces, self.max_krylov_dim,
                                     self.reorthogonalize)
        return v[:, 0] if single else v


def propagate_times(prop: Propagator, psi: np.ndarray, times: Sequence[float]) -> list[np.ndarray]:
    """States at each of the (sorted, nonnegative) ``times``, evolving incrementally."""
    out, t_prev, v = [], 0.0, psi
    for t in times:
        if t < t_prev - 1e-12:
            raise ValueError("times must be sorted")
        v = prop.evolve(v, t_prev, t)
        out.append(v)
        t_prev = t
    return out
