"""Pauli-string algebra, dense operators and Haar sampling.

Basis convention: site 0 is the most significant bit of the computational
basis index, so ``kron(A_0, A_1, ..., A_{L-1})`` is the matrix of the product
operator and ``X`` on site 0 maps ``|00>`` (index 0) to ``|10>`` (index 2).

State arrays have shape ``(2**L * cavity_dim,)`` or, for batches,
``(2**L * cavity_dim, k)``.  The spin index is the major index; a cavity
occupation register (if any) is the minor index.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "PauliString",
    "rng_stream",
    "apply_pauli",
    "pauli_expectation",
    "pauli_matrix",
    "sample_haar_state",
    "sample_haar_states",
    "sample_haar_unitary",
    "MAX_DENSE_QUBITS",
]

MAX_DENSE_QUBITS = 12

AXES = ("X", "Y", "Z")

_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# single-site products: (a, b) -> (phase, axis) with a*b = phase * axis
_PRODUCT = {
    ("X", "Y"): (1j, "Z"), ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"), ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"), ("X", "Z"): (-1j, "Y"),
}

_PHASES = (1, -1, 1j, -1j)


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *keys)``.

    Streams for different key tuples are statistically independent and do not
    depend on the order in which they are created, so parallel sweeps stay
    reproducible.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis times a phase in {1, -1, i, -i}.

    ``factors`` is stored as a sorted tuple of ``(site, axis)`` pairs; build
    instances with :meth:`from_dict` or the helpers :meth:`single` and
    :meth:`identity`.
    """

    factors: tuple[tuple[int, str], ...] = ()
    phase: complex = 1

    def __post_init__(self):
        sites = [s for s, _ in self.factors]
        if len(set(sites)) != len(sites):
            raise ValueError("repeated site in Pauli string")
        if any(s < 0 for s in sites):
            raise ValueError("negative site index")
        if any(a not in AXES for _, a in self.factors):
            raise ValueError(f"axis must be one of {AXES}")
        if not any(np.isclose(self.phase, p) for p in _PHASES):
            raise ValueError("phase must be one of +1, -1, +i, -i")
        object.__setattr__(self, "factors", tuple(sorted(self.factors)))
        object.__setattr__(self, "phase", complex(self.phase))

    @classmethod
    def from_dict(cls, factors: Mapping[int, str], phase: complex = 1) -> "PauliString":
        return cls(tuple((int(s), a.upper()) for s, a in factors.items()), phase)

    @classmethod
    def single(cls, site: int, axis: str) -> "PauliString":
        return cls(((int(site), axis.upper()),))

    @classmethod
    def identity(cls) -> "PauliString":
        return cls()

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.factors)

    @property
    def is_hermitian(self) -> bool:
        return self.phase.imag == 0

    def as_dict(self) -> dict[int, str]:
        return dict(self.factors)

    def __mul__(self, other: "PauliString") -> "PauliString":
        if not isinstance(other, PauliString):
            return NotImplemented
        phase = self.phase * other.phase
        out = dict(self.factors)
        for site, b in other.factors:
            a = out.pop(site, None)
            if a is None:
                out[site] = b
            elif a != b:
                p, c = _PRODUCT[(a, b)]
                phase *= p
                out[site] = c
        return PauliString.from_dict(out, _snap_phase(phase))

    def commutes_with(self, other: "PauliString") -> bool:
        theirs = other.as_dict()
        clashes = sum(1 for s, a in self.factors if s in theirs and theirs[s] != a)
        return clashes % 2 == 0

    def masks(self, n_qubits: int) -> tuple[int, int, int]:
        """Bit masks ``(flip, sign, n_y)`` for the action on basis states.

        ``P|b> = phase * i**n_y * (-1)**popcount(b & sign) |b ^ flip>``.
        """
        flip = sign = 0
        n_y = 0
        for site, axis in self.factors:
            if site >= n_qubits:
                raise ValueError(f"site {site} out of range for {n_qubits} qubits")
            bit = 1 << (n_qubits - 1 - site)
            if axis in "XY":
                flip |= bit
            if axis in "YZ":
                sign |= bit
            n_y += axis == "Y"
        return flip, sign, n_y

    def __str__(self) -> str:
        body = " ".join(f"{a}{s}" for s, a in self.factors) or "I"
        sign = {1: "", -1: "-", 1j: "i", -1j: "-i"}[_snap_phase(self.phase)]
        return sign + body


def _snap_phase(z: complex) -> complex:
    for p in _PHASES:
        if abs(z - p) < 1e-9:
            return p
    raise ValueError(f"{z} is not a Pauli phase")


def _basis_index(n_qubits: int) -> np.ndarray:
    return np.arange(1 << n_qubits, dtype=np.int64)


def pauli_diagonal(p: PauliString, n_qubits: int) -> tuple[int, np.ndarray]:
    """Flip mask and per-basis-state coefficient of ``p``.

    ``(p psi)[c] = coef[c] * psi[c ^ flip]``.
    """
    flip, sign, n_y = p.masks(n_qubits)
    idx = _basis_index(n_qubits)
    src = idx ^ flip
    parity = (np.bitwise_count(src & sign) & 1).astype(np.int64)
    coef = (1 - 2 * parity).astype(complex) * (p.phase * 1j**n_y)
    return flip, coef


def apply_pauli(p: PauliString, psi: np.ndarray, n_qubits: int) -> np.ndarray:
    """Return ``p|psi>`` for a state (or batch of states) on ``n_qubits`` spins.

    A cavity register, if present, is left untouched.
    """
    psi = np.asarray(psi)
    dim = 1 << n_qubits
    if psi.shape[0] % dim:
        raise ValueError("state length is not a multiple of 2**n_qubits")
    flip, coef = pauli_diagonal(p, n_qubits)
    view = psi.reshape((dim, -1))
    out = view[_basis_index(n_qubits) ^ flip] * coef[:, None]
    return out.reshape(psi.shape)


def pauli_expectation(p: PauliString, psi: np.ndarray, n_qubits: int) -> float:
    """``Re <psi|p|psi>`` for a single normalized state."""
    psi = np.asarray(psi)
    return float(np.real(np.vdot(psi, apply_pauli(p, psi, n_qubits))))


def pauli_matrix(p: PauliString, n_qubits: int) -> np.ndarray:
    """Dense ``2**n x 2**n`` matrix built by Kronecker products."""
    if n_qubits > MAX_DENSE_QUBITS:
        raise ValueError("too many qubits for a dense matrix")
    ops = p.as_dict()
    out = np.array([[p.phase]], dtype=complex)
    for site in range(n_qubits):
        out = np.kron(out, _SINGLE[ops.get(site, "I")])
    return out


def sample_haar_states(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` Haar-random unit vectors of length ``dim`` as columns."""
    z = rng.standard_normal((dim, count)) + 1j * rng.standard_normal((dim, count))
    return z / np.linalg.norm(z, axis=0)


def sample_haar_state(n_qubits: int, seed: int | np.random.Generator) -> np.ndarray:
    """A single Haar-random state on ``n_qubits`` qubits."""
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed)
    return sample_haar_states(1 << n_qubits, 1, rng)[:, 0]


def sample_haar_unitary(n_qubits: int, seed: int | np.random.Generator) -> np.ndarray:
    """Haar-random unitary on ``n_qubits`` qubits.

    QR of a complex Ginibre matrix, with the columns rephased so that the
    diagonal of ``R`` is positive; without that correction the result is not
    Haar distributed.
    """
    if n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"dense unitaries are limited to {MAX_DENSE_QUBITS} qubits")
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed)
    dim = 1 << n_qubits
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    u = np.asfortranarray(q)
    err = np.abs(u @ u.conj().T - np.eye(dim)).max()
    if err > 1e-10:
        raise ArithmeticError(f"sampled unitary failed the unitarity check ({err:.2e})")
    return u


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out
