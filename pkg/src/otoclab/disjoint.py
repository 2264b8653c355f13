"""The disjoint-unitary problem.

An unknown ``n``-qubit unitary ``V`` is either a single Haar-random unitary
(``Joint``) or a product ``U1 (x) U2`` of two independent Haar-random
``n/2``-qubit unitaries (``Disjoint``).  The observable

    OTOC(V) = tr[(1 (x) |0><0|^{n/2}) V^dag X_1 V |0..0><0..0| V^dag X_1 V]

is the probability that, after preparing ``|0..0>``, applying ``V``, a Pauli
X on qubit 1 (the first qubit of the first block) and ``V^dag``, the second
block is found in ``|0..0>``.  It equals one exactly in the disjoint case,
because ``X_1`` never reaches the second block, and concentrates near zero
in the joint case.  One query to ``V`` and one to ``V^dag`` therefore
distinguish the cases.

:func:`time_ordered_baseline` is an illustrative forward-only strategy, not
a lower-bound argument; the rigorous statement that every time-ordered
strategy needs exponentially many queries is proved separately in the
literature and is not reproduced here.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .operators import MAX_DENSE_QUBITS, rng_stream, sample_haar_unitary

__all__ = [
    "CASES",
    "OracleInstance",
    "sample_oracle",
    "evaluate_otoc_observable",
    "distinguish",
    "time_ordered_baseline",
    "collision_statistic",
    "run_trials",
]

CASES = ("Joint", "Disjoint")


@dataclass(frozen=True)
class OracleInstance:
    """One oracle: a single ``n``-qubit unitary or two ``n/2``-qubit blocks."""

    case: str
    unitaries: tuple[np.ndarray, ...]
    n: int

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}")
        if self.n < 2 or self.n % 2:
            raise ValueError("n must be even and at least 2")
        want = (1 << self.n,) if self.case == "Joint" else (1 << (self.n // 2),) * 2
        if tuple(u.shape[0] for u in self.unitaries) != want:
            raise ValueError(f"{self.case} oracle needs blocks of dimension {want}")

    def matrix(self) -> np.ndarray:
        """Full ``2^n x 2^n`` unitary (first block on the high bits)."""
        if self.case == "Joint":
            return self.unitaries[0]
        return np.kron(self.unitaries[0], self.unitaries[1])


def sample_oracle(n: int, case: str, seed=0) -> OracleInstance:
    """Draw an oracle of the given case from the Haar measure."""
    if n % 2 or n < 2:
        raise ValueError("n must be even and at least 2")
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"n must not exceed {MAX_DENSE_QUBITS}")
    keys = (seed,) if isinstance(seed, (int, np.integer)) else tuple(seed)
    rng = rng_stream(*keys)
    if case == "Joint":
        blocks = (sample_haar_unitary(n, rng),)
    elif case == "Disjoint":
        blocks = (sample_haar_unitary(n // 2, rng), sample_haar_unitary(n // 2, rng))
    else:
        raise ValueError(f"case must be one of {CASES}")
    return OracleInstance(case, blocks, n)


def _apply_x1(psi: np.ndarray, n: int) -> np.ndarray:
    # X on qubit 1 (most significant bit) swaps the two halves of the vector
    half = 1 << (n - 1)
    return np.concatenate([psi[half:], psi[:half]])


def evaluate_otoc_observable(inst: OracleInstance) -> float:
    """``OTOC(V)`` by state-vector algebra; lies in ``[0, 1]``."""
    n = inst.n
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"n must not exceed {MAX_DENSE_QUBITS}")
    v = inst.matrix()
    psi = v[:, 0]  # V |0...0>
    psi = v.conj().T @ _apply_x1(psi, n)
    block = 1 << (n // 2)
    # second block in |0...0>: column 0 of the (first, second) reshaping
    amp = psi.reshape(block, block)[:, 0]
    return float(np.vdot(amp, amp).real)


def distinguish(inst: OracleInstance, threshold: float = 0.5) -> str:
    """``Disjoint`` iff the OTOC exceeds ``threshold``."""
    return "Disjoint" if evaluate_otoc_observable(inst) > threshold else "Joint"


def collision_statistic(outcomes) -> float:
    """Fraction of query pairs whose second-block outcomes coincide (NaN for < 2 queries)."""
    outcomes = list(outcomes)
    pairs = list(combinations(outcomes, 2))
    if not pairs:
        return float("nan")
    return sum(a == b for a, b in pairs) / len(pairs)


def time_ordered_baseline(inst: OracleInstance, n_queries: int, seed=0) -> str:
    """Guess the case from ``n_queries`` forward-only queries.

    Each query prepares ``|a, 0..0>`` with a uniformly random first-block
    string ``a``, applies ``V`` and measures every qubit in the
    computational basis; only the second-block outcome is used.  In the
    disjoint case those outcomes are i.i.d. from one distribution whatever
    ``a`` is, so repeated outcomes are more likely (for Porter-Thomas
    weights on ``D = 2^{n/2}`` outcomes the pair collision probability is
    about ``2 / (D + 1)``, against about ``1 / D`` when the distribution
    changes with ``a``).  The guess is ``Disjoint`` iff the fraction of
    colliding pairs (:func:`collision_statistic`) exceeds the midpoint
    ``1.5 / (D + 0.5)``.  This is a plug-in estimate of the total-variation
    gap between the two hypotheses' outcome statistics.  With fewer than two
    queries there is no evidence and the answer is always ``Joint``, so
    balanced trials score exactly one half.
    """
    if n_queries < 0:
        raise ValueError("n_queries must be nonnegative")
    if n_queries < 2:
        return "Joint"
    keys = (seed,) if isinstance(seed, (int, np.integer)) else tuple(seed)
    rng = rng_stream(*keys)
    block = 1 << (inst.n // 2)
    v = inst.matrix()
    outcomes = []
    for _ in range(n_queries):
        a = int(rng.integers(block))
        column = v[:, a * block]  # input |a, 0..0>
        probs = (np.abs(column) ** 2).reshape(block, block).sum(axis=0)
        outcomes.append(int(rng.choice(block, p=probs / probs.sum())))
    threshold = 1.5 / (block + 0.5)
    return "Disjoint" if collision_statistic(outcomes) > threshold else "Joint"


def run_trials(n: int, n_trials: int, seed=0, threshold: float = 0.5,
               n_queries: int | None = None) -> list[dict]:
    """Balanced trials: ``n_trials`` oracles per case.

    Returns records ``{n, case, trial, otoc, label, correct}``; with
    ``n_queries`` the time-ordered baseline's guess is added as
    ``baseline_label`` and ``baseline_correct``.
    """
    keys = (seed,) if isinstance(seed, (int, np.integer)) else tuple(seed)
    records = []
    for c, case in enumerate(CASES):
        for trial in range(n_trials):
            inst = sample_oracle(n, case, keys + (c, trial))
            value = evaluate_otoc_observable(inst)
            label = "Disjoint" if value > threshold else "Joint"
            rec = {"n": n, "case": case, "trial": trial, "otoc": value, "label": label,
                   "correct": label == case}
            if n_queries is not None:
                guess = time_ordered_baseline(inst, n_queries, keys + (c, trial, 1))
                rec["baseline_label"] = guess
                rec["baseline_correct"] = guess == case
            records.append(rec)
    return records
