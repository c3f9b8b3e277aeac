"""Shot-noise model of overlap estimation with a one-ancilla Hadamard test.

The test prepares ``(|0>V1|0..0> + |1>V2|0..0>)/sqrt(2)``, applies a Hadamard
to the ancilla and measures it; ``p(0) = (1 + Re<psi1|psi2>)/2``. States enter
as statevectors, so ``V1`` and ``V2`` are built as Householder reflections
that prepare them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError
from .exact import apply_operator
from .models import OperatorTerms, _masks, product_decomposition

SHOT_BOUND = "hoeffding: N = ceil(ln(2/p) / (2 eps^2))"


@dataclass(frozen=True)
class OverlapTask:
    psi1: np.ndarray
    psi2: np.ndarray

    @property
    def exact_overlap_real(self) -> float:
        return float(np.vdot(self.psi1, self.psi2).real)


@dataclass(frozen=True)
class ShotEstimate:
    mean: float
    stderr: float
    shots: int


@dataclass(frozen=True)
class CrossTermEstimate:
    mean: float
    stderr: float
    term_count: int
    shots_per_string: int | None
    exact: float | None = None

    def to_json(self) -> str:
        return json.dumps({
            "term_count": self.term_count,
            "shots_per_string": self.shots_per_string,
            "mean": self.mean,
            "stderr": self.stderr,
            "exact": self.exact,
            "shot_bound": SHOT_BOUND,
        }, indent=2)


def hadamard_probability(psi1, psi2) -> float:
    """Infinite-shot probability of reading 0 on the ancilla."""
    p = 0.5 * (1.0 + np.vdot(psi1, psi2).real)
    return float(min(max(p, 0.0), 1.0))


def preparation_unitary(psi) -> np.ndarray:
    """Unitary ``V`` with ``V|0..0> = psi`` (Householder reflection times a phase)."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    phase = np.exp(1j * np.angle(psi[0])) if abs(psi[0]) > 0 else 1.0
    target = psi / phase
    u = -target.copy()
    u[0] += 1.0
    norm = np.vdot(u, u).real
    V = np.eye(psi.size, dtype=complex)
    if norm > 1e-30:
        V -= 2.0 * np.outer(u, u.conj()) / norm
    return phase * V


def simulate_hadamard_circuit(psi1, psi2) -> float:
    """Gate-by-gate simulation of the modified Hadamard test; returns ``p(0)``."""
    dim = np.asarray(psi1).size
    V1 = preparation_unitary(psi1)
    V2 = preparation_unitary(psi2)
    hadamard = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    state = np.zeros((2, dim), dtype=complex)  # ancilla is the leading index
    state[0, 0] = 1.0
    state = hadamard @ state
    state[0] = V1 @ state[0]  # anti-controlled V1
    state[1] = V2 @ state[1]  # controlled V2
    state = hadamard @ state
    return float(np.vdot(state[0], state[0]).real)


def sample_overlap(task: OverlapTask, shots: int, seed=None) -> ShotEstimate:
    """Estimate ``Re<psi1|psi2>`` from ``shots`` Bernoulli ancilla readouts."""
    if shots < 1:
        raise InvalidSpecError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    p = hadamard_probability(task.psi1, task.psi2)
    p_hat = rng.binomial(shots, p) / shots
    return ShotEstimate(2.0 * p_hat - 1.0, 2.0 * math.sqrt(p_hat * (1.0 - p_hat) / shots), shots)


def apply_pauli(ops: str, psi: np.ndarray) -> np.ndarray:
    """Action of a bare Pauli string (unit coefficient)."""
    idx = np.arange(psi.size)
    flip, zy, phase = _masks(ops)
    signed = psi * (1.0 - 2.0 * (np.bitwise_count(idx & zy) & 1))
    return phase * signed[idx ^ flip]


def qubitwise_commute(p: str, q: str) -> bool:
    return all(a == "I" or b == "I" or a == b for a, b in zip(p, q))


def group_qubitwise(strings) -> list[list[int]]:
    """Greedy partition of strings into qubit-wise commuting groups (indices)."""
    groups: list[list[int]] = []
    reps: list[list[str]] = []
    for i, s in enumerate(strings):
        for g, members in zip(groups, reps):
            if all(qubitwise_commute(s, m) for m in members):
                g.append(i)
                members.append(s)
                break
        else:
            groups.append([i])
            reps.append([s])
    return groups


def _allocate(weights: np.ndarray, shots_per_string: int, mode: str) -> np.ndarray:
    k = len(weights)
    if mode == "uniform":
        return np.full(k, shots_per_string, dtype=np.int64)
    if mode == "proportional":
        total = shots_per_string * k
        w = np.abs(weights) / np.sum(np.abs(weights))
        return np.maximum(1, np.round(w * total)).astype(np.int64)
    raise InvalidSpecError(f"unknown shot allocation {mode!r}")


def estimate_cross_term(psi_new, psi_old, H_shift: OperatorTerms, d_tau: float,
                        shots_per_string: int | None = None, seed=None, *,
                        allocation: str = "uniform", grouping: bool = False) -> CrossTermEstimate:
    """``Re <psi_new| H_shift (H_shift - d_tau) |psi_old>`` from per-string overlap tests.

    Args:
        psi_new, psi_old: normalised statevectors.
        H_shift: shifted operator whose product decomposition is measured.
        d_tau: time step entering the product.
        shots_per_string: shots per Pauli string (``None`` gives the
            infinite-shot value).
        seed: base seed; string ``i`` draws from its own sub-generator.
        allocation: ``"uniform"`` or ``"proportional"`` to ``|alpha_i|``.
        grouping: merge qubit-wise commuting strings into one measured
            operator per group. The infinite-shot value is unchanged.
    """
    decomp = product_decomposition(H_shift, d_tau)
    items = list(decomp.items(include_identity=True))
    strings = [s for s, _ in items]
    alphas = np.array([a for _, a in items])
    exact = float(np.vdot(psi_new, apply_operator(decomp, psi_old)).real)

    # each measured unit: (weight, normalised psi2)
    units = []
    if grouping:
        for g in group_qubitwise(strings):
            phi = sum(alphas[i] * apply_pauli(strings[i], psi_old) for i in g)
            norm = float(np.linalg.norm(phi))
            if norm > 0:
                units.append((norm, phi / norm))
    else:
        for s, a in zip(strings, alphas):
            units.append((a, apply_pauli(s, psi_old)))

    if shots_per_string is None:
        mean = sum(w * np.vdot(psi_new, phi).real for w, phi in units)
        return CrossTermEstimate(float(mean), 0.0, len(units), None, exact)

    shots = _allocate(np.array([w for w, _ in units]), shots_per_string, allocation)
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(units))
    mean = var = 0.0
    for (w, phi), n, child in zip(units, shots, children):
        est = sample_overlap(OverlapTask(psi_new, phi), int(n), np.random.default_rng(child))
        mean += w * est.mean
        var += (w * est.stderr) ** 2
    return CrossTermEstimate(float(mean), float(np.sqrt(var)), len(units), shots_per_string, exact)


def reassembled_distance(psi_new, psi_old, H_shift: OperatorTerms, d_tau: float,
                         shots_per_string: int | None = None, seed=None, **kwargs) -> float:
    """``D`` from exact ``<a|a>``, ``<b|b>`` and a sampled cross term."""
    a = apply_operator(H_shift, psi_new)
    b = apply_operator(H_shift, psi_old) - d_tau * psi_old
    cross = estimate_cross_term(psi_new, psi_old, H_shift, d_tau, shots_per_string, seed, **kwargs)
    d2 = np.vdot(a, a).real + np.vdot(b, b).real - 2.0 * cross.mean
    return float(np.sqrt(max(d2, 0.0)))


def shots_required(epsilon: float, failure_prob: float) -> int:
    """Shots for additive precision ``epsilon`` with probability ``1 - failure_prob``."""
    if not epsilon > 0:
        raise InvalidSpecError("epsilon must be > 0")
    if not 0 < failure_prob < 1:
        raise InvalidSpecError("failure_prob must lie in (0, 1)")
    return math.ceil(math.log(2.0 / failure_prob) / (2.0 * epsilon**2))
