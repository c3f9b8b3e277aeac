"""Spin-chain Hamiltonians as weighted Pauli strings.

Operators are kept symbolically as :class:`OperatorTerms` (a list of Pauli
strings plus a multiple of the identity) and lowered on demand to dense or
sparse matrices, or to an MPO.

Basis convention: site 0 is the most significant bit of the basis index and
``|0>`` is spin up, so ``Z|0> = +|0>``.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import InvalidSpecError, ResourceLimitError
from .mps import Mpo

MERGE_THRESHOLD = 1e-14
MAX_DENSE_SITES = 14
MAX_SPARSE_SITES = 22

# Disorder generator pinned for reproducibility; bump the version if it changes.
DISORDER_RNG = "numpy.PCG64/v1"

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1j], [1j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}
# real stand-ins used inside MPO tensors; Y = -i * (iY)
_REAL = {**PAULI, "Y": np.array([[0.0, 1.0], [-1.0, 0.0]])}

# single-site products: a * b = phase * c
_MUL = {}
for _a in "IXYZ":
    _MUL[("I", _a)] = (1, _a)
    _MUL[(_a, "I")] = (1, _a)
    _MUL[(_a, _a)] = (1, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _MUL[(_a, _b)] = (1j, _c)
    _MUL[(_b, _a)] = (-1j, _c)


@dataclass(frozen=True)
class PauliTerm:
    """One weighted Pauli string, e.g. ``PauliTerm(0.25, "XXII")``."""

    coefficient: float
    ops: str

    def __post_init__(self):
        if set(self.ops) - set("IXYZ"):
            raise InvalidSpecError(f"invalid Pauli string {self.ops!r}")
        if not np.isfinite(self.coefficient):
            raise InvalidSpecError("Pauli coefficient must be finite")

    @property
    def support(self) -> list[int]:
        return [i for i, p in enumerate(self.ops) if p != "I"]


def pauli_product(p: str, q: str) -> tuple[complex, str]:
    """Product of two Pauli strings as ``(phase, string)``."""
    phase = 1 + 0j
    out = []
    for a, b in zip(p, q):
        f, c = _MUL[(a, b)]
        phase *= f
        out.append(c)
    return phase, "".join(out)


@dataclass(frozen=True)
class OperatorTerms:
    """A Hermitian operator ``sum_i c_i P_i + constant_shift * I``.

    Identity strings are always folded into ``constant_shift``; no two terms
    share a Pauli string.
    """

    length: int
    terms: tuple[PauliTerm, ...] = ()
    constant_shift: float = 0.0

    def __post_init__(self):
        for t in self.terms:
            if len(t.ops) != self.length:
                raise InvalidSpecError(
                    f"term {t.ops!r} has length {len(t.ops)}, expected {self.length}"
                )

    @classmethod
    def collect(cls, length: int, pairs: Iterable[tuple[str, complex]], constant=0.0,
                threshold: float = MERGE_THRESHOLD, imag_tol: float = 1e-12) -> OperatorTerms:
        """Merge ``(ops, coeff)`` pairs into a canonical operator.

        Coefficients must be real up to ``imag_tol`` after merging.
        """
        acc: dict[str, complex] = defaultdict(complex)
        const = complex(constant)
        identity = "I" * length
        for ops, c in pairs:
            if ops == identity:
                const += c
            else:
                acc[ops] += c
        terms = []
        for ops in sorted(acc):
            c = acc[ops]
            if abs(c.imag) > imag_tol:
                raise InvalidSpecError(f"non-real coefficient {c} on {ops}; operator is not Hermitian")
            if abs(c.real) >= threshold:
                terms.append(PauliTerm(float(c.real), ops))
        if abs(const.imag) > imag_tol:
            raise InvalidSpecError(f"non-real identity coefficient {const}")
        return cls(length, tuple(terms), float(const.real))

    def items(self, include_identity: bool = False):
        """Yield ``(ops, coeff)`` pairs, optionally with the identity string first."""
        if include_identity and self.constant_shift != 0:
            yield "I" * self.length, self.constant_shift
        for t in self.terms:
            yield t.ops, t.coefficient

    def norm_bound(self) -> float:
        """Cheap upper bound on the spectral norm."""
        return abs(self.constant_shift) + sum(abs(t.coefficient) for t in self.terms)

    def to_json(self) -> str:
        doc = {
            "length": self.length,
            "constant_shift": self.constant_shift,
            "terms": [{"coeff": t.coefficient, "ops": t.ops} for t in self.terms],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> OperatorTerms:
        doc = json.loads(text)
        return cls.collect(
            doc["length"],
            ((t["ops"], t["coeff"]) for t in doc["terms"]),
            doc.get("constant_shift", 0.0),
        )


@dataclass(frozen=True)
class HamiltonianSpec:
    """Everything needed to rebuild a model instance bit-for-bit."""

    model: str
    length: int
    J: float = 1.0
    W: float = 0.0
    h: float = 0.0
    h_x: float = 0.0
    seed: int = 0
    fields_h: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.model not in ("heisenberg", "tfim"):
            raise InvalidSpecError(f"unknown model {self.model!r}")
        if not isinstance(self.length, int) or isinstance(self.length, bool) or self.length < 2:
            raise InvalidSpecError("length must be an integer >= 2")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InvalidSpecError("seed must be a non-negative integer")
        for name in ("J", "W", "h", "h_x"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not np.isfinite(value):
                raise InvalidSpecError(f"{name} must be a finite number")
        if self.W < 0:
            raise InvalidSpecError("disorder half-width W must be >= 0")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "length": self.length,
            "J": self.J,
            "W": self.W,
            "h": self.h,
            "h_x": self.h_x,
            "seed": self.seed,
            "rng": DISORDER_RNG,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> HamiltonianSpec:
        rng = doc.get("rng", DISORDER_RNG)
        if rng != DISORDER_RNG:
            raise InvalidSpecError(f"unsupported disorder generator {rng!r}")
        known = {"model", "length", "J", "W", "h", "h_x", "seed"}
        return cls(**{k: v for k, v in doc.items() if k in known})

    def build(self) -> OperatorTerms:
        return build(self)[1]


def disorder_fields(length: int, W: float, seed: int) -> np.ndarray:
    """``h_i = W (2u - 1)`` from consecutive PCG64 uniforms."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return W * (2.0 * rng.random(length) - 1.0)


def _string(length: int, ops: dict[int, str]) -> str:
    return "".join(ops.get(i, "I") for i in range(length))


def build_heisenberg(L: int, J: float = 1.0, W: float = 0.0, seed: int = 0):
    """Disordered Heisenberg chain ``J sum S_i.S_{i+1} + sum h_i S^z_i`` (open ends)."""
    if L < 2:
        raise InvalidSpecError("Heisenberg chain needs L >= 2")
    if W < 0:
        raise InvalidSpecError("disorder half-width W must be >= 0")
    h = disorder_fields(L, W, seed)
    pairs = []
    for i in range(L - 1):
        for p in "XYZ":
            pairs.append((_string(L, {i: p, i + 1: p}), J / 4))
    for i in range(L):
        pairs.append((_string(L, {i: "Z"}), h[i] / 2))
    spec = HamiltonianSpec("heisenberg", L, J=J, W=W, seed=seed, fields_h=tuple(float(x) for x in h))
    return spec, OperatorTerms.collect(L, pairs)


def build_tfim(L: int, J: float = 1.0, h: float = 0.0, h_x: float = 0.0):
    """Tilted transverse-field Ising chain ``-J sum XX - h sum Z + h_x sum X``."""
    if L < 2:
        raise InvalidSpecError("Ising chain needs L >= 2")
    pairs = [(_string(L, {i: "X", i + 1: "X"}), -J) for i in range(L - 1)]
    pairs += [(_string(L, {i: "Z"}), -h) for i in range(L)]
    pairs += [(_string(L, {i: "X"}), h_x) for i in range(L)]
    spec = HamiltonianSpec("tfim", L, J=J, h=h, h_x=h_x)
    return spec, OperatorTerms.collect(L, pairs)


def build(spec: HamiltonianSpec):
    """Rebuild ``(spec_with_fields, operator)`` from a specification."""
    if spec.model == "heisenberg":
        return build_heisenberg(spec.length, spec.J, spec.W, spec.seed)
    if spec.model == "tfim":
        return build_tfim(spec.length, spec.J, spec.h, spec.h_x)
    raise InvalidSpecError(f"unknown model {spec.model!r}")


def shift_operator(H: OperatorTerms, delta: float) -> OperatorTerms:
    """``H - delta``."""
    return replace(H, constant_shift=H.constant_shift - delta)


def product_decomposition(H_shift: OperatorTerms, d_tau: float) -> OperatorTerms:
    """Pauli decomposition of ``H_shift (H_shift - d_tau)``.

    Products of anticommuting strings cancel between the two orderings, so the
    collected coefficients are real.
    """
    L = H_shift.length
    left = list(H_shift.items(include_identity=True))
    right = left + [("I" * L, -d_tau)]
    pairs = []
    for p, a in left:
        for q, b in right:
            phase, s = pauli_product(p, q)
            pairs.append((s, phase * a * b))
    return OperatorTerms.collect(L, pairs)


def _masks(ops: str):
    L = len(ops)
    flip = zy = 0
    ny = 0
    for i, p in enumerate(ops):
        bit = 1 << (L - 1 - i)
        if p in "XY":
            flip |= bit
        if p in "ZY":
            zy |= bit
        ny += p == "Y"
    return flip, zy, (1j) ** ny


def to_sparse(H: OperatorTerms, max_sites: int = MAX_SPARSE_SITES) -> sp.csr_matrix:
    """Sparse CSR matrix of the operator (complex only if a Y-count is odd)."""
    L = H.length
    if L > max_sites:
        raise ResourceLimitError(f"sparse lowering capped at {max_sites} sites")
    dim = 2**L
    idx = np.arange(dim, dtype=np.int64)
    rows, cols, vals = [idx], [idx], [np.full(dim, H.constant_shift, dtype=complex)]
    for ops, c in H.items():
        flip, zy, phase = _masks(ops)
        sign = 1.0 - 2.0 * (np.bitwise_count(idx & zy) & 1)
        rows.append(idx ^ flip)
        cols.append(idx)
        vals.append(c * phase * sign)
    vals = np.concatenate(vals)
    if np.all(np.abs(vals.imag) < 1e-15):
        vals = vals.real
    mat = sp.coo_matrix((vals, (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))
    return mat.tocsr()


def to_dense(H: OperatorTerms, max_sites: int = MAX_DENSE_SITES) -> np.ndarray:
    if H.length > max_sites:
        raise ResourceLimitError(f"dense lowering capped at {max_sites} sites")
    return to_sparse(H).toarray()


def to_mpo(H: OperatorTerms) -> Mpo:
    """Finite-state-machine MPO.

    Nearest-neighbour strings share one channel per left operator, so the
    Heisenberg chain has bond dimension 5 and the tilted Ising chain 3. Longer
    strings get a dedicated channel each. ``Y`` is stored as the real matrix
    ``iY`` with the phase moved into the coefficient, so real Hamiltonians get
    real tensors.
    """
    L = H.length

    def phase(ops):
        return (-1j) ** sum(p == "Y" for p in ops)

    onsite = [np.zeros((2, 2), dtype=complex) for _ in range(L)]
    nn: dict[tuple[int, str], list[tuple[str, complex]]] = defaultdict(list)
    long_terms = []
    for t in H.terms:
        sup = t.support
        if len(sup) == 1:
            onsite[sup[0]] += t.coefficient * PAULI[t.ops[sup[0]]]
        elif len(sup) == 2 and sup[1] == sup[0] + 1:
            i = sup[0]
            pq = t.ops[i : i + 2]
            nn[(i, pq[0])].append((pq[1], t.coefficient * phase(pq)))
        else:
            long_terms.append(t)
    onsite[0] += H.constant_shift * np.eye(2)

    letters = sorted({p for (_, p) in nn})
    chan = {p: 1 + k for k, p in enumerate(letters)}
    w = 2 + len(letters) + len(long_terms)
    last = w - 1
    tensors = []
    for i in range(L):
        t = np.zeros((w, 2, 2, w), dtype=complex)
        t[0, :, :, 0] = np.eye(2)
        t[last, :, :, last] = np.eye(2)
        t[0, :, :, last] = onsite[i]
        for p in letters:
            if (i, p) in nn:
                t[0, :, :, chan[p]] = _REAL[p]
            if i > 0 and (i - 1, p) in nn:
                for q, c in nn[(i - 1, p)]:
                    t[chan[p], :, :, last] += c * _REAL[q]
        for k, term in enumerate(long_terms):
            ch = 1 + len(letters) + k
            sup = term.support
            op = _REAL[term.ops[i]]
            if i == sup[0]:
                t[0, :, :, ch] = op
            elif sup[0] < i < sup[-1]:
                t[ch, :, :, ch] = op
            elif i == sup[-1]:
                t[ch, :, :, last] = term.coefficient * phase(term.ops) * op
        tensors.append(t)
    tensors[0] = tensors[0][:1]
    tensors[-1] = tensors[-1][:, :, :, last:]
    slot = (0, 0, 0) if L == 1 else (0, 0, last)
    if all(np.abs(t.imag).max() == 0 for t in tensors):
        tensors = [t.real.copy() for t in tensors]
    return Mpo(tensors, constant_slot=slot)
