"""Matrix product states and operators.

Site 0 is the leftmost tensor and the most significant bit of the dense basis
index; local state ``0`` is spin up. Tensors are stored as ``(left, phys,
right)`` for states and ``(left, out, in, right)`` for operators.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import _contract as C
from .errors import InvalidSpecError, ResourceLimitError

TRUNCATION_CUTOFF = 1e-12
MAX_STATEVECTOR_SITES = 14


def max_bond_dims(length: int, d: int = 2) -> list[int]:
    """Largest useful bond dimension at every bond of an open chain."""
    return [min(d ** (b + 1), d ** (length - b - 1)) for b in range(length - 1)]


class Mpo:
    """Matrix product operator.

    ``constant_slot`` optionally records a ``(site, row, col)`` position whose
    block multiplies the identity on the whole chain, which lets
    :meth:`shifted` add a multiple of the identity without growing the bond.
    """

    def __init__(self, tensors, constant_slot=None):
        self.tensors = [np.asarray(t) for t in tensors]
        self.constant_slot = constant_slot
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[3] != 1:
            raise InvalidSpecError("MPO boundary bonds must have dimension 1")

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[3] for t in self.tensors[:-1]]

    @property
    def dtype(self):
        return np.result_type(*self.tensors)

    def copy(self) -> Mpo:
        return Mpo([t.copy() for t in self.tensors], self.constant_slot)

    def scaled(self, factor) -> Mpo:
        out = self.copy()
        out.tensors[0] = out.tensors[0] * factor
        return out

    def shifted(self, shift) -> Mpo:
        """Return the MPO of ``O + shift * I``."""
        if shift == 0:
            return self.copy()
        if self.constant_slot is not None:
            out = self.copy()
            site, row, col = self.constant_slot
            t = out.tensors[site].astype(np.result_type(out.tensors[site], shift))
            d = t.shape[1]
            t[row, :, :, col] += shift * np.eye(d)
            out.tensors[site] = t
            return out
        return mpo_sum(self, identity_mpo(self.length, self.tensors[0].shape[1]).scaled(shift))

    def to_dense(self, max_sites: int = MAX_STATEVECTOR_SITES) -> np.ndarray:
        if self.length > max_sites:
            raise ResourceLimitError(f"dense MPO contraction capped at {max_sites} sites")
        out = self.tensors[0][0]  # (s, t, w)
        for w in self.tensors[1:]:
            # out: (S, T, w); w: (w, s, t, w')
            out = np.tensordot(out, w, ([2], [0]))  # (S, T, s, t, w')
            S, T, s, t, r = out.shape
            out = out.transpose(0, 2, 1, 3, 4).reshape(S * s, T * t, r)
        return out[:, :, 0]


def identity_mpo(length: int, d: int = 2) -> Mpo:
    t = np.eye(d).reshape(1, d, d, 1)
    return Mpo([t.copy() for _ in range(length)], constant_slot=None)


def mpo_sum(a: Mpo, b: Mpo) -> Mpo:
    """Direct-sum MPO representing ``a + b``."""
    L = a.length
    out = []
    for i, (x, y) in enumerate(zip(a.tensors, b.tensors)):
        dt = np.result_type(x, y)
        d = x.shape[1]
        if L == 1:
            out.append((x + y).astype(dt))
            continue
        if i == 0:
            t = np.concatenate([x, y], axis=3).astype(dt)
        elif i == L - 1:
            t = np.concatenate([x, y], axis=0).astype(dt)
        else:
            t = np.zeros((x.shape[0] + y.shape[0], d, d, x.shape[3] + y.shape[3]), dtype=dt)
            t[: x.shape[0], :, :, : x.shape[3]] = x
            t[x.shape[0] :, :, :, x.shape[3] :] = y
        out.append(t)
    return Mpo(out)


class Mps:
    """Matrix product state on an open chain."""

    def __init__(self, tensors, ortho_center=None):
        self.tensors = [np.asarray(t) for t in tensors]
        self.ortho_center = ortho_center
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise InvalidSpecError("MPS boundary bonds must have dimension 1")

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def chi_max(self) -> int:
        return max(self.bond_dims, default=1)

    @property
    def dtype(self):
        return np.result_type(*self.tensors)

    def copy(self) -> Mps:
        return Mps([t.copy() for t in self.tensors], self.ortho_center)

    # -- gauge ---------------------------------------------------------------

    def _move_right(self, i):
        t = self.tensors[i]
        l, d, r = t.shape
        q, rr = np.linalg.qr(t.reshape(l * d, r))
        self.tensors[i] = q.reshape(l, d, q.shape[1])
        self.tensors[i + 1] = np.tensordot(rr, self.tensors[i + 1], ([1], [0]))

    def _move_left(self, i):
        t = self.tensors[i]
        l, d, r = t.shape
        q, rr = np.linalg.qr(t.reshape(l, d * r).T)
        self.tensors[i] = q.T.reshape(q.shape[1], d, r)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], rr.T, ([2], [0]))

    def canonicalize(self, center: int = 0) -> Mps:
        """Bring the state into mixed canonical form around ``center`` (in place)."""
        L = self.length
        if not 0 <= center < L:
            raise IndexError(center)
        for i in range(center):
            self._move_right(i)
        for i in range(L - 1, center, -1):
            self._move_left(i)
        self.ortho_center = center
        return self

    def move_center(self, target: int) -> Mps:
        if self.ortho_center is None:
            return self.canonicalize(target)
        while self.ortho_center < target:
            self._move_right(self.ortho_center)
            self.ortho_center += 1
        while self.ortho_center > target:
            self._move_left(self.ortho_center)
            self.ortho_center -= 1
        return self

    def norm(self) -> float:
        if self.ortho_center is not None:
            return float(np.linalg.norm(self.tensors[self.ortho_center]))
        return float(np.sqrt(abs(overlap(self, self))))

    def normalize(self) -> Mps:
        if self.ortho_center is None:
            self.canonicalize(0)
        c = self.ortho_center
        self.tensors[c] = self.tensors[c] / np.linalg.norm(self.tensors[c])
        return self

    # -- conversions -----------------------------------------------------------

    def to_statevector(self, max_sites: int = MAX_STATEVECTOR_SITES) -> np.ndarray:
        if self.length > max_sites:
            raise ResourceLimitError(f"statevector contraction capped at {max_sites} sites")
        v = self.tensors[0].reshape(-1, self.tensors[0].shape[2])
        for t in self.tensors[1:]:
            l, d, r = t.shape
            v = (v @ t.reshape(l, d * r)).reshape(-1, r)
        return v[:, 0]

    @classmethod
    def from_statevector(cls, psi, chi_max=None, cutoff=TRUNCATION_CUTOFF, d: int = 2) -> Mps:
        """Successive-SVD decomposition of a dense state.

        With ``cutoff=0`` and no ``chi_max`` every bond keeps its maximal
        dimension, padding with orthonormal completions where the state has
        lower Schmidt rank.
        """
        psi = np.asarray(psi)
        L = int(round(np.log(psi.size) / np.log(d)))
        if d**L != psi.size:
            raise InvalidSpecError("statevector size is not a power of the local dimension")
        tensors = []
        rest = psi.reshape(1, -1)
        left = 1
        for _ in range(L - 1):
            mat = rest.reshape(left * d, -1)
            u, s, vh = np.linalg.svd(mat, full_matrices=False)
            keep = len(s)
            if cutoff > 0:
                keep = max(1, int(np.sum(s > cutoff * max(s[0], 1e-300))))
            if chi_max is not None:
                keep = min(keep, chi_max)
            tensors.append(u[:, :keep].reshape(left, d, keep))
            rest = s[:keep, None] * vh[:keep]
            left = keep
        tensors.append(rest.reshape(left, d, 1))
        return cls(tensors, ortho_center=L - 1)

    # -- persistence -------------------------------------------------------------

    def save(self, directory, tau: float | None = None) -> Path:
        """Write per-site ``.npy`` dumps plus a ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(self.tensors):
            np.save(directory / f"site_{i:04d}.npy", t)
        manifest = {
            "L": self.length,
            "bond_dims": self.bond_dims,
            "ortho_center": self.ortho_center,
            "norm": self.norm(),
            "tau": tau,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
        return directory

    @classmethod
    def load(cls, directory) -> Mps:
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        tensors = [np.load(directory / f"site_{i:04d}.npy") for i in range(manifest["L"])]
        mps = cls(tensors, manifest["ortho_center"])
        if mps.bond_dims != manifest["bond_dims"]:
            raise InvalidSpecError("checkpoint tensors disagree with manifest bond_dims")
        return mps


# -- constructors ----------------------------------------------------------------


def product_mps(pattern: str, length: int | None = None) -> Mps:
    """Bond-dimension-1 MPS for ``"neel"``, ``"up"`` or an explicit bitstring."""
    if pattern == "neel":
        bits = "".join("01"[i % 2] for i in range(length))
    elif pattern == "up":
        bits = "0" * length
    else:
        bits = pattern
        if length is not None and len(bits) != length:
            raise InvalidSpecError(f"bitstring {bits!r} does not have length {length}")
        if set(bits) - {"0", "1"}:
            raise InvalidSpecError(f"not a bitstring: {bits!r}")
    tensors = []
    for b in bits:
        t = np.zeros((1, 2, 1))
        t[0, int(b), 0] = 1.0
        tensors.append(t)
    return Mps(tensors, ortho_center=0)


def random_mps(length: int, chi: int, rng=None, dtype=float) -> Mps:
    """Random normalised MPS with every bond at ``min(chi, max_bond)``."""
    rng = np.random.default_rng(rng)
    dims = [1] + [min(chi, m) for m in max_bond_dims(length)] + [1]
    tensors = []
    for i in range(length):
        shape = (dims[i], 2, dims[i + 1])
        t = rng.standard_normal(shape)
        if np.issubdtype(dtype, np.complexfloating):
            t = t + 1j * rng.standard_normal(shape)
        tensors.append(t.astype(dtype))
    return Mps(tensors).canonicalize(0).normalize()


def mps_sum(a: Mps, b: Mps) -> Mps:
    """Direct sum of tensors; represents ``a + b`` with bond dims added."""
    L = a.length
    out = []
    for i, (x, y) in enumerate(zip(a.tensors, b.tensors)):
        dt = np.result_type(x, y)
        if L == 1:
            out.append((x + y).astype(dt))
        elif i == 0:
            out.append(np.concatenate([x, y], axis=2).astype(dt))
        elif i == L - 1:
            out.append(np.concatenate([x, y], axis=0).astype(dt))
        else:
            t = np.zeros((x.shape[0] + y.shape[0], x.shape[1], x.shape[2] + y.shape[2]), dtype=dt)
            t[: x.shape[0], :, : x.shape[2]] = x
            t[x.shape[0] :, :, x.shape[2] :] = y
            out.append(t)
    return Mps(out)


def apply_mpo(mpo: Mpo, mps: Mps) -> Mps:
    """Exact MPO-MPS product; bond dimensions multiply."""
    out = []
    for w, a in zip(mpo.tensors, mps.tensors):
        wl, s, _, wr = w.shape
        l, _, r = a.shape
        t = np.tensordot(w, a, ([2], [1]))  # (wl, s, wr, l, r)
        out.append(t.transpose(3, 0, 1, 4, 2).reshape(l * wl, s, r * wr))
    return Mps(out)


def compress(mps: Mps, target_dims, cutoff=TRUNCATION_CUTOFF) -> Mps:
    """SVD truncation to at most ``target_dims[b]`` on each bond.

    Singular values below ``cutoff`` (relative to the norm) are always dropped.
    The result is right-canonical with the centre on site 0 and keeps the
    original norm.
    """
    out = mps.copy().canonicalize(mps.length - 1)
    norm = np.linalg.norm(out.tensors[-1])
    for i in range(out.length - 1, 0, -1):
        t = out.tensors[i]
        l, d, r = t.shape
        u, s, vh = np.linalg.svd(t.reshape(l, d * r), full_matrices=False)
        keep = max(1, int(np.sum(s > cutoff * max(norm, 1e-300))))
        keep = min(keep, target_dims[i - 1])
        out.tensors[i] = vh[:keep].reshape(keep, d, r)
        out.tensors[i - 1] = np.tensordot(out.tensors[i - 1], u[:, :keep] * s[:keep], ([2], [0]))
    out.ortho_center = 0
    return out


# -- measurements -------------------------------------------------------------------


def overlap(bra: Mps, ket: Mps) -> complex:
    env = C.left_boundary(0)
    for a, b in zip(bra.tensors, ket.tensors):
        env = C.extend_left(env, a, b)
    return env[0, 0]


def _sandwich(bra: Mps, ket: Mps, w1: Mpo | None = None, w2: Mpo | None = None):
    layers = (w1 is not None) + (w2 is not None)
    env = C.left_boundary(layers)
    for i in range(bra.length):
        env = C.extend_left(
            env,
            bra.tensors[i],
            ket.tensors[i],
            None if w1 is None else w1.tensors[i],
            None if w2 is None else w2.tensors[i],
        )
    return env.reshape(-1)[0]


def _check_lengths(mps: Mps, mpo: Mpo):
    if mps.length != mpo.length:
        raise InvalidSpecError(f"MPS has {mps.length} sites but MPO has {mpo.length}")


def expectation(mps: Mps, mpo: Mpo) -> float:
    """``<psi|O|psi> / <psi|psi>`` (real part)."""
    _check_lengths(mps, mpo)
    num = _sandwich(mps, mps, mpo)
    den = overlap(mps, mps)
    return float(np.real(num / den))


def second_moment(mps: Mps, mpo: Mpo) -> float:
    """``<psi|O O|psi> / <psi|psi>`` with ``O`` applied once from each side."""
    _check_lengths(mps, mpo)
    num = _sandwich(mps, mps, mpo, mpo)
    return float(np.real(num / overlap(mps, mps)))


def variance_mps(mps: Mps, H: Mpo, E: float | None = None) -> float:
    """``||(H - E)|psi>||^2`` for a normalised state, clamped at zero."""
    if E is None:
        E = expectation(mps, H)
    return max(second_moment(mps, H) - E * E, 0.0)


def _entropy(s: np.ndarray) -> float:
    s = s[s > 1e-12]
    p = s**2
    p = p / p.sum()
    return float(-np.sum(p * np.log(p)))


def schmidt_values(mps: Mps) -> list[np.ndarray]:
    """Singular values on every bond (cut after site ``b`` for entry ``b``)."""
    work = mps.copy().canonicalize(0)
    work.normalize()
    out = []
    for i in range(work.length - 1):
        t = work.tensors[i]
        l, d, r = t.shape
        u, s, vh = np.linalg.svd(t.reshape(l * d, r), full_matrices=False)
        out.append(s)
        work.tensors[i] = u.reshape(l, d, -1)
        work.tensors[i + 1] = np.tensordot(s[:, None] * vh, work.tensors[i + 1], ([1], [0]))
    return out


def entropy_profile(mps: Mps):
    """Per-bond von Neumann entropies, their mean, and the central-bond value.

    ``per_bond[b]`` is the entropy for the cut with ``b + 1`` sites on the left;
    the central value is the cut with ``L // 2`` sites on the left.
    """
    per_bond = np.array([_entropy(s) for s in schmidt_values(mps)])
    if per_bond.size == 0:
        return per_bond, 0.0, 0.0
    return per_bond, float(per_bond.mean()), float(per_bond[mps.length // 2 - 1])


# -- bond growth -------------------------------------------------------------------------


def grow_bond_random(mps: Mps, seed=None, eps: float = 1e-6) -> Mps:
    """Add ``eps`` times a random product state via a direct sum, then normalise.

    Every bond that is below its maximal useful dimension grows by one.
    """
    rng = np.random.default_rng(seed)
    base = mps.copy().normalize()
    vecs = []
    for _ in range(mps.length):
        v = rng.standard_normal(2)
        vecs.append((v / np.linalg.norm(v)).reshape(1, 2, 1))
    vecs[0] = vecs[0] * eps
    grown = mps_sum(base, Mps(vecs))
    caps = max_bond_dims(mps.length)
    dims = [min(b + 1, c) for b, c in zip(base.bond_dims, caps)]
    if any(g > c for g, c in zip(grown.bond_dims, caps)):
        grown = compress(grown, dims, cutoff=0.0)
    return grown.canonicalize(0).normalize()


def grow_bond_subspace(mps: Mps, H_shift: Mpo, a: float = 1e-3, increment: int = 2,
                       chi_max: int | None = None, cutoff=TRUNCATION_CUTOFF) -> Mps:
    """Subspace expansion ``(1 + a H_shift)|psi>`` truncated to ``chi + increment``."""
    base = mps.copy().normalize()
    kicked = apply_mpo(H_shift.scaled(a), base)
    total = mps_sum(base, kicked)
    caps = max_bond_dims(mps.length)
    dims = []
    for b, cap in zip(base.bond_dims, caps):
        target = min(b + increment, cap)
        if chi_max is not None:
            target = min(target, max(chi_max, b))
        dims.append(target)
    return compress(total, dims, cutoff=cutoff).normalize()
