"""Local-update sweeps on MPS: the shift-invert step and Rayleigh-quotient warm starts.

The shift-invert step minimises ``D^2 = ||A psi' - B psi||^2`` with
``A = H - delta`` and ``B = A - d_tau``. With ``psi'`` in mixed canonical form
around site ``i`` the cost is quadratic in the centre tensor ``x``::

    D^2 = x^H M x - 2 Re x^H v + c

where ``M`` is the two-layer ``<psi'|A A|psi'>`` environment, ``v`` the
``<psi'|A B|psi>`` environment applied to the old state and
``c = <psi|B B|psi>``. Each site is solved exactly, so a sequential sweep never
increases ``D``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import _contract as C
from .errors import InvalidSpecError, SiteFailure
from .mps import Mpo, Mps, _sandwich, random_mps

DENSE_LIMIT = 4096
STOCHASTIC_CHI = 12
STOCHASTIC_FRACTION = 0.5


class _EnvStack:
    """Left and right environments of ``<bra| w1 w2 |ket>`` for a moving centre."""

    def __init__(self, bra: Mps, ket: Mps, w1: Mpo | None = None, w2: Mpo | None = None):
        self.bra, self.ket = bra, ket
        self.w1 = None if w1 is None else w1.tensors
        self.w2 = None if w2 is None else w2.tensors
        self.layers = (w1 is not None) + (w2 is not None)
        L = bra.length
        self.left = [None] * (L + 1)
        self.right = [None] * (L + 1)
        self.left[0] = C.left_boundary(self.layers)
        self.right[L] = C.right_boundary(self.layers)

    def _ops(self, i):
        return (None if self.w1 is None else self.w1[i], None if self.w2 is None else self.w2[i])

    def build_right(self, stop: int):
        """Fill right environments for sites ``>= stop``."""
        for i in range(self.bra.length - 1, stop - 1, -1):
            self.update_right(i)

    def update_left(self, i):
        self.left[i + 1] = C.extend_left(self.left[i], self.bra.tensors[i], self.ket.tensors[i], *self._ops(i))

    def update_right(self, i):
        self.right[i] = C.extend_right(self.right[i + 1], self.bra.tensors[i], self.ket.tensors[i], *self._ops(i))

    def envs(self, i):
        return self.left[i], self.right[i + 1]


@dataclass
class LocalEnvironment:
    """The quadratic site problem ``D^2(x) = x^H M x - 2 Re x^H v + c`` at one site."""

    site: int
    aa_left: np.ndarray
    aa_right: np.ndarray
    ab_left: np.ndarray
    ab_right: np.ndarray
    a_tensor: np.ndarray
    b_tensor: np.ndarray
    old_tensor: np.ndarray
    bb: float

    @property
    def shape(self):
        return (self.aa_left.shape[0], self.a_tensor.shape[1], self.aa_right.shape[0])

    def matvec(self, x):
        x = x.reshape(self.shape)
        return C.apply_local(self.aa_left, self.aa_right, x, self.a_tensor, self.a_tensor).ravel()

    def matrix(self):
        m = C.local_matrix(self.aa_left, self.aa_right, self.a_tensor, self.a_tensor)
        return 0.5 * (m + m.conj().T)

    def vector(self):
        return C.apply_local(self.ab_left, self.ab_right, self.old_tensor, self.a_tensor, self.b_tensor).ravel()

    def cost(self, x) -> float:
        x = np.ravel(x)
        val = np.vdot(x, self.matvec(x)).real - 2.0 * np.vdot(x, self.vector()).real + self.bb
        return float(val)


def _solve_pd(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    try:
        return sla.cho_solve(sla.cho_factor(m), v)
    except np.linalg.LinAlgError:
        w, u = np.linalg.eigh(m)
        keep = w > 1e-14 * w[-1]
        return u[:, keep] @ ((u[:, keep].conj().T @ v) / w[keep])


def _local_solve(env: LocalEnvironment, x0: np.ndarray, subset=None) -> np.ndarray:
    """Minimise the local quadratic, optionally over a subset of entries only."""
    n = x0.size
    v = env.vector()
    x0 = x0.ravel().astype(np.result_type(x0, v))
    if n <= DENSE_LIMIT:
        m = env.matrix()
        if subset is None:
            x = _solve_pd(m, v)
        else:
            rest = np.setdiff1d(np.arange(n), subset)
            rhs = v[subset] - m[np.ix_(subset, rest)] @ x0[rest]
            x = x0.copy()
            x[subset] = _solve_pd(m[np.ix_(subset, subset)], rhs)
    else:
        mask = np.zeros(n, bool)
        mask[np.arange(n) if subset is None else subset] = True

        def mv(y):
            z = np.zeros(n, dtype=x0.dtype)
            z[mask] = y
            return env.matvec(z)[mask]

        rhs = v[mask] - env.matvec(np.where(mask, 0, x0))[mask]
        op = spla.LinearOperator((mask.sum(), mask.sum()), matvec=mv, dtype=x0.dtype)
        y, info = spla.cg(op, rhs, x0=x0[mask], rtol=1e-12, maxiter=2000)
        if info < 0:
            raise SiteFailure(env.site, "conjugate-gradient breakdown")
        x = x0.copy()
        x[mask] = y
    if not np.all(np.isfinite(x)):
        raise SiteFailure(env.site, "non-finite local solution")
    return x


def _sweep_order(L: int):
    """Right pass over every site, then back to site 0."""
    return list(range(L)) + list(range(L - 2, -1, -1))


def _sequential(psi: Mps, A: Mpo, B: Mpo, bb: float, rng, fraction: float | None,
                check: bool):
    L = psi.length
    new = psi.copy()
    aa = _EnvStack(new, new, A, A)
    ab = _EnvStack(new, psi, A, B)
    aa.build_right(1)
    ab.build_right(1)
    order = _sweep_order(L)
    cost = None
    for step, i in enumerate(order):
        le, re = aa.envs(i)
        lab, rab = ab.envs(i)
        env = LocalEnvironment(i, le, re, lab, rab, A.tensors[i], B.tensors[i], psi.tensors[i], bb)
        x0 = new.tensors[i]
        subset = None
        if fraction is not None:
            k = max(1, int(np.ceil(fraction * x0.size)))
            subset = np.sort(rng.choice(x0.size, size=k, replace=False))
        before = env.cost(x0) if check else None
        x = _local_solve(env, x0, subset)
        cost = env.cost(x)
        if check and cost > before + 1e-10 * max(1.0, abs(before)):
            raise SiteFailure(i, f"local solve raised the cost from {before:.6g} to {cost:.6g}")
        new.tensors[i] = x.reshape(x0.shape)
        if step + 1 == len(order):
            break
        nxt = order[step + 1]
        if nxt > i:
            new._move_right(i)
            aa.update_left(i)
            ab.update_left(i)
        else:
            new._move_left(i)
            aa.update_right(i)
            ab.update_right(i)
        new.ortho_center = nxt
    return new, max(cost, 0.0)


def _schmidt_gauge(psi: Mps):
    """Left-canonical tensors in the Schmidt basis of every bond, plus the Schmidt values."""
    work = psi.copy().canonicalize(0)
    lam = []
    for i in range(work.length - 1):
        t = work.tensors[i]
        l, d, r = t.shape
        u, s, vh = np.linalg.svd(t.reshape(l * d, r), full_matrices=False)
        work.tensors[i] = u.reshape(l, d, -1)
        work.tensors[i + 1] = np.tensordot(s[:, None] * vh, work.tensors[i + 1], ([1], [0]))
        lam.append(s)
    return work.tensors, lam


def _pinv_diag(s, cutoff=1e-12):
    out = np.zeros_like(s)
    keep = s > cutoff * s.max()
    out[keep] = 1.0 / s[keep]
    return out


def _parallel(psi: Mps, A: Mpo, B: Mpo, bb: float):
    """Solve every site against frozen environments of ``psi`` and recombine.

    Sites are treated as independent (which is only approximately true), so the
    result is renormalised and rescaled optimally before reporting ``D``.
    """
    L = psi.length
    lt, lam = _schmidt_gauge(psi)
    inv = [_pinv_diag(s) for s in lam]
    centres = [lt[i] * lam[i][None, None, :] if i < L - 1 else lt[i] for i in range(L)]
    rt = [inv[i - 1][:, None, None] * centres[i] for i in range(1, L)]
    mixed = Mps(lt)
    aa = _EnvStack(mixed, mixed, A, A)
    ab = _EnvStack(mixed, mixed, A, B)
    right = Mps([centres[0]] + rt)
    aa_r = _EnvStack(right, right, A, A)
    ab_r = _EnvStack(right, right, A, B)
    aa_r.build_right(1)
    ab_r.build_right(1)
    for i in range(L - 1):
        aa.update_left(i)
        ab.update_left(i)
    solved = []
    for i in range(L):
        env = LocalEnvironment(i, aa.left[i], aa_r.right[i + 1], ab.left[i], ab_r.right[i + 1],
                               A.tensors[i], B.tensors[i], centres[i], bb)
        solved.append(_local_solve(env, centres[i]).reshape(centres[i].shape))
    tensors = []
    for i, x in enumerate(solved):
        if i < L - 1:
            x = x * inv[i][None, None, :]
        tensors.append(x)
    new = Mps(tensors).canonicalize(0).normalize()
    aa_val = _sandwich(new, new, A, A).real
    ab_val = _sandwich(new, psi, A, B).real
    alpha = ab_val / aa_val
    return new, max(alpha * alpha * aa_val - 2 * alpha * ab_val + bb, 0.0)


def siite_sweep(mps: Mps, H_shift: Mpo, d_tau: float, mode: str = "sequential", *,
                rng=None, fraction: float = STOCHASTIC_FRACTION, check: bool = False):
    """One variational shift-invert step on an MPS at fixed bond dimensions.

    Args:
        mps: current state (normalised internally).
        H_shift: MPO of ``H - delta``.
        d_tau: signed time step, nonzero.
        mode: ``"sequential"``, ``"parallel"``, ``"stochastic"`` or
            ``"stochastic-auto"`` (stochastic once the bond dimension exceeds 12).
        rng: seed or generator for the stochastic element subsets.
        fraction: share of tensor entries updated per site in stochastic mode.
        check: assert that every local update lowers the cost.

    Returns:
        ``(new_state, D)`` with the new state normalised and ``D`` the
        Hilbert-Schmidt distance reached by the unnormalised minimiser.
    """
    if d_tau == 0:
        raise InvalidSpecError("d_tau must be nonzero")
    if mode == "stochastic-auto":
        mode = "stochastic" if mps.chi_max > STOCHASTIC_CHI else "sequential"
    psi = mps.copy().canonicalize(0).normalize()
    B = H_shift.shifted(-d_tau)
    bb = float(_sandwich(psi, psi, B, B).real)
    if mode == "sequential":
        new, d2 = _sequential(psi, H_shift, B, bb, None, None, check)
    elif mode == "stochastic":
        new, d2 = _sequential(psi, H_shift, B, bb, np.random.default_rng(rng), fraction, check)
    elif mode == "parallel":
        new, d2 = _parallel(psi, H_shift, B, bb)
    else:
        raise InvalidSpecError(f"unknown update mode {mode!r}")
    new.normalize()
    return new, float(np.sqrt(d2))


def local_environment(mps_new: Mps, mps_old: Mps, H_shift: Mpo, d_tau: float, site: int) -> LocalEnvironment:
    """Site problem for ``mps_new`` with its centre moved to ``site``."""
    new = mps_new.copy().canonicalize(site)
    old = mps_old.copy()
    B = H_shift.shifted(-d_tau)
    aa = _EnvStack(new, new, H_shift, H_shift)
    ab = _EnvStack(new, old, H_shift, B)
    aa.build_right(site + 1)
    ab.build_right(site + 1)
    for i in range(site):
        aa.update_left(i)
        ab.update_left(i)
    bb = float(_sandwich(old, old, B, B).real)
    return LocalEnvironment(site, aa.left[site], aa.right[site + 1], ab.left[site], ab.right[site + 1],
                            H_shift.tensors[site], B.tensors[site], old.tensors[site], bb)


# -- Rayleigh-quotient sweeps ------------------------------------------------------------


def _lowest_eigvec(m_op, n, x0, dense):
    if dense is not None:
        w, u = sla.eigh(dense, subset_by_index=[0, 0])
        return w[0], u[:, 0]
    try:
        w, u = spla.eigsh(m_op, k=1, which="SA", v0=x0, tol=1e-10, maxiter=max(1000, 10 * n))
        return w[0], u[:, 0]
    except spla.ArpackNoConvergence as exc:
        if len(exc.eigenvalues):
            return exc.eigenvalues[0], exc.eigenvectors[:, 0]
        x = x0 / np.linalg.norm(x0)
        return np.vdot(x, m_op.matvec(x)).real, x


def rayleigh_sweeps(mpo: Mpo, chi: int, layers: int = 1, *, sweeps: int = 50, tol: float = 1e-8,
                    seed=0, initial: Mps | None = None, dense_limit: int | None = None):
    """Single-site sweeps minimising ``<O>`` (``layers=1``) or ``<O O>`` (``layers=2``).

    Bond dimensions stay at those of the starting state, a random MPS with
    bond dimension ``chi`` unless ``initial`` is given.

    Returns:
        ``(state, value, sweeps_done)``.
    """
    if chi < 1:
        raise InvalidSpecError("chi must be >= 1")
    if layers not in (1, 2):
        raise InvalidSpecError("layers must be 1 or 2")
    L = mpo.length
    if dense_limit is None:
        dense_limit = 1024 if layers == 1 else DENSE_LIMIT
    psi = (initial.copy() if initial is not None else random_mps(L, chi, rng=seed, dtype=mpo.dtype))
    psi.canonicalize(0).normalize()
    w2 = mpo if layers == 2 else None
    env = _EnvStack(psi, psi, mpo, w2)
    env.build_right(1)
    order = _sweep_order(L)
    prev = np.inf
    value = np.inf
    done = 0
    for done in range(1, sweeps + 1):
        for step, i in enumerate(order):
            le, re = env.envs(i)
            shape = psi.tensors[i].shape
            n = int(np.prod(shape))
            ops = (mpo.tensors[i], None if w2 is None else w2.tensors[i])

            def mv(y, le=le, re=re, ops=ops, shape=shape):
                return C.apply_local(le, re, y.reshape(shape), *ops).ravel()

            dense = None
            if n <= dense_limit:
                dense = C.local_matrix(le, re, *ops)
                dense = 0.5 * (dense + dense.conj().T)
            op = spla.LinearOperator((n, n), matvec=mv, dtype=np.result_type(psi.tensors[i], mpo.dtype))
            value, x = _lowest_eigvec(op, n, psi.tensors[i].ravel(), dense)
            psi.tensors[i] = x.reshape(shape)
            if step + 1 == len(order):
                break
            nxt = order[step + 1]
            if nxt > i:
                psi._move_right(i)
                env.update_left(i)
            else:
                psi._move_left(i)
                env.update_right(i)
            psi.ortho_center = nxt
        if prev - value < tol * abs(prev) or not np.isfinite(value):
            break
        prev = value
    psi.normalize()
    return psi, float(value), done


def folded_ground_state(H_shift: Mpo, chi0: int = 4, *, sweeps: int = 50, tol: float = 1e-8,
                        seed=0) -> Mps:
    """Low-bond-dimension approximation to the ground state of ``(H - delta)^2``."""
    return rayleigh_sweeps(H_shift, chi0, layers=2, sweeps=sweeps, tol=tol, seed=seed)[0]


def variational_ground_state(H: Mpo, chi: int, *, sweeps: int = 50, tol: float = 1e-10, seed=0):
    """Ground state of ``H`` at fixed bond dimension ``chi``; returns ``(state, energy)``."""
    state, value, _ = rayleigh_sweeps(H, chi, layers=1, sweeps=sweeps, tol=tol, seed=seed)
    return state, value
