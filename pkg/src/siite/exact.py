"""Dense statevector backend.

States are plain 1-D numpy arrays of length ``2**L`` in the basis documented in
:mod:`siite.models`. Everything here is an oracle for the MPS backend, so the
emphasis is on accuracy rather than speed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.optimize as so
import scipy.sparse.linalg as spla

from .errors import InvalidSpecError, NearDegeneracyError, ResourceLimitError
from .models import MAX_DENSE_SITES, OperatorTerms, _masks, to_dense, to_sparse

CONDITION_LIMIT = 1e12
SOLVE_TOL = 1e-10


@dataclass(frozen=True)
class EigenSystem:
    """Full spectrum with eigenvectors as columns of ``states``."""

    energies: np.ndarray
    states: np.ndarray

    @property
    def e_min(self) -> float:
        return float(self.energies[0])

    @property
    def e_max(self) -> float:
        return float(self.energies[-1])

    def __len__(self) -> int:
        return len(self.energies)

    def shifted(self, delta: float) -> EigenSystem:
        """Eigensystem of ``H - delta``."""
        return EigenSystem(self.energies - delta, self.states)


def _check(H: OperatorTerms, psi: np.ndarray):
    if psi.ndim != 1 or psi.size != 2**H.length:
        raise InvalidSpecError(f"state of size {psi.size} does not match an L={H.length} operator")


def normalize(psi: np.ndarray) -> np.ndarray:
    return psi / np.linalg.norm(psi)


def basis_state(bits: str) -> np.ndarray:
    psi = np.zeros(2 ** len(bits))
    psi[int(bits, 2)] = 1.0
    return psi


def neel_state(L: int) -> np.ndarray:
    return basis_state("".join("01"[i % 2] for i in range(L)))


def apply_operator(H: OperatorTerms, psi: np.ndarray) -> np.ndarray:
    """``H|psi>`` applied string by string, without forming a matrix."""
    psi = np.asarray(psi)
    _check(H, psi)
    idx = np.arange(psi.size)
    dtype = np.result_type(psi, float)
    out = H.constant_shift * psi.astype(dtype)
    for ops, c in H.items():
        flip, zy, phase = _masks(ops)
        signed = psi * (1.0 - 2.0 * (np.bitwise_count(idx & zy) & 1))
        term = (c * phase) * signed[idx ^ flip]
        if np.iscomplexobj(term) and not np.iscomplexobj(out):
            if np.any(term.imag):
                out = out.astype(complex)
            else:
                term = term.real
        out = out + term
    return out


def energy(H: OperatorTerms, psi: np.ndarray) -> float:
    val = np.vdot(psi, apply_operator(H, psi))
    assert abs(val.imag) < 1e-10, f"non-real energy {val}"
    return float(val.real)


def variance(H: OperatorTerms, psi: np.ndarray) -> float:
    """``||(H - E)|psi>||^2``, non-negative by construction."""
    hpsi = apply_operator(H, psi)
    E = float(np.vdot(psi, hpsi).real)
    return float(np.linalg.norm(hpsi - E * psi) ** 2)


def diagonalize(H: OperatorTerms, max_sites: int = MAX_DENSE_SITES) -> EigenSystem:
    if H.length > max_sites:
        raise ResourceLimitError(f"exact diagonalization capped at {max_sites} sites")
    w, v = np.linalg.eigh(to_dense(H, max_sites))
    return EigenSystem(w, v)


def overlaps(psi: np.ndarray, eig: EigenSystem) -> np.ndarray:
    """Squared overlaps with every eigenstate."""
    return np.abs(eig.states.conj().T @ psi) ** 2


def max_fidelity(psi: np.ndarray, eig: EigenSystem, tie_tol: float = 1e-12) -> tuple[float, int]:
    """Largest squared overlap with an eigenstate; ties go to the lowest index."""
    f = overlaps(psi, eig)
    best = f.max()
    index = int(np.flatnonzero(f >= best - tie_tol)[0])
    return float(f[index]), index


def conventional_ite_step(H: OperatorTerms, psi: np.ndarray, d_tau: float,
                          eig: EigenSystem | None = None) -> np.ndarray:
    """``exp(-H d_tau)|psi>`` evaluated in the eigenbasis, then normalised."""
    if d_tau <= 0:
        raise InvalidSpecError("conventional ITE needs d_tau > 0")
    if eig is None:
        eig = diagonalize(H)
    c = eig.states.conj().T @ psi
    c = c * np.exp(-(eig.energies - eig.energies[0]) * d_tau)
    return normalize(eig.states @ c)


def siite_factors(energies: np.ndarray, delta: float, d_tau: float) -> np.ndarray:
    """Per-eigencomponent multiplier ``1 - d_tau / (E - delta)`` of one exact step."""
    return 1.0 - d_tau / (np.asarray(energies) - delta)


def hs_distance(H_shift: OperatorTerms, new: np.ndarray, old: np.ndarray, d_tau: float) -> float:
    """``|| H_shift new - (H_shift - d_tau) old ||``."""
    a = apply_operator(H_shift, new)
    b = apply_operator(H_shift, old) - d_tau * old
    return float(np.linalg.norm(a - b))


def _condition_estimate(H_shift: OperatorTerms, x: np.ndarray, psi: np.ndarray) -> float:
    # ||A|| ||A^-1 b|| / ||b|| is a lower bound on cond(A) and sharp when b
    # overlaps the smallest singular vector, which is the case that matters here.
    return H_shift.norm_bound() * np.linalg.norm(x) / np.linalg.norm(psi)


def _solve_shifted(H_shift: OperatorTerms, psi: np.ndarray) -> np.ndarray:
    """``H_shift^{-1} psi`` with a relative residual below ``SOLVE_TOL``."""
    A = to_sparse(H_shift)
    bnorm = np.linalg.norm(psi)

    def minres(b):
        return spla.minres(A, b, rtol=SOLVE_TOL * 1e-2, maxiter=20 * psi.size)[0]

    if np.iscomplexobj(psi) and not np.iscomplexobj(A.data):
        # scipy's MINRES drops the imaginary part when A is real
        x = minres(psi.real) + 1j * minres(psi.imag)
    else:
        x = minres(psi)
    resid = np.linalg.norm(A @ x - psi) / bnorm
    if resid > SOLVE_TOL and H_shift.length <= MAX_DENSE_SITES:
        # MINRES stagnates on nearly singular systems; try a direct solve.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            x = sla.solve(A.toarray(), psi, assume_a="her")
        resid = np.linalg.norm(A @ x - psi) / bnorm
    cond = _condition_estimate(H_shift, x, psi)
    if cond > CONDITION_LIMIT or resid > SOLVE_TOL:
        raise NearDegeneracyError(
            f"shifted operator is nearly singular (condition estimate {cond:.3g}); "
            "perturb delta slightly and retry"
        )
    return x


def _variational_step(H_shift: OperatorTerms, psi: np.ndarray, d_tau: float,
                      tol: float = 1e-14, maxiter: int = 2000) -> np.ndarray:
    """Minimise ``D^2`` over the real and imaginary parts with L-BFGS from ``psi``."""
    A = to_sparse(H_shift)
    target = A @ psi - d_tau * psi
    n = psi.size
    complex_state = np.iscomplexobj(psi) or np.iscomplexobj(A.data)

    def unpack(z):
        return z[:n] + 1j * z[n:] if complex_state else z

    def cost(z):
        r = A @ unpack(z) - target
        g = A.conj().T @ r
        grad = np.concatenate([g.real, g.imag]) if complex_state else g.real
        return float(np.vdot(r, r).real), 2.0 * grad

    z0 = np.concatenate([psi.real, psi.imag]) if complex_state else psi.real.copy()
    res = so.minimize(cost, z0, jac=True, method="L-BFGS-B",
                      options={"maxiter": maxiter, "ftol": tol, "gtol": 1e-12, "maxcor": 50})
    return unpack(res.x)


def siite_step_exact(H_shift: OperatorTerms, psi: np.ndarray, d_tau: float,
                     solver: str = "least_squares", eig: EigenSystem | None = None) -> np.ndarray:
    """One shift-invert imaginary-time step, normalised after the minimisation.

    Args:
        H_shift: the shifted operator ``H - delta``.
        psi: current state.
        d_tau: signed time step. Positive steps amplify the eigenstate just
            below ``delta``, negative ones the eigenstate just above it.
        solver: ``"least_squares"`` (iterative Hermitian solve of the exact
            minimiser), ``"variational"`` (generic optimiser on the cost) or
            ``"eigenbasis"`` (closed form; needs ``eig``).
        eig: eigensystem of ``H_shift`` for the closed-form path.
    """
    psi = np.asarray(psi)
    _check(H_shift, psi)
    if solver == "least_squares":
        new = psi - d_tau * _solve_shifted(H_shift, psi)
    elif solver == "eigenbasis":
        if eig is None:
            raise InvalidSpecError("eigenbasis solver needs the eigensystem of H_shift")
        gap = np.min(np.abs(eig.energies))
        if gap * CONDITION_LIMIT < np.max(np.abs(eig.energies)):
            raise NearDegeneracyError("delta sits on an eigenvalue; perturb it and retry")
        c = eig.states.conj().T @ psi
        new = eig.states @ (c * siite_factors(eig.energies, 0.0, d_tau))
    elif solver == "variational":
        new = _variational_step(H_shift, psi, d_tau)
    else:
        raise InvalidSpecError(f"unknown solver {solver!r}")
    return normalize(new)


def entropy_statevector(psi: np.ndarray, cut: int) -> float:
    """Von Neumann entropy (natural log) across the cut after ``cut`` sites."""
    L = int(round(np.log2(psi.size)))
    if not 1 <= cut <= L - 1:
        raise InvalidSpecError(f"cut {cut} outside 1..{L - 1}")
    s = np.linalg.svd(psi.reshape(2**cut, -1), compute_uv=False)
    s = s[s > 1e-12]
    p = s**2 / np.sum(s**2)
    return float(-np.sum(p * np.log(p)))


def save_statevector(psi: np.ndarray, path, tag: str = "") -> Path:
    """Write ``<path>.bin`` (little-endian complex128) and a ``<path>.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.asarray(psi, dtype="<c16").tofile(path.with_suffix(".bin"))
    meta = {"L": int(round(np.log2(psi.size))), "norm": float(np.linalg.norm(psi)), "tag": tag}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return path


def load_statevector(path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    psi = np.fromfile(path.with_suffix(".bin"), dtype="<c16")
    if psi.size != 2 ** meta["L"]:
        raise InvalidSpecError("snapshot size disagrees with its sidecar")
    if np.all(psi.imag == 0):
        psi = psi.real.copy()
    return psi
