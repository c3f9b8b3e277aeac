"""Post-hoc diagnostics: energy error, effective gaps, folding baseline, comparison tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import exact
from .errors import InvalidSpecError, NearDegeneracyError
from .models import OperatorTerms, shift_operator, to_mpo
from .mps import expectation, variance_mps
from .sweeps import folded_ground_state, variational_ground_state

COMPARISON_COLUMNS = ("W", "method", "F_mean", "F_std", "log10_sigma_mean", "dE_mean")


def relative_energy_error(E_final: float, delta: float, E_min: float, E_max: float) -> float:
    """``(E_final - delta) / (E_max - E_min)``."""
    width = E_max - E_min
    if not width > 0:
        raise InvalidSpecError("spectral bandwidth must be positive")
    return (E_final - delta) / width


def effective_gap(E_n: float, E_adj: float, delta: float) -> float:
    """Level spacing of ``(H - delta)^-1`` between two eigenvalues of ``H``."""
    a, b = E_n - delta, E_adj - delta
    if a == 0 or b == 0:
        raise NearDegeneracyError("delta coincides with an eigenvalue")
    return abs((E_n - E_adj) / (a * b))


def gap_ratio(E_0: float, E_1: float, epsilon: float) -> float:
    """Gain in spacing from shift-inverting at ``delta = E_0 + epsilon``."""
    if not E_1 > E_0:
        raise InvalidSpecError("need E_1 > E_0")
    if not epsilon > 0:
        raise InvalidSpecError("epsilon must be > 0")
    return effective_gap(E_0, E_1, E_0 + epsilon) / (E_1 - E_0)


@dataclass(frozen=True)
class GapReport:
    E_n: float
    E_below: float | None
    E_above: float | None
    delta: float
    epsilon: float
    delta_eff: float
    ratio: float


def gap_report(energies, delta: float) -> GapReport:
    """Gap data for the eigenvalue nearest ``delta`` and its closest neighbour."""
    e = np.sort(np.asarray(energies, dtype=float))
    n = int(np.argmin(np.abs(e - delta)))
    below = float(e[n - 1]) if n > 0 else None
    above = float(e[n + 1]) if n + 1 < e.size else None
    adj = min((x for x in (below, above) if x is not None), key=lambda x: abs(x - e[n]))
    d_eff = effective_gap(e[n], adj, delta)
    return GapReport(float(e[n]), below, above, delta, float(abs(e[n] - delta)), d_eff,
                     d_eff / abs(adj - e[n]))


def spectral_bounds(H: OperatorTerms, chi: int = 32, *, seed=0, sweeps: int = 30):
    """``(E_min, E_max, label)``; exact for ``L <= 12``, otherwise variational bounds."""
    if H.length <= exact.MAX_DENSE_SITES and H.length <= 12:
        w = np.linalg.eigvalsh(exact.to_dense(H))
        return float(w[0]), float(w[-1]), "exact"
    mpo = to_mpo(H)
    _, lo = variational_ground_state(mpo, chi, seed=seed, sweeps=sweeps)
    _, hi = variational_ground_state(mpo.scaled(-1.0), chi, seed=seed, sweeps=sweeps)
    return lo, -hi, "variational bounds"


def folding_baseline(H: OperatorTerms, delta: float, chi_cap: int, *, eig: exact.EigenSystem | None = None,
                     seed=0, sweeps: int = 50):
    """Ground state of ``(H - delta)^2`` at bond dimension ``chi_cap``.

    Returns:
        ``(fidelity, variance, energy_error)``; fidelity is ``None`` when no
        eigensystem is available.
    """
    state = folded_ground_state(to_mpo(shift_operator(H, delta)), chi_cap, seed=seed, sweeps=sweeps)
    H_mpo = to_mpo(H)
    E = expectation(state, H_mpo)
    sigma = variance_mps(state, H_mpo, E)
    if eig is None and H.length <= exact.MAX_DENSE_SITES:
        eig = exact.diagonalize(H)
    if eig is None:
        lo, hi, _ = spectral_bounds(H, seed=seed)
        return None, sigma, relative_energy_error(E, delta, lo, hi)
    F, _ = exact.max_fidelity(state.to_statevector(), eig)
    return F, sigma, relative_energy_error(E, delta, eig.e_min, eig.e_max)


def comparison_rows(records) -> list[dict]:
    """Aggregate ``(W, method, fidelity, sigma, dE)`` records into table rows."""
    groups: dict[tuple, list] = {}
    for W, method, F, sigma, dE in records:
        groups.setdefault((float(W), method), []).append((F, sigma, dE))
    rows = []
    for (W, method), vals in sorted(groups.items()):
        F = np.array([v[0] for v in vals], dtype=float)
        sig = np.array([v[1] for v in vals], dtype=float)
        dE = np.array([v[2] for v in vals], dtype=float)
        rows.append({
            "W": W,
            "method": method,
            "F_mean": float(np.mean(F)),
            "F_std": float(np.std(F)),
            "log10_sigma_mean": float(np.mean(np.log10(np.maximum(sig, 1e-300)))),
            "dE_mean": float(np.mean(dE)),
        })
    return rows


def write_comparison(rows, path) -> Path:
    from .engine import fmt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in COMPARISON_COLUMNS])
    return path
