from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from siite import exact
from siite.analysis import (
    comparison_rows,
    effective_gap,
    folding_baseline,
    gap_ratio,
    gap_report,
    relative_energy_error,
    spectral_bounds,
    write_comparison,
)
from siite.errors import InvalidSpecError, NearDegeneracyError

from conftest import heisenberg


def test_gap_oracles():
    # |1/(0 - 0.1) - 1/(1 - 0.1)| = 10 + 10/9
    assert effective_gap(0.0, 1.0, 0.1) == pytest.approx(100.0 / 9.0, rel=1e-15)
    assert gap_ratio(0.0, 1.0, 0.1) == pytest.approx(100.0 / 9.0, rel=1e-15)
    with pytest.raises(NearDegeneracyError):
        effective_gap(0.0, 1.0, 0.0)
    with pytest.raises(InvalidSpecError):
        gap_ratio(1.0, 0.0, 0.1)


@given(st.floats(1e-3, 1.0), st.floats(1e-3, 0.99))
def test_gap_ratio_exceeds_one_below_adjacent(delta0, frac):
    eps = frac * min(1.0, delta0)
    assert gap_ratio(0.0, delta0, eps) > 1.0


def test_gap_ratio_small_gap_limit():
    eps = 0.1
    assert gap_ratio(0.0, 1e-6, eps) == pytest.approx(1 / eps**2, rel=1e-4)


def test_effective_gap_matches_inverted_matrix():
    H = heisenberg(6, W=3.0, seed=2)
    delta = 0.013
    A = exact.to_dense(H) - delta * np.eye(64)
    inv = np.sort(np.linalg.eigvalsh(np.linalg.inv(A)))
    rep = gap_report(np.linalg.eigvalsh(exact.to_dense(H)), delta)
    adj = rep.E_below if rep.E_above is None or (
        rep.E_below is not None and abs(rep.E_below - rep.E_n) < abs(rep.E_above - rep.E_n)) else rep.E_above
    a, b = 1 / (rep.E_n - delta), 1 / (adj - delta)
    ia = inv[np.argmin(np.abs(inv - a))]
    ib = inv[np.argmin(np.abs(inv - b))]
    assert rep.delta_eff == pytest.approx(abs(ia - ib), rel=1e-8)


def test_relative_energy_error():
    assert relative_energy_error(0.5, 0.0, -2.0, 3.0) == pytest.approx(0.1)
    with pytest.raises(InvalidSpecError):
        relative_energy_error(0.0, 0.0, 1.0, 1.0)


def test_spectral_bounds_exact_and_variational():
    H = heisenberg(8, W=2.0, seed=0)
    lo, hi, label = spectral_bounds(H)
    w = np.linalg.eigvalsh(exact.to_dense(H))
    assert label == "exact" and lo == pytest.approx(w[0]) and hi == pytest.approx(w[-1])


def test_folding_baseline_returns_finite_metrics():
    H = heisenberg(8, W=6.0, seed=1)
    F, sigma, dE = folding_baseline(H, 0.0, 4)
    assert 0 < F <= 1 + 1e-12 and sigma >= 0 and abs(dE) < 0.1


def test_comparison_table(tmp_path):
    rows = comparison_rows([(4, "siite", 1.0, 1e-8, 0.01), (4, "siite", 0.98, 1e-6, -0.01),
                            (4, "folding", 0.5, 1e-3, 0.02)])
    assert [r["method"] for r in rows] == ["folding", "siite"]
    assert rows[1]["F_mean"] == pytest.approx(0.99)
    assert rows[1]["log10_sigma_mean"] == pytest.approx(-7.0)
    path = write_comparison(rows, tmp_path / "c.csv")
    assert path.read_text().splitlines()[0] == "W,method,F_mean,F_std,log10_sigma_mean,dE_mean"
