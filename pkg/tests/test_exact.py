from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siite import exact
from siite.errors import InvalidSpecError, NearDegeneracyError, ResourceLimitError
from siite.models import shift_operator, to_dense

from conftest import heisenberg, random_state


def test_apply_operator_matches_dense(rng):
    H = heisenberg(7, W=3.0, seed=5)
    psi = random_state(rng, 7)
    assert np.allclose(exact.apply_operator(H, psi), to_dense(H) @ psi, atol=1e-13)


def test_energy_variance_oracle():
    H = heisenberg(2, W=0.0)
    psi = exact.basis_state("01")
    assert exact.energy(H, psi) == pytest.approx(-0.25, abs=1e-15)
    assert exact.variance(H, psi) == pytest.approx(0.25, abs=1e-15)


def test_neel_state():
    assert np.flatnonzero(exact.neel_state(4))[0] == 0b0101


def test_eigenstates_have_zero_variance():
    H = heisenberg(6, W=2.0, seed=1)
    eig = exact.diagonalize(H)
    for k in range(0, 64, 9):
        assert exact.variance(H, eig.states[:, k]) < 1e-24
        assert exact.max_fidelity(eig.states[:, k], eig)[1] == k


def test_diagonalize_size_cap():
    with pytest.raises(ResourceLimitError):
        exact.diagonalize(heisenberg(6), max_sites=5)


def test_max_fidelity_tie_goes_to_lowest_index():
    eig = exact.EigenSystem(np.array([0.0, 1.0]), np.eye(2))
    F, k = exact.max_fidelity(np.array([1.0, 1.0]) / np.sqrt(2), eig)
    assert k == 0 and F == pytest.approx(0.5)


@pytest.mark.parametrize("solver", ["least_squares", "variational"])
def test_step_solvers_agree_with_eigenbasis(rng, solver):
    H = heisenberg(6, W=4.0, seed=2)
    delta, d_tau = 0.05, 0.02
    Hs = shift_operator(H, delta)
    eig = exact.diagonalize(Hs)
    psi = random_state(rng, 6)
    ref = exact.siite_step_exact(Hs, psi, d_tau, "eigenbasis", eig)
    new = exact.siite_step_exact(Hs, psi, d_tau, solver)
    assert abs(np.vdot(ref, new)) ** 2 > 1 - 1e-9


def test_step_minimises_distance(rng):
    H = heisenberg(5, W=2.0, seed=3)
    Hs = shift_operator(H, 0.1)
    psi = random_state(rng, 5)
    d_tau = 0.03
    A = to_dense(Hs)
    raw = psi - d_tau * np.linalg.solve(A, psi)
    assert exact.hs_distance(Hs, raw, psi, d_tau) < 1e-12
    for _ in range(5):
        other = raw + 1e-3 * random_state(rng, 5)
        assert exact.hs_distance(Hs, other, psi, d_tau) > 0


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-0.5, 0.5).filter(lambda t: abs(t) > 1e-3), st.integers(0, 50))
def test_amplification_law(delta, d_tau, seed):
    H = heisenberg(4, W=3.0, seed=seed)
    eig = exact.diagonalize(shift_operator(H, delta))
    if np.min(np.abs(eig.energies)) < 1e-3:
        return
    rng = np.random.default_rng(seed)
    a, b = rng.choice(16, 2, replace=False)
    psi = (eig.states[:, a] + 0.7 * eig.states[:, b]) / np.sqrt(1.49)
    new = exact.siite_step_exact(shift_operator(H, delta), psi, d_tau, "eigenbasis", eig)
    c = eig.states.T @ new
    fa, fb = exact.siite_factors(eig.energies[[a, b]], 0.0, d_tau)
    assert c[a] / c[b] == pytest.approx(fa / fb / 0.7, rel=1e-8, abs=1e-10)


def test_degenerate_shift_raises():
    H = heisenberg(4, W=0.0)
    E = np.linalg.eigvalsh(to_dense(H))[0]
    Hs = shift_operator(H, E)
    psi = exact.neel_state(4).astype(float)
    with pytest.raises(NearDegeneracyError):
        exact.siite_step_exact(Hs, psi, 0.1)
    with pytest.raises(NearDegeneracyError):
        exact.siite_step_exact(Hs, psi, 0.1, "eigenbasis", exact.diagonalize(Hs))


def test_unknown_solver():
    H = heisenberg(3)
    with pytest.raises(InvalidSpecError):
        exact.siite_step_exact(H, exact.neel_state(3), 0.1, "magic")


def test_conventional_ite_converges_to_ground_state():
    H = heisenberg(6, W=1.0, seed=0)
    eig = exact.diagonalize(H)
    psi = exact.neel_state(6).astype(float)
    for _ in range(400):
        psi = exact.conventional_ite_step(H, psi, 0.1, eig)
    assert abs(eig.states[:, 0] @ psi) ** 2 > 0.999


def test_entropy_of_bell_pair():
    psi = (exact.basis_state("0110") + exact.basis_state("0000")) / np.sqrt(2)
    assert exact.entropy_statevector(psi, 2) == pytest.approx(np.log(2))
    assert exact.entropy_statevector(psi, 1) == pytest.approx(0.0, abs=1e-12)


def test_statevector_round_trip(tmp_path, rng):
    psi = random_state(rng, 5)
    exact.save_statevector(psi, tmp_path / "snap", "test")
    assert np.array_equal(exact.load_statevector(tmp_path / "snap"), psi)
    raw = (tmp_path / "snap.bin").read_bytes()
    assert len(raw) == 16 * 32
    assert np.frombuffer(raw[:16], dtype="<c16")[0] == psi[0]
