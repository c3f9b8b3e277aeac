from __future__ import annotations

import numpy as np
import pytest

from siite import exact
from siite.errors import InvalidSpecError
from siite.models import shift_operator, to_mpo
from siite.mps import Mps, expectation, random_mps, variance_mps
from siite.sweeps import (
    folded_ground_state,
    local_environment,
    rayleigh_sweeps,
    siite_sweep,
    variational_ground_state,
)

from conftest import heisenberg


def fidelity(a, b):
    return abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)


@pytest.fixture(scope="module")
def chain():
    L, delta = 6, 0.05
    H = heisenberg(L, W=4.0, seed=7)
    Hs = shift_operator(H, delta)
    return H, Hs, to_mpo(Hs), exact.diagonalize(Hs)


def test_full_bond_sweep_equals_exact_step(chain):
    _, Hs, mpo, eig = chain
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(2**6)
    psi /= np.linalg.norm(psi)
    mps = Mps.from_statevector(psi, cutoff=0.0)
    for d_tau in (0.03, -0.03):
        new, D = siite_sweep(mps, mpo, d_tau)
        ref = exact.siite_step_exact(Hs, psi, d_tau, "eigenbasis", eig)
        assert fidelity(new.to_statevector(), ref) > 1 - 1e-12
        assert D < 1e-8


def test_eigenstate_is_fixed_point(chain):
    _, _, mpo, eig = chain
    vec = eig.states[:, 20]
    new, _ = siite_sweep(Mps.from_statevector(vec, cutoff=0.0), mpo, 0.02)
    assert fidelity(new.to_statevector(), vec) > 1 - 1e-10


def test_low_bond_sweep_local_costs_monotone(chain):
    _, Hs, mpo, _ = chain
    mps = random_mps(6, 2, 3)
    new, D = siite_sweep(mps, mpo, 0.05, check=True)
    assert new.bond_dims == mps.bond_dims
    psi, out = mps.to_statevector(), new.to_statevector()
    # D is reported for the unnormalised minimiser; the normalised result can only do worse
    scale = np.vdot(out, exact.apply_operator(Hs, exact.apply_operator(Hs, out)))
    assert D <= exact.hs_distance(Hs, psi, psi, 0.05) + 1e-12
    assert scale.real > 0


@pytest.mark.parametrize("mode", ["stochastic", "stochastic-auto"])
def test_other_modes_lower_the_cost(chain, mode):
    _, Hs, mpo, eig = chain
    rng = np.random.default_rng(1)
    psi = rng.standard_normal(2**6)
    psi /= np.linalg.norm(psi)
    mps = Mps.from_statevector(psi, cutoff=0.0)
    new, D = siite_sweep(mps, mpo, 0.03, mode, rng=5)
    assert np.isfinite(D)
    assert D < exact.hs_distance(Hs, psi, psi, 0.03)


def test_parallel_reload_is_normalised_with_finite_cost(chain):
    # independent site updates are not a descent step; only end states are judged
    _, _, mpo, _ = chain
    new, D = siite_sweep(random_mps(6, 3, 4), mpo, 0.03, "parallel")
    assert np.isfinite(D)
    assert new.norm() == pytest.approx(1.0)


def test_stochastic_is_seeded(chain):
    _, _, mpo, _ = chain
    mps = random_mps(6, 3, 0)
    a, _ = siite_sweep(mps, mpo, 0.03, "stochastic", rng=11)
    b, _ = siite_sweep(mps, mpo, 0.03, "stochastic", rng=11)
    assert np.array_equal(a.to_statevector(), b.to_statevector())


def test_bad_arguments(chain):
    _, _, mpo, _ = chain
    mps = random_mps(6, 2, 0)
    with pytest.raises(InvalidSpecError):
        siite_sweep(mps, mpo, 0.0)
    with pytest.raises(InvalidSpecError):
        siite_sweep(mps, mpo, 0.1, "sideways")


def test_local_environment_cost_matches_global(chain):
    _, Hs, mpo, _ = chain
    new, old = random_mps(6, 3, 1), random_mps(6, 2, 2)
    env = local_environment(new, old, mpo, 0.04, 2)
    moved = new.copy().canonicalize(2)
    x = moved.tensors[2].ravel()
    D = exact.hs_distance(Hs, moved.to_statevector(), old.to_statevector(), 0.04)
    assert env.cost(x) == pytest.approx(D**2, rel=1e-10, abs=1e-12)


def test_variational_ground_state_matches_ed():
    H = heisenberg(8, W=2.0, seed=3)
    state, E = variational_ground_state(to_mpo(H), 16)
    assert E == pytest.approx(np.linalg.eigvalsh(exact.to_dense(H))[0], abs=1e-9)
    assert expectation(state, to_mpo(H)) == pytest.approx(E, abs=1e-9)


def test_folded_warm_start_lands_near_target():
    H = heisenberg(8, W=6.0, seed=1)
    Hs = shift_operator(H, 0.0)
    mpo = to_mpo(Hs)
    warm = folded_ground_state(mpo, 4, seed=0)
    assert warm.chi_max <= 4
    eig = exact.diagonalize(H)
    near = np.min(np.abs(eig.energies))
    E = expectation(warm, to_mpo(H))
    # the folded minimum bounds the distance of the energy from the target
    assert abs(E) <= np.sqrt(variance_mps(warm, to_mpo(H), E) + E**2) + 1e-12
    assert abs(E) < 0.5 and near < 0.5


def test_rayleigh_validates():
    mpo = to_mpo(heisenberg(4))
    with pytest.raises(InvalidSpecError):
        rayleigh_sweeps(mpo, 0)
    with pytest.raises(InvalidSpecError):
        rayleigh_sweeps(mpo, 2, layers=3)
