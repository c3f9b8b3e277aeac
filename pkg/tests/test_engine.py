from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from siite import exact
from siite.engine import (
    RunConfig,
    accept_update,
    aggregate_rows,
    check_timesteps,
    choose_sign,
    choose_timestep,
    floor_engaged,
    growth_trigger,
    read_steps,
    run_ensemble,
    StepRecord,
    run_trajectory,
    variance_trend_slopes,
    write_trajectory,
)
from siite.errors import ConfigError
from siite.models import HamiltonianSpec, build
from siite.mps import Mps, random_mps


ROW = StepRecord(0.0, 0.0, 0.0, 1.0, 1, 0.0, 0.0, 0.0)


def spec(L=8, W=6.0, seed=1):
    return HamiltonianSpec("heisenberg", L, W=W, seed=seed)


def test_timestep_rule():
    cfg = RunConfig(spec())
    assert choose_timestep(0.3, 0.0, cfg) == pytest.approx(0.06)
    assert choose_timestep(1e-4, 0.0, cfg) == 1e-3
    assert choose_timestep(100.0, 0.0, cfg) == 0.5
    assert floor_engaged(0.004, 0.0, cfg)
    assert not floor_engaged(0.006, 0.0, cfg)
    # boundary: 0.1 * 2 * 0.005 == 1e-3 is not below the floor
    assert not floor_engaged(0.005, 0.0, cfg)


def test_sign_rule():
    assert choose_sign(0.2, 0.0) == 1
    assert choose_sign(-0.2, 0.0) == -1
    assert choose_sign(0.0, 0.0) == 1


def test_accept_and_growth_rules():
    cfg = RunConfig(spec())
    assert accept_update(1e-3, 1e-4, cfg)
    assert not accept_update(1.1e-3, 1e-4, cfg)
    assert not growth_trigger([1, 1, 1, 1], 5, 0, cfg)
    assert growth_trigger([1, 1, 1, 1, 1], 1.5, 0, cfg)
    assert not growth_trigger([1, 1, 1, 1, 1], 0.5, 0, cfg)
    assert growth_trigger([], 0.5, 3, cfg)


def test_config_validation_names_field():
    with pytest.raises(ConfigError) as err:
        RunConfig(spec(), d_tau_safety=1.5).validate()
    assert err.value.field == "d_tau_safety"
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict({"hamiltonian": spec().to_dict()})
    assert err.value.field == "variance_target"
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict({"hamiltonian": spec().to_dict(), "variance_target": 1e-6, "bogus": 1})
    assert err.value.field == "bogus"


def test_config_round_trip():
    cfg = RunConfig(spec(), delta=0.1, variance_target=math.inf, chi_max=20)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("backend", ["exact", "mps"])
def test_short_run_reaches_target_and_is_deterministic(backend, tmp_path):
    cfg = RunConfig(spec(), backend=backend, variance_target=1e-9, max_steps=200, seed=2)
    a = run_trajectory(cfg, out_dir=tmp_path / "a")
    b = run_trajectory(cfg)
    assert a.termination == "variance_reached"
    assert [s.row() for s in a.steps] == [s.row() for s in b.steps]
    assert check_timesteps(a.steps, cfg.delta, cfg) == []
    # independent re-evaluation of the checkpointed state
    _, H = build(cfg.hamiltonian)
    if backend == "mps":
        psi = Mps.load(a.final_state_ref).to_statevector()
    else:
        psi = exact.load_statevector(a.final_state_ref)
    assert exact.variance(H, psi) < cfg.variance_target


def test_sign_follows_warm_start_side():
    cfg = RunConfig(spec(W=2.0, seed=4), backend="exact", variance_target=1e-6, max_steps=100)
    rec = run_trajectory(cfg)
    assert rec.termination == "variance_reached"
    assert rec.sign == choose_sign(rec.steps[0].E, cfg.delta)
    assert all(np.sign(s.d_tau) == -rec.sign for s in rec.steps[1:])
    assert np.sign(rec.final.E - cfg.delta) == rec.sign


def test_warm_start_override_and_fidelity():
    s = spec(L=6, W=4.0, seed=3)
    _, H = build(s)
    eig = exact.diagonalize(H)
    start = random_mps(6, 2, 0)
    cfg = RunConfig(s, backend="mps", variance_target=1e-10, max_steps=300, fidelity_target=None)
    rec = run_trajectory(cfg, eig=eig, initial_state=start)
    assert rec.steps[0].fidelity is not None
    assert rec.final.fidelity > 0.999


def test_bond_growth_when_starting_small():
    cfg = RunConfig(spec(W=1.0, seed=0), chi0=1, variance_target=1e-8, max_steps=300)
    rec = run_trajectory(cfg)
    assert any(s.bond_growth for s in rec.steps)
    assert rec.final.chi_max > 1


@pytest.mark.parametrize("W,seed,chi0", [(1.0, 0, 4), (2.0, 1, 2), (4.0, 2, 2)])
def test_variance_trend_after_growth(W, seed, chi0):
    cfg = RunConfig(spec(W=W, seed=seed), chi0=chi0, variance_target=1e-8, max_steps=400)
    rec = run_trajectory(cfg)
    assert rec.termination == "variance_reached"
    slopes = variance_trend_slopes(rec.steps)
    assert slopes.size and np.all(slopes <= 0)


def test_variance_trend_slopes_helper():
    rows = [dataclasses.replace(ROW, sigma=float(v), bond_growth=(k == 0)) for k, v in enumerate(range(30, 0, -1))]
    assert np.allclose(variance_trend_slopes(rows), -1.0)
    assert variance_trend_slopes(rows[:10]).size == 0


def test_max_steps_termination():
    cfg = RunConfig(spec(W=1.0, seed=0), variance_target=1e-14, max_steps=2)
    rec = run_trajectory(cfg)
    assert rec.termination == "max_steps"
    assert len(rec.steps) == 3


def test_trajectory_files(tmp_path):
    cfg = RunConfig(spec(L=6), variance_target=1e-8, max_steps=50)
    rec = run_trajectory(cfg, out_dir=tmp_path)
    write_trajectory(rec, tmp_path)
    header = (tmp_path / "steps.csv").read_text().splitlines()[0].split(",")
    assert header[:11] == ["tau", "d_tau", "E", "sigma", "chi_max", "S_mean", "S_central", "D",
                           "fidelity", "accepted", "bond_growth"]
    back = read_steps(tmp_path / "steps.csv")
    assert [s.row() for s in back] == [s.row() for s in rec.steps]


def test_ensemble_permutation_invariance():
    base = RunConfig(spec(L=6, W=4.0), backend="exact", variance_target=1e-8, max_steps=100,
                     fidelity_target=0.999)
    a = run_ensemble(base, [3, 1, 2], matched_ground=False)
    b = run_ensemble(base, [1, 2, 3], matched_ground=False)
    assert a.aggregate == b.aggregate
    one = run_ensemble(base, [5], matched_ground=True)
    agg = one.aggregate
    assert agg["n"] == 1 and agg["sigma_std"] == 0.0
    assert agg["sigma_mean"] == one.rows[0].sigma
    assert one.rows[0].gs_S_mean is not None


def test_aggregate_skips_failed_rows():
    base = RunConfig(spec(L=6, W=4.0), backend="exact", variance_target=1e-8, max_steps=50)
    rows = run_ensemble(base, [1], matched_ground=False).rows
    bad = dataclasses.replace(rows[0], seed=2, termination="error", error="boom")
    agg = aggregate_rows(rows + [bad])
    assert agg["n"] == 2 and agg["n_ok"] == 1
