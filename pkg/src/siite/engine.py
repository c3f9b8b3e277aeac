"""Trajectory driver: warm start, adaptive signed timestep, accept/reject, bond growth, stopping."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import numbers
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import exact
from .errors import ConfigError, InvalidSpecError, SiiteError
from .models import HamiltonianSpec, OperatorTerms, build, shift_operator, to_mpo
from .mps import (
    Mps,
    entropy_profile,
    expectation,
    grow_bond_random,
    grow_bond_subspace,
    max_bond_dims,
    variance_mps,
)
from .sweeps import folded_ground_state, siite_sweep, variational_ground_state

log = logging.getLogger(__name__)

TERMINATIONS = ("variance_reached", "fidelity_reached", "max_steps", "restart_advised")
STEP_COLUMNS = (
    "tau", "d_tau", "E", "sigma", "chi_max", "S_mean", "S_central", "D", "fidelity",
    "accepted", "bond_growth", "floor_clamped", "retries",
)
FIDELITY_MAX_SITES = 14


@dataclass
class RunConfig:
    """Settings of one trajectory. Defaults follow the published algorithm where it states them."""

    hamiltonian: HamiltonianSpec
    delta: float = 0.0
    backend: str = "mps"
    chi0: int = 4
    d_tau_min: float = 1e-3
    d_tau_safety: float = 0.1
    d_tau_max: float = 0.5
    variance_target: float = 1e-6
    fidelity_target: float | None = None
    max_steps: int = 1000
    accept_factor: float = 10.0
    growth_window: int = 5
    growth_strategy: str = "subspace"
    update_mode: str = "sequential"
    seed: int = 0
    reject_threshold: int = 3
    max_retries: int = 8
    growth_increment: int = 2
    growth_a: float = 1e-3
    growth_eps: float = 1e-6
    stall_tolerance: float = 0.05
    chi_max: int | None = None
    stochastic_fraction: float = 0.5
    warm_sweeps: int = 50
    exact_solver: str = "auto"
    restart_window: int = 20
    record_fidelity: bool = True

    def validate(self) -> RunConfig:
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(name, msg)

        for name in ("delta", "d_tau_min", "d_tau_safety", "d_tau_max", "variance_target",
                     "accept_factor", "growth_a", "growth_eps", "stall_tolerance",
                     "stochastic_fraction"):
            value = getattr(self, name)
            need(isinstance(value, numbers.Real) and not isinstance(value, bool), name,
                 f"expected a number, got {value!r}")
        for name in ("chi0", "max_steps", "growth_window", "seed", "reject_threshold",
                     "max_retries", "growth_increment", "warm_sweeps", "restart_window"):
            value = getattr(self, name)
            need(isinstance(value, numbers.Integral) and not isinstance(value, bool), name,
                 f"expected an integer, got {value!r}")
        need(self.fidelity_target is None or isinstance(self.fidelity_target, numbers.Real),
             "fidelity_target", "expected a number or null")
        need(self.chi_max is None or isinstance(self.chi_max, numbers.Integral), "chi_max",
             "expected an integer or null")

        need(isinstance(self.hamiltonian, HamiltonianSpec), "hamiltonian", "must be a Hamiltonian spec")
        need(self.backend in ("exact", "mps"), "backend", "must be 'exact' or 'mps'")
        need(self.chi0 >= 1, "chi0", "must be >= 1")
        need(0 < self.d_tau_min <= self.d_tau_max, "d_tau_min", "need 0 < d_tau_min <= d_tau_max")
        need(0 < self.d_tau_safety < 1, "d_tau_safety", "must lie in (0, 1)")
        need(self.variance_target > 0, "variance_target", "must be > 0")
        need(self.fidelity_target is None or 0 < self.fidelity_target <= 1, "fidelity_target",
             "must lie in (0, 1]")
        need(self.max_steps >= 0, "max_steps", "must be >= 0")
        need(self.accept_factor > 0, "accept_factor", "must be > 0")
        need(self.growth_window >= 1, "growth_window", "must be >= 1")
        need(self.growth_strategy in ("subspace", "random"), "growth_strategy",
             "must be 'subspace' or 'random'")
        need(self.update_mode in ("sequential", "parallel", "stochastic", "stochastic-auto"),
             "update_mode", "unknown update mode")
        need(self.exact_solver in ("auto", "least_squares", "eigenbasis", "variational"),
             "exact_solver", "unknown solver")
        need(self.reject_threshold >= 1, "reject_threshold", "must be >= 1")
        need(self.chi_max is None or self.chi_max >= self.chi0, "chi_max", "must be >= chi0")
        need(0 < self.stochastic_fraction <= 1, "stochastic_fraction", "must lie in (0, 1]")
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["hamiltonian"] = self.hamiltonian.to_dict()
        if math.isinf(self.variance_target):
            out["variance_target"] = "inf"
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        doc = dict(doc)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(key, "unknown key")
        if "hamiltonian" not in doc:
            raise ConfigError("hamiltonian", "missing")
        if "variance_target" not in doc:
            raise ConfigError("variance_target", "missing")
        try:
            doc["hamiltonian"] = HamiltonianSpec.from_dict(doc["hamiltonian"])
        except (TypeError, InvalidSpecError) as exc:
            raise ConfigError("hamiltonian", str(exc)) from exc
        if doc["variance_target"] == "inf":
            doc["variance_target"] = math.inf
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from exc
        return cfg.validate()


@dataclass
class StepRecord:
    tau: float
    d_tau: float
    E: float
    sigma: float
    chi_max: int
    mean_entropy: float
    central_entropy: float
    D: float
    fidelity: float | None = None
    accepted: bool = True
    bond_growth: bool = False
    floor_clamped: bool = False
    retries: int = 0

    def row(self) -> list:
        return [self.tau, self.d_tau, self.E, self.sigma, self.chi_max, self.mean_entropy,
                self.central_entropy, self.D, self.fidelity, self.accepted, self.bond_growth,
                self.floor_clamped, self.retries]


@dataclass
class TrajectoryRecord:
    config: RunConfig
    steps: list[StepRecord]
    termination: str
    final_state: object = None
    final_state_ref: str | None = None
    sign: int = 1
    wall_time: float = 0.0
    eigen_index: int | None = None

    @property
    def final(self) -> StepRecord:
        return self.steps[-1]


# -- policy -------------------------------------------------------------------------------


def choose_timestep(E: float, delta: float, cfg: RunConfig) -> float:
    """``clamp(c * 2|E - delta|, d_tau_min, d_tau_max)``."""
    raw = cfg.d_tau_safety * 2.0 * abs(E - delta)
    return float(min(max(raw, cfg.d_tau_min), cfg.d_tau_max))


def floor_engaged(E: float, delta: float, cfg: RunConfig) -> bool:
    return cfg.d_tau_safety * 2.0 * abs(E - delta) < cfg.d_tau_min


def choose_sign(E0: float, delta: float) -> int:
    """Side of ``delta`` to target: ``+1`` for the eigenstate just above, ``-1`` just below.

    The warm-start energy picks the side; an exact tie goes to ``+1``. A step
    targets the state above ``delta`` when ``d_tau`` is negative, so the signed
    step is ``-choose_sign(...) * |d_tau|``.
    """
    if E0 == delta:
        log.info("warm-start energy equals delta; targeting the state above")
        return 1
    return 1 if E0 > delta else -1


def accept_update(sigma_new: float, sigma_old: float, cfg: RunConfig) -> bool:
    return sigma_new <= cfg.accept_factor * sigma_old


def growth_trigger(sigma_history, sigma_now: float, consecutive_rejects: int, cfg: RunConfig) -> bool:
    """Grow when the variance exceeds its recent mean or updates keep failing."""
    if consecutive_rejects >= cfg.reject_threshold:
        return True
    window = list(sigma_history)[-cfg.growth_window:]
    return len(window) >= cfg.growth_window and sigma_now > float(np.mean(window))


def stalled(sigma_history, sigma_now: float, cfg: RunConfig) -> bool:
    """Variance no longer falling by ``stall_tolerance`` relative to its recent mean."""
    window = list(sigma_history)[-cfg.growth_window:]
    if len(window) < cfg.growth_window:
        return False
    return sigma_now > (1.0 - cfg.stall_tolerance) * float(np.mean(window))


# -- backends -------------------------------------------------------------------------------


class _ExactBackend:
    def __init__(self, cfg, H, eig):
        self.cfg, self.H, self.eig = cfg, H, eig
        self.H_shift = shift_operator(H, cfg.delta)
        solver = cfg.exact_solver
        if solver == "auto":
            solver = "eigenbasis" if eig is not None else "least_squares"
        self.solver = solver
        self.shifted_eig = None if eig is None else eig.shifted(cfg.delta)
        self.L = H.length

    def prepare(self, state):
        return np.asarray(state)

    def step(self, psi, d_tau):
        new = exact.siite_step_exact(self.H_shift, psi, d_tau, self.solver, self.shifted_eig)
        return new, exact.hs_distance(self.H_shift, new * self._scale(psi, new, d_tau), psi, d_tau)

    def _scale(self, psi, new, d_tau):
        a = exact.apply_operator(self.H_shift, new)
        b = exact.apply_operator(self.H_shift, psi) - d_tau * psi
        return float(np.vdot(a, b).real / np.vdot(a, a).real)

    def measure(self, psi):
        E = exact.energy(self.H, psi)
        sigma = exact.variance(self.H, psi)
        ent = [exact.entropy_statevector(psi, c) for c in range(1, self.L)]
        ranks = [int(np.sum(np.linalg.svd(psi.reshape(2**c, -1), compute_uv=False) > 1e-12))
                 for c in range(1, self.L)]
        return E, sigma, max(ranks), float(np.mean(ent)), ent[self.L // 2 - 1]

    def statevector(self, psi):
        return psi

    def can_grow(self, psi):
        return False

    def grow(self, psi, seed):
        return psi

    def save(self, psi, directory, tau):
        return str(exact.save_statevector(psi, Path(directory) / "final_state", tag=f"tau={tau!r}"))


class _MpsBackend:
    def __init__(self, cfg, H, eig):
        self.cfg, self.H, self.eig = cfg, H, eig
        self.H_mpo = to_mpo(H)
        self.A = to_mpo(shift_operator(H, cfg.delta))
        self.L = H.length
        self.rng = np.random.default_rng(cfg.seed)

    def prepare(self, state):
        if isinstance(state, Mps):
            return state.copy().canonicalize(0).normalize()
        return Mps.from_statevector(np.asarray(state)).canonicalize(0).normalize()

    def step(self, psi, d_tau):
        mode = self.cfg.update_mode
        return siite_sweep(psi, self.A, d_tau, mode, rng=self.rng, fraction=self.cfg.stochastic_fraction)

    def measure(self, psi):
        E = expectation(psi, self.H_mpo)
        sigma = variance_mps(psi, self.H_mpo, E)
        _, mean, central = entropy_profile(psi)
        return E, sigma, psi.chi_max, mean, central

    def statevector(self, psi):
        return psi.to_statevector()

    def can_grow(self, psi):
        caps = max_bond_dims(self.L)
        if self.cfg.chi_max is not None:
            caps = [min(c, self.cfg.chi_max) for c in caps]
        return any(b < c for b, c in zip(psi.bond_dims, caps))

    def grow(self, psi, seed):
        if self.cfg.growth_strategy == "random":
            return grow_bond_random(psi, seed, eps=self.cfg.growth_eps)
        return grow_bond_subspace(psi, self.A, a=self.cfg.growth_a,
                                  increment=self.cfg.growth_increment, chi_max=self.cfg.chi_max)

    def save(self, psi, directory, tau):
        return str(psi.save(Path(directory) / "checkpoint", tau=tau))


def warm_start(cfg: RunConfig, H: OperatorTerms) -> Mps:
    """Ground state of ``(H - delta)^2`` at bond dimension ``chi0``."""
    A = to_mpo(shift_operator(H, cfg.delta))
    return folded_ground_state(A, cfg.chi0, sweeps=cfg.warm_sweeps, seed=cfg.seed)


def run_trajectory(cfg: RunConfig, *, eig: exact.EigenSystem | None = None, initial_state=None,
                   out_dir=None, callback: Callable[[StepRecord, object], None] | None = None) -> TrajectoryRecord:
    """Evolve from the warm start until the variance (or fidelity) target or ``max_steps``.

    Args:
        cfg: run settings.
        eig: eigensystem of the Hamiltonian; computed when fidelity is wanted
            and ``L <= 14``.
        initial_state: replaces the folded warm start (``Mps`` or statevector).
        out_dir: if given, the final state is checkpointed there.
        callback: called as ``callback(record, state)`` after every step.
    """
    cfg.validate()
    t0 = time.perf_counter()
    _, H = build(cfg.hamiltonian)
    L = H.length
    want_f = cfg.record_fidelity and (cfg.fidelity_target is not None or eig is not None)
    if want_f and eig is None and L <= FIDELITY_MAX_SITES:
        eig = exact.diagonalize(H)
    if L > FIDELITY_MAX_SITES:
        eig = None
    backend = (_ExactBackend if cfg.backend == "exact" else _MpsBackend)(cfg, H, eig)

    if initial_state is None:
        warm = warm_start(cfg, H)
        initial_state = warm if cfg.backend == "mps" else warm.to_statevector()
    psi = backend.prepare(initial_state)

    def fidelity(state):
        if eig is None:
            return None, None
        return exact.max_fidelity(backend.statevector(state), eig)

    E, sigma, chi, s_mean, s_mid = backend.measure(psi)
    F, index = fidelity(psi)
    side = choose_sign(E, cfg.delta)
    sign = -side
    steps = [StepRecord(0.0, 0.0, E, sigma, chi, s_mean, s_mid, 0.0, F)]
    if callback:
        callback(steps[-1], psi)
    history: list[float] = []
    tau = 0.0
    rejects = 0
    growth_seed = np.random.SeedSequence(cfg.seed).spawn(1)[0]
    termination = "max_steps"

    def done(sigma, F):
        if sigma < cfg.variance_target:
            return "variance_reached"
        if cfg.fidelity_target is not None and F is not None and F >= cfg.fidelity_target:
            return "fidelity_reached"
        return None

    reason = done(sigma, F)
    n = 0
    while reason is None and n < cfg.max_steps:
        n += 1
        dt = choose_timestep(E, cfg.delta, cfg)
        clamped = floor_engaged(E, cfg.delta, cfg)
        retries = 0
        while True:
            try:
                cand, D = backend.step(psi, sign * dt)
                c_E, c_sigma, c_chi, c_mean, c_mid = backend.measure(cand)
                ok = accept_update(c_sigma, sigma, cfg)
            except SiiteError as exc:
                log.warning("step failed at tau=%g: %s", tau, exc)
                ok, D = False, float("nan")
            if ok or dt <= cfg.d_tau_min or retries >= cfg.max_retries:
                break
            retries += 1
            dt = max(dt / 2.0, cfg.d_tau_min)
        grow = False
        if not ok and not backend.can_grow(psi) and np.isfinite(D):
            ok = True  # nothing left to try; take the smallest step
        if ok:
            history.append(sigma)
            psi, E, sigma, chi, s_mean, s_mid = cand, c_E, c_sigma, c_chi, c_mean, c_mid
            tau += dt
            rejects = 0
        else:
            rejects += 1
            grow = True
        if backend.can_grow(psi) and (
            grow or growth_trigger(history, sigma, rejects, cfg) or stalled(history, sigma, cfg)
        ):
            psi = backend.grow(psi, growth_seed.spawn(1)[0])
            E, sigma, chi, s_mean, s_mid = backend.measure(psi)
            history.clear()
            rejects = 0
            grow = True
        else:
            grow = False
        F, index = fidelity(psi)
        steps.append(StepRecord(tau, sign * dt, E, sigma, chi, s_mean, s_mid, D, F, ok, grow, clamped, retries))
        if callback:
            callback(steps[-1], psi)
        reason = done(sigma, F)
        if reason is None and _plateau(steps, cfg):
            reason = "restart_advised"
    termination = reason or "max_steps"
    rec = TrajectoryRecord(cfg, steps, termination, psi, None, side, 0.0, index)
    if out_dir is not None:
        rec.final_state_ref = backend.save(psi, out_dir, tau)
    rec.wall_time = time.perf_counter() - t0
    return rec


def _plateau(steps: list[StepRecord], cfg: RunConfig) -> bool:
    """Variance stuck just above target: typical of a near-degenerate superposition."""
    w = cfg.restart_window
    accepted = [s for s in steps[1:] if s.accepted]
    if len(accepted) < w:
        return False
    window = accepted[-w:]
    sig = np.array([s.sigma for s in window])
    if not np.all((sig >= cfg.variance_target) & (sig < 10 * cfg.variance_target)):
        return False
    if sig[-1] < 0.5 * sig[0]:
        return False
    if any(s.bond_growth for s in window):
        return False
    fids = [s.fidelity for s in window if s.fidelity is not None]
    if fids and cfg.fidelity_target is not None and max(fids) >= cfg.fidelity_target:
        return False
    return True


# -- ensembles -------------------------------------------------------------------------------------


@dataclass
class EnsembleRow:
    W: float
    seed: int
    termination: str
    fidelity: float | None
    sigma: float
    chi: int
    S_mean: float
    S_central: float
    E: float
    dE: float | None
    steps: int
    gs_S_mean: float | None
    gs_energy: float | None
    relaunched: bool = False
    error: str | None = None


@dataclass
class EnsembleSummary:
    rows: list[EnsembleRow]
    aggregate: dict = field(default_factory=dict)


SUMMARY_COLUMNS = [f.name for f in dataclasses.fields(EnsembleRow)]


def _seeded(base: RunConfig, seed: int, warm_seed: int) -> RunConfig:
    spec = dataclasses.replace(base.hamiltonian, seed=seed)
    return dataclasses.replace(base, hamiltonian=spec, seed=warm_seed)


def _one_seed(args) -> EnsembleRow:
    base, seed, matched_ground, relaunch, out_dir = args
    spec = dataclasses.replace(base.hamiltonian, seed=seed)
    W = spec.W
    try:
        _, H = build(spec)
        eig = exact.diagonalize(H) if H.length <= FIDELITY_MAX_SITES else None
        cfg = _seeded(base, seed, seed)
        run_dir = None if out_dir is None else Path(out_dir) / f"W{W:g}_seed{seed}"
        rec = run_trajectory(cfg, eig=eig, out_dir=run_dir)
        relaunched = False
        if rec.termination == "restart_advised" and relaunch:
            cfg = _seeded(base, seed, seed + 1_000_003)
            rec = run_trajectory(cfg, eig=eig, out_dir=run_dir)
            relaunched = True
        if run_dir is not None:
            write_trajectory(rec, run_dir)
        last = rec.final
        dE = None
        if eig is not None:
            dE = (last.E - cfg.delta) / (eig.e_max - eig.e_min)
        gs_S = gs_E = None
        if matched_ground:
            gs, gs_E = variational_ground_state(to_mpo(H), max(last.chi_max, 1), seed=seed)
            gs_S = entropy_profile(gs)[1]
        return EnsembleRow(W, seed, rec.termination, last.fidelity, last.sigma, last.chi_max,
                           last.mean_entropy, last.central_entropy, last.E, dE, len(rec.steps) - 1,
                           gs_S, gs_E, relaunched)
    except SiiteError as exc:
        nan = float("nan")
        return EnsembleRow(W, seed, "error", None, nan, 0, nan, nan, nan, None, 0, None, None,
                           error=str(exc))


def run_ensemble(base: RunConfig, seeds, parallelism: int = 1, *, matched_ground: bool = True,
                 relaunch: bool = True, out_dir=None) -> EnsembleSummary:
    """Independent trajectories over disorder seeds, with disorder means and spreads.

    Each seed sets both the disorder draw and the warm-start generator. A run
    that ends in ``restart_advised`` is relaunched once from a different warm
    start when ``relaunch`` is true.
    """
    seeds = sorted(int(s) for s in seeds)
    if not seeds:
        raise InvalidSpecError("seed list is empty")
    base.validate()
    jobs = [(base, s, matched_ground, relaunch, out_dir) for s in seeds]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_one_seed, jobs))
    else:
        rows = [_one_seed(j) for j in jobs]
    return EnsembleSummary(rows, aggregate_rows(rows))


def aggregate_rows(rows: list[EnsembleRow]) -> dict:
    ok = [r for r in rows if r.error is None]

    def stats(values):
        vals = np.array([v for v in values if v is not None], dtype=float)
        if vals.size == 0:
            return None, None
        return float(vals.mean()), float(vals.std())

    agg = {"n": len(rows), "n_ok": len(ok)}
    for name, values in (
        ("infidelity", [None if r.fidelity is None else 1.0 - r.fidelity for r in ok]),
        ("sigma", [r.sigma for r in ok]),
        ("chi", [r.chi for r in ok]),
        ("S_mean", [r.S_mean for r in ok]),
        ("gs_S_mean", [r.gs_S_mean for r in ok]),
    ):
        agg[f"{name}_mean"], agg[f"{name}_std"] = stats(values)
    return agg


# -- persistence ------------------------------------------------------------------------------------


def fmt(value) -> str:
    """Full-precision text for CSV cells."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_steps(steps: list[StepRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for s in steps:
            w.writerow([fmt(v) for v in s.row()])
    return path


def read_steps(path) -> list[StepRecord]:
    def num(x, kind=float):
        return None if x == "" else kind(x)

    out = []
    with Path(path).open() as fh:
        for r in csv.DictReader(fh):
            out.append(StepRecord(
                float(r["tau"]), float(r["d_tau"]), float(r["E"]), float(r["sigma"]), int(r["chi_max"]),
                float(r["S_mean"]), float(r["S_central"]), float(r["D"]), num(r["fidelity"]),
                r["accepted"] == "1", r["bond_growth"] == "1", r.get("floor_clamped") == "1",
                int(r.get("retries") or 0),
            ))
    return out


def write_trajectory(rec: TrajectoryRecord, directory) -> Path:
    """``steps.csv`` plus ``run.json`` (config echo, termination, timing, checkpoint)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_steps(rec.steps, directory / "steps.csv")
    doc = {
        "schema_version": 1,
        "config": rec.config.to_dict(),
        "termination": rec.termination,
        "wall_time": rec.wall_time,
        "checkpoint": rec.final_state_ref,
        "sign": rec.sign,
        "eigen_index": rec.eigen_index,
        "steps": len(rec.steps) - 1,
    }
    (directory / "run.json").write_text(json.dumps(doc, indent=2))
    return directory


def write_summary(summary: EnsembleSummary, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = sorted(summary.rows, key=lambda r: (r.W, r.seed))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([fmt(getattr(r, c)) for c in SUMMARY_COLUMNS])
    return path


def check_timesteps(steps: list[StepRecord], delta: float, cfg: RunConfig, tol: float = 1e-12) -> list[str]:
    """Violations of the timestep policy in a recorded trajectory (empty when clean).

    Each step is checked against the energy of the state it started from.
    """
    problems = []
    for prev, s in zip(steps, steps[1:]):
        dt = abs(s.d_tau)
        gap = abs(prev.E - delta)
        expect_floor = cfg.d_tau_safety * 2.0 * gap < cfg.d_tau_min
        if expect_floor != s.floor_clamped:
            problems.append(f"tau={s.tau}: floor flag {s.floor_clamped} but expected {expect_floor}")
        if dt < cfg.d_tau_min * (1 - tol) or dt > cfg.d_tau_max * (1 + tol):
            problems.append(f"tau={s.tau}: |d_tau|={dt} outside [{cfg.d_tau_min}, {cfg.d_tau_max}]")
        if not s.floor_clamped and dt > 2.0 * gap * (1 + tol):
            problems.append(f"tau={s.tau}: |d_tau|={dt} exceeds 2|E-delta|={2 * gap}")
    return problems


def variance_trend_slopes(steps: list[StepRecord], window: int = 20) -> np.ndarray:
    """Least-squares slopes of ``sigma`` against step count over sliding accepted-step windows.

    Only steps after the first bond growth count. Empty if there are too few.
    """
    first = next((k for k, s in enumerate(steps) if s.bond_growth), None)
    if first is None:
        return np.zeros(0)
    sig = np.array([s.sigma for s in steps[first:] if s.accepted])
    if sig.size < window:
        return np.zeros(0)
    x = np.arange(window) - (window - 1) / 2.0
    frames = np.lib.stride_tricks.sliding_window_view(sig, window)
    return frames @ x / np.sum(x * x)
