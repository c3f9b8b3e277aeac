"""scikit-learn style front end.

:class:`SIITE` exposes the run settings as constructor parameters so that
``get_params``/``set_params``/``clone`` work, and ``fit`` takes a Hamiltonian
(a :class:`~siite.models.HamiltonianSpec` or a dict) in place of a data matrix.
Fitted attributes carry a trailing underscore.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .engine import RunConfig, run_trajectory
from .errors import ConfigError
from .models import HamiltonianSpec


def check_scalar_range(value, name, *, low=None, high=None, include_low=True, include_high=True,
                       allow_none=False, kind=numbers.Real):
    """Validate a scalar parameter and return it."""
    if value is None and allow_none:
        return value
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(name, f"expected {kind.__name__}, got {type(value).__name__}")
    if low is not None and (value < low or (value == low and not include_low)):
        raise ConfigError(name, f"must be {'>=' if include_low else '>'} {low}")
    if high is not None and (value > high or (value == high and not include_high)):
        raise ConfigError(name, f"must be {'<=' if include_high else '<'} {high}")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ConfigError(name, f"must be one of {sorted(choices)}")
    return value


def check_statevector(psi, length=None, *, tol=1e-10):
    """Finite 1-D array of size ``2**L`` with unit norm."""
    arr = np.asarray(psi)
    if arr.ndim != 1 or arr.size & (arr.size - 1) or arr.size < 2:
        raise ConfigError("state", "must be a 1-D array whose size is a power of two")
    if length is not None and arr.size != 2**length:
        raise ConfigError("state", f"size {arr.size} does not match L={length}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError("state", "contains non-finite amplitudes")
    if abs(np.linalg.norm(arr) - 1.0) > tol:
        raise ConfigError("state", "is not normalised")
    return arr


def check_hamiltonian(spec) -> HamiltonianSpec:
    if isinstance(spec, HamiltonianSpec):
        return spec
    if isinstance(spec, dict):
        return HamiltonianSpec.from_dict(spec)
    raise ConfigError("hamiltonian", "expected a HamiltonianSpec or a dict")


class SIITE(BaseEstimator):
    """Excited-state preparation at target energy ``delta``.

    Parameters mirror :class:`~siite.engine.RunConfig`; see there for meaning.

    Attributes:
        state_: final state (``Mps`` or statevector).
        energy_, variance_, fidelity_: diagnostics of the final state.
        trajectory_: the full :class:`~siite.engine.TrajectoryRecord`.
        termination_: why the run stopped.
    """

    def __init__(self, delta=0.0, *, backend="mps", chi0=4, d_tau_min=1e-3, d_tau_safety=0.1,
                 d_tau_max=0.5, variance_target=1e-6, fidelity_target=None, max_steps=1000,
                 accept_factor=10.0, growth_window=5, growth_strategy="subspace",
                 update_mode="sequential", chi_max=None, random_state=0):
        self.delta = delta
        self.backend = backend
        self.chi0 = chi0
        self.d_tau_min = d_tau_min
        self.d_tau_safety = d_tau_safety
        self.d_tau_max = d_tau_max
        self.variance_target = variance_target
        self.fidelity_target = fidelity_target
        self.max_steps = max_steps
        self.accept_factor = accept_factor
        self.growth_window = growth_window
        self.growth_strategy = growth_strategy
        self.update_mode = update_mode
        self.chi_max = chi_max
        self.random_state = random_state

    def _validate_params(self):
        check_scalar_range(self.delta, "delta")
        check_choice(self.backend, "backend", {"exact", "mps"})
        check_scalar_range(self.chi0, "chi0", low=1, kind=numbers.Integral)
        check_scalar_range(self.d_tau_min, "d_tau_min", low=0, include_low=False)
        check_scalar_range(self.d_tau_max, "d_tau_max", low=self.d_tau_min)
        check_scalar_range(self.d_tau_safety, "d_tau_safety", low=0, high=1, include_low=False,
                           include_high=False)
        check_scalar_range(self.variance_target, "variance_target", low=0, include_low=False)
        check_scalar_range(self.fidelity_target, "fidelity_target", low=0, high=1, include_low=False,
                           allow_none=True)
        check_scalar_range(self.max_steps, "max_steps", low=0, kind=numbers.Integral)
        check_choice(self.growth_strategy, "growth_strategy", {"subspace", "random"})
        check_choice(self.update_mode, "update_mode",
                     {"sequential", "parallel", "stochastic", "stochastic-auto"})
        check_scalar_range(self.chi_max, "chi_max", low=self.chi0, allow_none=True,
                           kind=numbers.Integral)
        check_scalar_range(self.random_state, "random_state", kind=numbers.Integral)

    def to_config(self, hamiltonian) -> RunConfig:
        self._validate_params()
        return RunConfig(
            hamiltonian=check_hamiltonian(hamiltonian), delta=self.delta, backend=self.backend,
            chi0=self.chi0, d_tau_min=self.d_tau_min, d_tau_safety=self.d_tau_safety,
            d_tau_max=self.d_tau_max, variance_target=self.variance_target,
            fidelity_target=self.fidelity_target, max_steps=self.max_steps,
            accept_factor=self.accept_factor, growth_window=self.growth_window,
            growth_strategy=self.growth_strategy, update_mode=self.update_mode,
            chi_max=self.chi_max, seed=self.random_state,
        ).validate()

    def fit(self, hamiltonian, y=None, *, eig=None, initial_state=None):
        """Run one trajectory for ``hamiltonian``; ``y`` is ignored."""
        cfg = self.to_config(hamiltonian)
        rec = run_trajectory(cfg, eig=eig, initial_state=initial_state)
        last = rec.final
        self.trajectory_ = rec
        self.state_ = rec.final_state
        self.energy_ = last.E
        self.variance_ = last.sigma
        self.fidelity_ = last.fidelity
        self.chi_ = last.chi_max
        self.termination_ = rec.termination
        self.n_steps_ = len(rec.steps) - 1
        return self

    def score(self, hamiltonian=None, y=None) -> float:
        """Negative log10 variance of the fitted state (higher is better)."""
        check_is_fitted(self, "variance_")
        return float(-np.log10(max(self.variance_, 1e-300)))
