from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone

from siite import SIITE
from siite.errors import ConfigError
from siite.estimator import check_statevector
from siite.models import HamiltonianSpec


SPEC = {"model": "heisenberg", "length": 6, "W": 4.0, "seed": 2}


def test_params_round_trip():
    est = SIITE(0.1, chi0=3, variance_target=1e-7)
    params = est.get_params()
    assert params["delta"] == 0.1 and params["chi0"] == 3
    copy = clone(est)
    assert copy.get_params() == params
    est.set_params(update_mode="parallel")
    assert est.update_mode == "parallel"


@pytest.mark.parametrize("kwargs,field", [
    ({"backend": "gpu"}, "backend"),
    ({"chi0": 0}, "chi0"),
    ({"d_tau_safety": 1.0}, "d_tau_safety"),
    ({"variance_target": -1.0}, "variance_target"),
    ({"chi0": 2.5}, "chi0"),
])
def test_bad_params_name_the_field(kwargs, field):
    with pytest.raises(ConfigError) as err:
        SIITE(**kwargs).fit(SPEC)
    assert err.value.field == field


def test_fit_sets_attributes():
    est = SIITE(backend="exact", variance_target=1e-8, fidelity_target=0.999).fit(SPEC)
    assert est.termination_ in ("variance_reached", "fidelity_reached")
    assert est.variance_ < 1e-8 or est.fidelity_ >= 0.999
    assert est.score() == pytest.approx(-np.log10(est.variance_))
    assert est.n_steps_ == len(est.trajectory_.steps) - 1
    est2 = SIITE(variance_target=1e-8).fit(HamiltonianSpec.from_dict(SPEC))
    assert est2.state_.length == 6


def test_unfitted_score_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        SIITE().score()


def test_check_statevector():
    psi = np.ones(4) / 2
    assert check_statevector(psi, 2) is not None
    with pytest.raises(ConfigError):
        check_statevector(np.ones(3) / np.sqrt(3))
    with pytest.raises(ConfigError):
        check_statevector(np.ones(4))
    with pytest.raises(ConfigError):
        check_statevector(psi, 3)
