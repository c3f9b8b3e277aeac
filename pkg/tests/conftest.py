from __future__ import annotations

import numpy as np
import pytest

from siite.models import HamiltonianSpec, build


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(rng, n, complex_=True):
    v = rng.standard_normal(2**n)
    if complex_:
        v = v + 1j * rng.standard_normal(2**n)
    return v / np.linalg.norm(v)


def heisenberg(L, W=2.0, seed=0):
    _, H = build(HamiltonianSpec("heisenberg", L, W=W, seed=seed))
    return H


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
