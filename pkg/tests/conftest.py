import functools

import numpy as np
import pytest

from rodeo.hamiltonians import (
    HeisenbergParams,
    alternating_bits,
    build_heisenberg,
    build_product_state,
    build_staggered_field,
)
from rodeo.spectral import eigendecompose, initial_weights

ACCEPTANCE = {}
CRITERIA = 12


@functools.lru_cache(maxsize=None)
def _heisenberg():
    H = build_heisenberg(HeisenbergParams(10, 1.0, 3.0))
    psi = build_product_state(alternating_bits(10))
    eig = eigendecompose(H)
    return H, psi, eig, initial_weights(psi, eig), build_staggered_field(10)


@pytest.fixture(scope="session")
def heisenberg():
    """(H, psi, eig, weights, H_I) for the 10-site chain with J=1, h=3."""
    return _heisenberg()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def acceptance():
    def record(number, passed, detail=""):
        ACCEPTANCE[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, CRITERIA + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
