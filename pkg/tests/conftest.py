import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from planckotoc import models, otoc  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def kr47():
    spec = models.KickedRotorSpec(K=4.7, L=30)
    U = models.kicked_rotor_floquet(spec)
    basis = models.kicked_rotor_basis(spec)
    return spec, U, basis, otoc.operator_set(basis)


@pytest.fixture(scope="session")
def kr47_sweep(kr47):
    """All-cell (Q, P) OTOC at every kick up to 70."""
    spec, U, basis, ops = kr47
    return otoc.otoc_sweep(U, basis, 70, ops["Q"], ops["P"], pair=("Q", "P"))


@pytest.fixture(scope="session")
def lmg_small():
    spec = models.LmgSpec(N=8)
    return spec, models.lmg_hamiltonian(spec), models.lmg_basis(spec)
