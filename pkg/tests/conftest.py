import warnings

import numpy as np
import pytest

from specsense.emitter import CM1_TO_RADPS, R3_CM1, R4_CM1, build_vibronic_dimer
from specsense.hierarchy import HierarchySolver, SensorSpec
from specsense.oracle import build_joint, oracle_g2_tau
from specsense.timecorr import conditional_state

GAMMA = 1 / 4.8
EPS = 1e-3 * CM1_TO_RADPS
TAU_GRID = np.linspace(-20.0, 20.0, 201)

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def dimer():
    return build_vibronic_dimer()


@pytest.fixture(scope="session")
def solver(dimer):
    return HierarchySolver(dimer)


@pytest.fixture(scope="session")
def s3():
    return SensorSpec.from_cm1(R3_CM1, GAMMA)


@pytest.fixture(scope="session")
def s4():
    return SensorSpec.from_cm1(R4_CM1, GAMMA)


@pytest.fixture(scope="session")
def aux43(solver, s4, s3):
    return solver.solve([s4, s3])


@pytest.fixture(scope="session")
def blocks43(aux43):
    return conditional_state(aux43, 1)


@pytest.fixture(scope="session")
def joint43(dimer, s4, s3):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        return build_joint(dimer, [s4, s3], EPS)


@pytest.fixture(scope="session")
def oracle_curve43(joint43):
    return oracle_g2_tau(joint43, TAU_GRID)
