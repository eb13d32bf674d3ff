import numpy as np
import pytest

from gapbif import suites as S
from gapbif.config import load_config
from gapbif.spectral import DiscreteOperator, build_split

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def default_cfg():
    return load_config()


@pytest.fixture(scope="session")
def shifted(default_cfg):
    """Mathieu q = 1 shifted so its first gap is centered on 0."""
    return S.shifted_problem(default_cfg)


@pytest.fixture(scope="session")
def box(shifted):
    pot, _ = shifted
    op = DiscreteOperator(pot, 16, 32)
    return op, build_split(op)


@pytest.fixture(scope="session")
def ctx(default_cfg):
    return S.gap_context(default_cfg)


@pytest.fixture(scope="session")
def wide_ctx(default_cfg):
    return S.gap_context(default_cfg, default_cfg.get("grid", "domain_factor"))


@pytest.fixture(scope="session")
def pure_power(default_cfg):
    return S.build_nonlinearity(default_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")
