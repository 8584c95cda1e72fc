import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"


def _corpus_module():
    sys.path.insert(0, str(SCRIPTS))
    try:
        import make_desk_corpus
    finally:
        sys.path.pop(0)
    return make_desk_corpus


@pytest.fixture(scope="session")
def desk5(tmp_path_factory):
    mod = _corpus_module()
    out = tmp_path_factory.mktemp("desk5")
    mod.export(out, mod.DESK)
    return out


@pytest.fixture(scope="session")
def desk11(tmp_path_factory):
    mod = _corpus_module()
    out = tmp_path_factory.mktemp("desk11")
    mod.export(out, mod.DESK + mod.EXTRA)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)



# acceptance criteria report one line each; collected here and printed at the end
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
