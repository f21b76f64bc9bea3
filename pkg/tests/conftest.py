import os
import sys

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in mod.CRITERIA.items():
        if n in mod.RESULTS:
            ok, detail = mod.RESULTS[n]
            terminalreporter.write_line(f"ACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'} {name}: {detail}")
        else:
            terminalreporter.write_line(f"ACCEPTANCE {n:2d} FAIL {name}: not run or errored before a verdict")
