import os
import re

import pytest
from hypothesis import HealthCheck, settings

from mcsdispatch.scenario import load_scenario

settings.register_profile("repo", derandomize=True, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def casestudy():
    return load_scenario("casestudy")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(re.search(r"criterion (\d+)", s).group(1))):
        terminalreporter.write_line(line)
