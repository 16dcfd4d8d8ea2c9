import pytest
from hypothesis import settings

from cluster import Cluster

settings.register_profile("ci", deadline=None)
settings.load_profile("ci")


@pytest.fixture
def cluster():
    return Cluster()


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
