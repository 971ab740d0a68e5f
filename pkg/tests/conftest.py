import pytest
from hypothesis import settings

from scclab.presentations import parse_group_spec

from models import F2_TEXT, P3_TEXT, Z2_TEXT, ball

settings.register_profile("scclab", max_examples=60, deadline=None)
settings.load_profile("scclab")


@pytest.fixture(scope="session")
def F2():
    return parse_group_spec(F2_TEXT)


@pytest.fixture(scope="session")
def Z2():
    return parse_group_spec(Z2_TEXT)


@pytest.fixture(scope="session")
def P3():
    return parse_group_spec(P3_TEXT)


@pytest.fixture(scope="session")
def f2_ball():
    return ball(F2_TEXT, 8)


@pytest.fixture(scope="session")
def z2_ball():
    return ball(Z2_TEXT, 8)


@pytest.fixture(scope="session")
def p3_ball():
    return ball(P3_TEXT, 6)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
