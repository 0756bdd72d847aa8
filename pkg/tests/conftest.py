import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

SUMMARY = []


def pytest_terminal_summary(terminalreporter):
    if SUMMARY:
        terminalreporter.section("acceptance")
        for line in sorted(SUMMARY, key=lambda s: int(s.split(".")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cubic():
    from layerfluct.reaction import make_cubic
    return make_cubic()


@pytest.fixture(scope="session")
def wave(cubic):
    from layerfluct.profile import solve_standing_wave
    return solve_standing_wave(cubic)


@pytest.fixture(scope="session")
def profile100(cubic):
    from layerfluct.profile import solve_periodic_profile
    return solve_periodic_profile(cubic, 100.0)
