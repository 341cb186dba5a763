import pytest

from isospec.scenario import parse_config, run_scenario

# (criterion number, title, passed, detail) recorded by the acceptance module
ACCEPTANCE = []


@pytest.fixture(scope="session")
def default_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("cache")


@pytest.fixture(scope="session")
def default_run(default_cache):
    """The full default scenario, run once with a cold cache."""
    return run_scenario(parse_config(""), cache_dir=default_cache)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
