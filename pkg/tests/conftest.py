from importlib import resources
from pathlib import Path

import pytest

from kgplan.sim import load_scenario

DATA = Path(str(resources.files("kgplan.data")))
MAIN = sorted((DATA / "scenarios" / "main").glob("*.toml"))
HIDDEN = sorted((DATA / "scenarios" / "hidden").glob("*.toml"))
COMPLETE = [p for p in MAIN if load_scenario(p).complete()]


def scenario(name):
    for path in MAIN + HIDDEN:
        if path.stem == name:
            return load_scenario(path)
    raise KeyError(name)


@pytest.fixture
def drawer():
    return scenario("drawer_watch_keychain")


@pytest.fixture(scope="session")
def main_suite_path():
    return DATA / "suites" / "main.toml"


@pytest.fixture(scope="session")
def hidden_suite_path():
    return DATA / "suites" / "hidden.toml"


VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
