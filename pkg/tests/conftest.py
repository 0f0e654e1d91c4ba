from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from laftk import dcr, layerops, transducers

settings.register_profile("laf", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("laf")

FIXTURES = Path(__file__).parent / "fixtures"
FORMAT_EXT = {"inline": "txt", "columnar": "tsv", "brackets": "mrg"}


def legacy_fixtures(fmt):
    return sorted((FIXTURES / fmt).glob(f"*.{FORMAT_EXT[fmt]}"))


def dump_fixtures():
    return sorted((FIXTURES / "dumps").glob("*.dump"))


@pytest.fixture(scope="session")
def seed():
    return dcr.load_seed()


@pytest.fixture(scope="session")
def mini(seed):
    return transducers.load_example_dcs(reg=seed)


@pytest.fixture(scope="session")
def mini_reg(seed, mini):
    return mini.registry(seed)


@pytest.fixture(scope="session")
def constraints():
    return layerops.constraints_load(transducers.load_example_constraints())


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
