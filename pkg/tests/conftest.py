from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from playerval import synthetic
from playerval.ingest import load_dataset


@pytest.fixture(scope="session")
def fixture30_path() -> Path:
    return Path(str(resources.files("playerval") / "data" / "fixture30.csv"))


@pytest.fixture(scope="session")
def fixture30(fixture30_path):
    return load_dataset(fixture30_path)


@pytest.fixture(scope="session")
def players300():
    return synthetic.player_dataset(300, n_clubs=20, rng=7)


@pytest.fixture(scope="session")
def nested_data():
    return synthetic.nested_lmm_data(rng=3)


def unique_rows(rng, n, p, levels=None):
    """Random design with pairwise distinct rows; integer-valued when ``levels``."""
    if levels:
        if levels ** p < n:
            raise ValueError("grid too small for n distinct rows")
        cells = rng.choice(levels ** p, size=n, replace=False)
        return np.column_stack(np.unravel_index(cells, (levels,) * p)).astype(float)
    return rng.normal(size=(n, p))


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
