import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mdlab.game import Game  # noqa: E402

ACCEPTANCE_LINES = []


def record(line: str) -> None:
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_game(rng, n_r=None, n_p=None, n_y=None) -> Game:
    n_r = n_r or int(rng.integers(1, 4))
    n_p = n_p or int(rng.integers(1, 4))
    n_y = n_y or int(rng.integers(1, 4))
    return Game(
        states=tuple(f"y{i}" for i in range(n_y)),
        responses=tuple(f"r{i}" for i in range(n_r)),
        policies=tuple(f"p{i}" for i in range(n_p)),
        U=rng.random((n_r, n_p, n_y)),
        V=rng.random((n_r, n_p, n_y)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
