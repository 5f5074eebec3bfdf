import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from extentlab.core import GridSpec, SeasonConfig, Site  # noqa: E402
from extentlab.generate import ReplicateEnsemble  # noqa: E402

SHORT_SEASON = SeasonConfig(start_year=2000, start=(6, 1), end=(6, 12), jja_start=(6, 2), jja_end=(6, 11))


def three_sites():
    return [Site("A", -1.0, 41.0, 200.0), Site("B", -0.6, 41.3, 650.0), Site("C", -0.2, 41.1, 1200.0)]


def toy_grid(S, rng=None, regions=True):
    rng = rng or np.random.default_rng(0)
    pts = [Site(f"g{i}", float(rng.uniform(-1, 0)), float(rng.uniform(41, 42)), float(rng.uniform(0, 1000)))
           for i in range(S)]
    area = rng.uniform(1, 16, S)
    labels = {"R1": np.arange(S) % 2 == 0, "R2": np.arange(S) % 2 == 1} if regions else {}
    return GridSpec(pts, area, labels)


def toy_ensemble(Y, years=None, season=SHORT_SEASON, grid=None, rng=None):
    """Wrap a float array ``(B, S, T, L)`` as an ensemble."""
    Y = np.asarray(Y, dtype=np.float32)
    if years is None:
        years = range(1, Y.shape[2] + 1)
    if grid is None:
        grid = toy_grid(Y.shape[1], rng)
    return ReplicateEnsemble(Y, grid, tuple(years), season)


@pytest.fixture
def short_season():
    return SHORT_SEASON


@pytest.fixture
def sites3():
    return three_sites()


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(number: int, name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {name}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
