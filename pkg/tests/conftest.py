import os
import tempfile
from pathlib import Path

# Settings are read when app.config is imported, so point them at a scratch area first
_SCRATCH = Path(tempfile.mkdtemp(prefix="turnover-tests-"))
os.environ.setdefault("TURNOVER_DATABASE_URL", f"sqlite+aiosqlite:///{_SCRATCH / 'test.db'}")
os.environ.setdefault("TURNOVER_DATA_DIR", str(_SCRATCH / "data"))
os.environ.setdefault("TURNOVER_WORKERS", "1")

import pytest  # noqa: E402

from app.services.census import GridSpec, Stage, scan_grid  # noqa: E402
from app.services.charvar import Branch, Case, CharVarPoint, TurnoverSignature, enumerate_selections  # noqa: E402
from app.services.invariants import query_point  # noqa: E402

GOLDEN_DIR = Path(__file__).parent / "golden"

# Window around the origin where the (3,3,4) component lives
SMALL_GRID = GridSpec(0.0, 0.4, 0.0, 0.4, 24, 24)


@pytest.fixture(scope="session")
def sig334() -> TurnoverSignature:
    return TurnoverSignature(3, 3, 4)


@pytest.fixture(scope="session")
def regular_334_scans(sig334):
    """Every regular (selection, branch) of (3,3,4) scanned on the small window"""
    scans = {}
    for sel in enumerate_selections(sig334, Case.REGULAR, lifts=(0, 1, 2)):
        for branch in Branch:
            scans[(sel, branch)] = scan_grid(sel, branch, SMALL_GRID, workers=1)
    return scans


@pytest.fixture(scope="session")
def passing_cells(regular_334_scans):
    found = [(sel, branch, cell)
             for (sel, branch), cells in regular_334_scans.items()
             for cell in cells if cell.stage is Stage.QUADRANGLE_PASS]
    assert found, "(3,3,4) must have quadrangle-passing cells near the origin"
    return found


@pytest.fixture(scope="session")
def passing_query(passing_cells):
    """(selection, branch, cell, PointQuery) at the passing cell with the largest margin"""
    sel, branch, cell = max(passing_cells, key=lambda item: item[2].min_margin)
    return sel, branch, cell, query_point(sel, CharVarPoint(cell.s, cell.t, branch))
