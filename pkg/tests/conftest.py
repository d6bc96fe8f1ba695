import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vresport.ingest import build_demandgen, load_dataset  # noqa: E402
from vresport.synthetic import make_dataset  # noqa: E402

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "src" / "vresport" / "data" / "fixture"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(n, passed, detail):
    ACCEPTANCE[n] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def bundled():
    """The 3-plant, 120-day fixture shipped with the package."""
    ds = load_dataset(FIXTURE_DIR / "plants.csv", FIXTURE_DIR / "outputs.csv",
                      FIXTURE_DIR / "demand.csv", window_days=3)
    return ds, build_demandgen(ds.demand)


@pytest.fixture(scope="session")
def year_fixture():
    """One synthetic year, 4 wind and 2 PV plants."""
    ds, raw = make_dataset(n_wind=4, n_pv=2, n_days=365, seed=3)
    return ds, build_demandgen(ds.demand)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
