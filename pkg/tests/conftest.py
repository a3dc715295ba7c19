import numpy as np
import pytest

from ipc_uplift.data_model import UpliftDataset

# (treatment, x, conversion, profit) for the six-unit A/B example
SIX_ROW = [
    (0, 1.0, 0, 0.0),
    (0, 1.0, 0, 0.0),
    (0, 1.0, 1, 10.0),
    (1, 1.0, 0, 0.0),
    (1, 1.0, 1, 8.0),
    (1, 1.0, 1, 8.0),
]

SIX_ROW_CSV = (
    "feature_0,treatment,conversion,profit,propensity\n"
    + "".join(f"{x},{t},{c},{p},0.5\n" for t, x, c, p in SIX_ROW)
)


def six_row(reps: int = 1) -> UpliftDataset:
    t, x, c, p = (np.array(col, dtype=float) for col in zip(*SIX_ROW))
    return UpliftDataset.from_arrays(
        np.tile(x, reps)[:, None], np.tile(t, reps), np.tile(c, reps),
        np.tile(p, reps), 0.5)


@pytest.fixture
def six_row_data():
    return six_row()


@pytest.fixture(scope="session")
def six_row_x1000():
    return six_row(1000)


@pytest.fixture
def six_row_csv(tmp_path):
    path = tmp_path / "six_row.csv"
    path.write_text(SIX_ROW_CSV)
    return path


def random_dataset(n, p=3, seed=0, conv_rate=0.3, propensity=0.5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    t = (rng.random(n) < propensity).astype(int)
    c = (rng.random(n) < conv_rate).astype(int)
    profit = np.where(c == 1, np.exp(rng.normal(size=n)) * (1 + X[:, 0] ** 2), 0.0)
    return UpliftDataset.from_arrays(X, t, c, profit, propensity)


# -- acceptance summary --------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def check(name: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
