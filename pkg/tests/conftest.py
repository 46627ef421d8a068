from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from fedida import data

ROOT = Path(__file__).resolve().parents[1]
ADULT_CSV = ROOT / "data" / "adult.csv"
ADULT_SCHEMA = ROOT / "data" / "adult_schema.json"
CONFIGS = ROOT / "configs"

requires_adult = pytest.mark.skipif(not ADULT_CSV.exists(), reason="run scripts/fetch_adult.py first")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def adult():
    if not ADULT_CSV.exists():
        pytest.skip("run scripts/fetch_adult.py first")
    return data.load_csv(ADULT_CSV, data.load_schema(ADULT_SCHEMA), standardize=False)


def make_synthetic(n=2000, seed=0, **kw) -> data.TabularDataset:
    spec = dict(prevalences=(0.55, 0.25, 0.15, 0.05), coefficients=(1.0, -0.8, 0.5), n=n, seed=seed,
                logit_shift=(0.8, 0.0, -0.5, -1.2))
    spec.update(kw)
    return data.generate_synthetic(data.SyntheticSpec(**spec))


@pytest.fixture
def synthetic():
    return make_synthetic()


ACCEPTANCE_LINES: list[str] = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    """Log one acceptance verdict; the lines are echoed in the terminal summary."""
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
