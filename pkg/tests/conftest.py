import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from itr_eval.core import ExperimentDataset, PotentialOutcomeTable  # noqa: E402


def random_table(rng, n, p=2, scale=3.0):
    x = rng.standard_normal((n, p))
    y1 = np.round(rng.normal(1.0, scale, n), 3)
    y0 = np.round(rng.normal(0.0, scale, n), 3)
    return PotentialOutcomeTable(x, y1, y0)


def dataset(y, t, x=None):
    y = np.asarray(y, dtype=float)
    x = np.zeros((y.size, 1)) if x is None else np.asarray(x, dtype=float)
    return ExperimentDataset(x, np.asarray(t, dtype=float), y)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report: criterion -> list of (part, passed, detail)
ACCEPTANCE = {}


def record(criterion: int, part: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        tr.write_line(f"{status} criterion {c}: " + "; ".join(f"{p} {'ok' if ok else 'FAILED'}" for p, ok, _ in parts))
        for p, ok, detail in parts:
            if detail:
                tr.write_line(f"    {p}: {detail}")
