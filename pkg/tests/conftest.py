import os
from pathlib import Path

import numpy as np
import pytest

from cfkit.ratings import Interaction, build_matrix

ROOT = Path(__file__).resolve().parents[1]
ML100K = Path(os.environ.get("CFKIT_ML100K", ROOT / "data" / "ml-100k" / "u.data"))
ML1M = Path(os.environ.get("CFKIT_ML1M", ROOT / "data" / "ml-1m" / "ratings.dat"))

# 4 users x 6 items; None marks a missing rating
TABLE2 = {
    1: [1, 5, None, 2, 4, None],
    2: [4, 2, None, 5, 1, 2],
    3: [2, 4, 3, None, None, 5],
    4: [2, 4, None, 5, 1, None],
}


def table2_interactions():
    return [Interaction(u, i + 1, float(r), 0)
            for u, row in TABLE2.items() for i, r in enumerate(row) if r is not None]


@pytest.fixture
def table2():
    return build_matrix(table2_interactions())


def random_matrix(rng, m, n, density=0.5, ensure_rows=True):
    """Random integer ratings; every user and item keeps at least one rating."""
    mask = rng.random((m, n)) < density
    if ensure_rows:
        for u in range(m):
            if not mask[u].any():
                mask[u, rng.integers(n)] = True
        for i in range(n):
            if not mask[:, i].any():
                mask[rng.integers(m), i] = True
    vals = rng.integers(1, 6, size=(m, n)).astype(float)
    inter = [Interaction(u, i, vals[u, i], 0) for u in range(m) for i in range(n) if mask[u, i]]
    return build_matrix(inter)


@pytest.fixture(scope="session")
def ml100k():
    if not ML100K.is_file():
        pytest.skip(f"MovieLens 100K not found at {ML100K} (run scripts/fetch_ml100k.py)")
    from cfkit.ratings import load_matrix
    return load_matrix(ML100K, "ml100k")


def pytest_configure(config):
    config.addinivalue_line("markers", "property: invariant and oracle property checks")
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
