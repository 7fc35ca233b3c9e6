import functools

import numpy as np
import pytest

from marssl.datagen import TwoClusterConfig, gen_two_cluster_mar, two_cluster_test_set
from marssl.ssl import fit

ACCEPTANCE_LINES = []


def report(number, name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def two_cluster_run(seed: int, n_test: int = 10_000):
    """Fitted models for the three methods on the default two-cluster scenario."""
    cfg = TwoClusterConfig(n_labeled=500, n_unlabeled=5000, seed=seed)
    d1, d0, truth = gen_two_cluster_mar(cfg)
    X, y, in_b = two_cluster_test_set(cfg, n_test, seed + 1000)
    models = {m: fit(m, d1, d0, seed=seed) for m in ("mar", "mcar", "supervised")}
    return cfg, d1, d0, truth, X, y, in_b, models


@pytest.fixture(scope="session")
def fig1():
    return two_cluster_run(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
