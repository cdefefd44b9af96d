import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def c5_pipeline():
    from jordanreduce.blockdiag import block_diagonalize
    from jordanreduce.builders import build_theta_prime, cycle_graph
    from jordanreduce.partition import admissible_subspace

    prob = build_theta_prime(cycle_graph(5))
    P = admissible_subspace(prob, rng=0)
    return prob, P, block_diagonalize(P, rng=0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
