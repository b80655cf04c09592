import numpy as np
import pytest

from dysign import SplitSpec, dynamic_sbm, make_splits


def split_graph(seed=0, **kwargs):
    graph = dynamic_sbm(seed=seed, **kwargs)
    return graph.with_splits(make_splits(graph, SplitSpec(seed=seed)))


@pytest.fixture
def small_graph():
    """60-node, 3-step, 2-class graph with splits; quick to train on."""
    return split_graph(seed=3, num_nodes=60, num_steps=3, feature_dim=6, p_in=0.15, p_out=0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
