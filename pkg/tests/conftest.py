import numpy as np
import pytest
from hypothesis import settings

from trwgcn.graph_core import TxEdge, build_graph, graph_from_arrays

settings.register_profile("ci", max_examples=50, deadline=None)
settings.load_profile("ci")


def addr(i):
    return f"0x{i:040x}"


def random_graph(seed, n=20, m=60, blocks=10):
    rng = np.random.default_rng(seed)
    src = rng.integers(n, size=m)
    dst = rng.integers(n, size=m)
    blk = np.sort(rng.integers(blocks, size=m))
    val = rng.integers(0, 10**18, size=m) * 100
    return graph_from_arrays(n, src, dst, blk, blk * 12, value=[int(v) for v in val],
                             block_range=(0, blocks - 1))


@pytest.fixture
def tiny():
    # 0 -> 1 -> 2, 2 -> 0 later, a parallel edge 0 -> 1
    edges = [
        TxEdge(addr(0), addr(1), 5, 21000, 0, 0),
        TxEdge(addr(1), addr(2), 7, 21000, 1, 12),
        TxEdge(addr(0), addr(1), 3, 21000, 2, 24),
        TxEdge(addr(2), addr(0), 1, 21000, 3, 36),
    ]
    return build_graph(edges, (0, 3))


# acceptance criteria report one line each; printed after the run
ACCEPTANCE: dict[int, str] = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
