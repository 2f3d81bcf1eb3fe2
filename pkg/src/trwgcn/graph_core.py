"""Temporal multigraph of addresses and value transfers, plus derived matrices."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import sparse

from .errors import BlockOutOfRange, DataError, EmptyEdgeList

WEI_PER_ETH = 10**18
EDGE_CSV_HEADER = ("from", "to", "value", "gas", "block", "timestamp")


class TxEdge(NamedTuple):
    """One value transfer. Endpoints are hex addresses before graph
    construction and dense node ids afterwards."""

    src: int | str
    dst: int | str
    value: int
    gas: int
    block: int
    timestamp: int


@dataclass(frozen=True, eq=False)
class TemporalGraph:
    addresses: tuple[str, ...]
    edges: tuple[TxEdge, ...]
    block_range: tuple[int, int]
    # column views of `edges`, filled in __post_init__
    src: np.ndarray = field(init=False, repr=False)
    dst: np.ndarray = field(init=False, repr=False)
    block: np.ndarray = field(init=False, repr=False)
    timestamp: np.ndarray = field(init=False, repr=False)
    value_eth: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.addresses)
        m = len(self.edges)
        cols = {
            "src": np.fromiter((e.src for e in self.edges), np.int64, m),
            "dst": np.fromiter((e.dst for e in self.edges), np.int64, m),
            "block": np.fromiter((e.block for e in self.edges), np.int64, m),
            "timestamp": np.fromiter((e.timestamp for e in self.edges), np.int64, m),
            # exact division happens on Python ints before the float cast
            "value_eth": np.fromiter(
                (e.value / WEI_PER_ETH for e in self.edges), np.float64, m
            ),
        }
        if m and (cols["src"].max() >= n or cols["dst"].max() >= n or min(cols["src"].min(), cols["dst"].min()) < 0):
            raise DataError("edge endpoint outside node range")
        for name, arr in cols.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_nodes(self) -> int:
        return len(self.addresses)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def out_edges(self) -> list[np.ndarray]:
        """Edge indices leaving each node, in edge-list order."""
        return _group(self.src, self.num_nodes)

    def in_edges(self) -> list[np.ndarray]:
        return _group(self.dst, self.num_nodes)

    def same_as(self, other: "TemporalGraph") -> bool:
        return (
            self.addresses == other.addresses
            and self.edges == other.edges
            and self.block_range == other.block_range
        )


def _group(keys: np.ndarray, n: int) -> list[np.ndarray]:
    order = np.argsort(keys, kind="stable")
    bounds = np.searchsorted(keys[order], np.arange(n + 1))
    return [order[bounds[i]:bounds[i + 1]] for i in range(n)]


def build_graph(edges: Sequence[TxEdge], block_range: tuple[int, int]) -> TemporalGraph:
    """Assign dense node ids by first appearance and freeze the edge list."""
    if not edges:
        raise EmptyEdgeList("cannot build a graph from zero edges")
    start, end = block_range
    if start > end:
        raise BlockOutOfRange(f"block range {block_range} is descending")
    ids: dict[str, int] = {}
    out = []
    for e in edges:
        if not start <= e.block <= end:
            raise BlockOutOfRange(f"edge at block {e.block} outside {block_range}")
        if e.value < 0 or e.gas < 0:
            raise DataError("negative value or gas")
        if e.timestamp < 0:
            raise DataError("negative timestamp")
        s = ids.setdefault(str(e.src), len(ids))
        d = ids.setdefault(str(e.dst), len(ids))
        out.append(TxEdge(s, d, int(e.value), int(e.gas), int(e.block), int(e.timestamp)))
    return TemporalGraph(tuple(ids), tuple(out), (int(start), int(end)))


def graph_from_arrays(n, src, dst, block, timestamp, value=None, gas=None, block_range=None):
    """Build a graph directly from integer arrays; addresses are synthesized.

    Node ids are kept as given (not re-ordered by first appearance), which
    is what generators and tests want.
    """
    src = np.asarray(src, dtype=np.int64)
    m = len(src)
    value = np.zeros(m, dtype=np.int64) if value is None else value
    gas = np.full(m, 21000) if gas is None else gas
    block = np.asarray(block, dtype=np.int64)
    if block_range is None:
        block_range = (int(block.min()), int(block.max())) if m else (0, 0)
    edges = tuple(
        TxEdge(int(s), int(d), int(v), int(g), int(b), int(t))
        for s, d, v, g, b, t in zip(src, dst, value, gas, block, timestamp)
    )
    addresses = tuple(f"0x{i:040x}" for i in range(n))
    return TemporalGraph(addresses, edges, block_range)


def adjacency(g: TemporalGraph, weighting: str = "count") -> sparse.csr_matrix:
    """Directed weighted adjacency, multi-edges summed."""
    if weighting == "count":
        w = np.ones(g.num_edges)
    elif weighting == "value_sum":
        w = g.value_eth.copy()
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    n = g.num_nodes
    # coo -> csr sums duplicates
    return sparse.coo_matrix((w, (g.src, g.dst)), shape=(n, n)).tocsr()


def degree(a) -> np.ndarray:
    """Row sums d_ii = sum_j w_ij."""
    return np.asarray(a.sum(axis=1)).ravel()


def symmetrize(a):
    return (a + a.T) / 2


def normalized_laplacian(a, symmetrize_first: bool = True) -> np.ndarray:
    """Dense L = I - D^-1/2 A D^-1/2.

    Zero-degree nodes get an all-zero row and column, so the multiplicity
    of eigenvalue 0 equals the component count including singletons.
    """
    a = sparse.csr_matrix(a, dtype=np.float64)
    if symmetrize_first:
        a = symmetrize(a)
    d = degree(a)
    inv_sqrt = np.zeros_like(d)
    nz = d > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(d[nz])
    dense = a.toarray()
    lap = -(inv_sqrt[:, None] * dense * inv_sqrt[None, :])
    lap[np.diag_indices_from(lap)] += nz.astype(np.float64)
    return (lap + lap.T) / 2


def write_edge_csv(g: TemporalGraph, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_CSV_HEADER)
        w.writerows(iter_edge_rows(g))


def read_edge_csv(path, block_range: tuple[int, int] | None = None) -> TemporalGraph:
    edges = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if tuple(header or ()) != EDGE_CSV_HEADER:
            raise DataError(f"{path}: bad edge CSV header {header!r}")
        for row in rows:
            src, dst, value, gas, block, ts = row
            edges.append(TxEdge(src, dst, int(value), int(gas), int(block), int(ts)))
    if block_range is None and edges:
        blocks = [e.block for e in edges]
        block_range = (min(blocks), max(blocks))
    return build_graph(edges, block_range)


def iter_edge_rows(g: TemporalGraph) -> Iterable[tuple]:
    for e in g.edges:
        yield (g.addresses[e.src], g.addresses[e.dst], e.value, e.gas, e.block, e.timestamp)
