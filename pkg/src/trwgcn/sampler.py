"""Temporal random walks, the temporal transition kernel, and node sampling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import ConfigInvalid, EmptyGraph, InfeasibleSample, InvalidStartNode
from .graph_core import TemporalGraph, adjacency, degree


@dataclass(frozen=True)
class TrwConfig:
    alpha: float = 0.5
    # None -> 1 / mean gap between consecutive distinct timestamps
    lambda_decay: float | None = None
    num_walks: int = 2000
    walk_length: int = 10
    seed: int = 0
    # "out" follows value flow; "both" also walks transfers backwards
    direction: str = "out"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigInvalid(f"alpha {self.alpha} not in [0, 1]")
        if self.lambda_decay is not None and not self.lambda_decay > 0:
            raise ConfigInvalid("lambda_decay must be > 0")
        if self.num_walks < 1 or self.walk_length < 1:
            raise ConfigInvalid("num_walks and walk_length must be >= 1")
        if self.direction not in ("out", "both"):
            raise ConfigInvalid(f"unknown direction {self.direction!r}")

    def resolved(self, g: TemporalGraph) -> "TrwConfig":
        if self.lambda_decay is not None:
            return self
        return replace(self, lambda_decay=default_lambda(g))


def default_lambda(g: TemporalGraph) -> float:
    ts = np.unique(g.timestamp)
    gaps = np.diff(ts)
    if len(gaps) == 0:
        return 1.0
    return float(1.0 / gaps.mean())


@dataclass(frozen=True, eq=False)
class TemporalTransitionMatrix:
    raw: sparse.csr_matrix
    normalized: sparse.csr_matrix
    degree: np.ndarray

    @property
    def n(self) -> int:
        return self.raw.shape[0]


def structural_walk_matrix(g: TemporalGraph) -> sparse.csr_matrix:
    """P_ij = w_ij / sum_k w_ik over count-weighted out-edges."""
    a = adjacency(g, "count")
    d = degree(a)
    inv = np.zeros_like(d)
    inv[d > 0] = 1.0 / d[d > 0]
    return sparse.diags(inv) @ a


def latest_edge_times(g: TemporalGraph) -> sparse.csr_matrix:
    """Most recent i->j timestamp per directed pair (shifted by +1 so that
    a timestamp of 0 survives as a stored entry)."""
    n = g.num_nodes
    key = g.src * n + g.dst
    order = np.lexsort((g.timestamp, key))
    k, t = key[order], g.timestamp[order]
    last = np.r_[k[1:] != k[:-1], True]
    k, t = k[last], t[last]
    return sparse.csr_matrix(((t + 1).astype(np.float64), (k // n, k % n)), shape=(n, n))


def transition_matrix(g: TemporalGraph, now: int | None = None,
                      cfg: TrwConfig = TrwConfig()) -> TemporalTransitionMatrix:
    """T = alpha * P + (1 - alpha) * exp(-lambda * (now - t_latest)) on the edge support,
    and its row-normalised form D_T^-1 T."""
    if g.num_edges == 0:
        raise EmptyGraph("transition matrix of a graph without edges")
    cfg = cfg.resolved(g)
    now = int(g.timestamp.max()) if now is None else now
    p = structural_walk_matrix(g).tocsr()
    latest = latest_edge_times(g)
    p.sort_indices()
    latest.sort_indices()
    # both are supported exactly on pairs with at least one edge
    assert np.array_equal(p.indptr, latest.indptr) and np.array_equal(p.indices, latest.indices)
    age = np.maximum(now - (latest.data - 1.0), 0.0)
    recency = np.exp(-cfg.lambda_decay * age)
    t = p.copy()
    t.data = cfg.alpha * p.data + (1.0 - cfg.alpha) * recency
    d = degree(t)
    inv = np.zeros_like(d)
    inv[d > 0] = 1.0 / d[d > 0]
    tn = (sparse.diags(inv) @ t).tocsr()
    return TemporalTransitionMatrix(raw=t, normalized=tn, degree=d)


@dataclass(frozen=True)
class Walk:
    steps: tuple[tuple[int, int], ...]

    @property
    def nodes(self) -> list[int]:
        return [s[0] for s in self.steps]

    def __len__(self):
        return len(self.steps)

    def to_line(self) -> str:
        return " ".join(f"{v}@{t}" for v, t in self.steps)


class WalkIndex:
    """Per-node incident edges sorted by timestamp, for fast eligibility lookup."""

    def __init__(self, g: TemporalGraph, direction: str = "out"):
        self.g = g
        self.direction = direction
        src, dst, ts = g.src, g.dst, g.timestamp
        if direction == "both":
            # a transfer can be walked from either endpoint; self-loops once
            loop = src == dst
            origin = np.r_[src, dst[~loop]]
            target = np.r_[dst, src[~loop]]
            times = np.r_[ts, ts[~loop]]
        else:
            origin, target, times = src, dst, ts
        order = np.lexsort((times, origin))
        self.target = target[order]
        self.time = times[order]
        self.bounds = np.searchsorted(origin[order], np.arange(g.num_nodes + 1))
        self.t_min = int(ts.min()) if len(ts) else 0

    def edges_of(self, v: int):
        lo, hi = self.bounds[v], self.bounds[v + 1]
        return self.target[lo:hi], self.time[lo:hi]

    def eligible(self, v: int, t: int):
        tgt, tm = self.edges_of(v)
        cut = np.searchsorted(tm, t, side="left")
        return tgt[cut:], tm[cut:]


def _pick(weights: np.ndarray, rng: np.random.Generator) -> int:
    c = np.cumsum(weights)
    return min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), len(c) - 1)


def temporal_walk(g: TemporalGraph, start: int, length: int, cfg: TrwConfig,
                  rng: np.random.Generator, index: WalkIndex | None = None,
                  t0: int | None = None) -> Walk:
    """Walk forward in time from `start`; stops early at a temporal dead end.

    Each eligible edge (timestamp >= current time) is weighted by
    alpha / n_eligible + (1 - alpha) * exp(-lambda * (t_edge - t)).
    """
    if not 0 <= start < g.num_nodes:
        raise InvalidStartNode(f"start node {start} not in graph of {g.num_nodes}")
    cfg = cfg.resolved(g)
    index = index or WalkIndex(g, cfg.direction)
    t = index.t_min if t0 is None else t0
    v = start
    steps = [(v, t)]
    while len(steps) < length:
        tgt, tm = index.eligible(v, t)
        if len(tgt) == 0:
            break
        w = cfg.alpha / len(tgt) + (1.0 - cfg.alpha) * np.exp(-cfg.lambda_decay * (tm - t))
        k = _pick(w, rng)
        v, t = int(tgt[k]), int(tm[k])
        steps.append((v, t))
    return Walk(tuple(steps))


def static_walk(g: TemporalGraph, start: int, length: int, rng: np.random.Generator,
                index: WalkIndex | None = None, direction: str = "out") -> Walk:
    """Plain random walk, uniform over incident edges, time ignored.

    Steps still record the traversed edge's timestamp so temporal
    consistency can be measured on it.
    """
    if not 0 <= start < g.num_nodes:
        raise InvalidStartNode(f"start node {start} not in graph of {g.num_nodes}")
    index = index or WalkIndex(g, direction)
    v, t = start, index.t_min
    steps = [(v, t)]
    while len(steps) < length:
        tgt, tm = index.edges_of(v)
        if len(tgt) == 0:
            break
        k = _pick(np.ones(len(tgt)), rng)
        v, t = int(tgt[k]), int(tm[k])
        steps.append((v, t))
    return Walk(tuple(steps))


def walk_rng(seed: int, k: int) -> np.random.Generator:
    """Independent stream for walk k, so corpus content ignores scheduling."""
    return np.random.default_rng(np.random.SeedSequence([seed, k]))


@dataclass(frozen=True, eq=False)
class WalkCorpus:
    walks: tuple[Walk, ...]
    freq: np.ndarray
    occurrences: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        """Distinct nodes that appear in any walk, ascending."""
        return np.flatnonzero(self.occurrences)

    def to_lines(self) -> list[str]:
        return [w.to_line() for w in self.walks]


def corpus_from_walks(walks: Sequence[Walk], n: int) -> WalkCorpus:
    occ = np.zeros(n, dtype=np.int64)
    for w in walks:
        np.add.at(occ, np.array(w.nodes, dtype=np.int64), 1)
    top = occ.max() if n else 0
    freq = occ / top if top > 0 else np.zeros(n)
    occ.setflags(write=False)
    freq.setflags(write=False)
    return WalkCorpus(tuple(walks), freq, occ)


def build_corpus(g: TemporalGraph, cfg: TrwConfig, temporal: bool = True) -> WalkCorpus:
    """num_walks walks from uniformly drawn start nodes; freq = occurrences / max."""
    cfg = cfg.resolved(g)
    index = WalkIndex(g, cfg.direction)
    walks = []
    for k in range(cfg.num_walks):
        rng = walk_rng(cfg.seed, k)
        start = int(rng.integers(g.num_nodes))
        if temporal:
            walks.append(temporal_walk(g, start, cfg.walk_length, cfg, rng, index))
        else:
            walks.append(static_walk(g, start, cfg.walk_length, rng, index))
    return corpus_from_walks(walks, g.num_nodes)


def walk_node_sample(g: TemporalGraph, m: int, cfg: TrwConfig, temporal: bool = True,
                     max_walks: int = 100_000) -> list[int]:
    """First m distinct nodes visited by a seeded stream of walks."""
    if m > g.num_nodes:
        raise InfeasibleSample(f"cannot visit {m} of {g.num_nodes} nodes")
    cfg = cfg.resolved(g)
    index = WalkIndex(g, cfg.direction)
    picked: dict[int, None] = {}
    for k in range(max_walks):
        rng = walk_rng(cfg.seed, k)
        start = int(rng.integers(g.num_nodes))
        if temporal:
            w = temporal_walk(g, start, cfg.walk_length, cfg, rng, index)
        else:
            w = static_walk(g, start, cfg.walk_length, rng, index)
        for v in w.nodes:
            picked.setdefault(v)
            if len(picked) == m:
                return list(picked)
    raise InfeasibleSample(f"walks reached only {len(picked)} of {m} nodes")


@dataclass(frozen=True, eq=False)
class SamplingWeights:
    omega: np.ndarray
    p: np.ndarray
    p_normalized: np.ndarray


def sampling_weights(features: np.ndarray, omega) -> SamplingWeights:
    """p_i = sum_j omega_j X_ij, min-shifted to be non-negative, then normalised."""
    x = np.asarray(features, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != (x.shape[1],):
        raise ConfigInvalid(f"omega has shape {omega.shape}, features have {x.shape[1]} columns")
    p = x @ omega
    if p.min() < 0:
        p = p - p.min()
    total = p.sum()
    if total > 0:
        pn = p / total
    else:
        pn = np.full(len(p), 1.0 / len(p))
        p = pn.copy()
    return SamplingWeights(omega, p, pn)


def probabilistic_sample(features, omega, m: int, seed: int) -> list[int]:
    """m distinct nodes, drawn sequentially with renormalisation after each draw."""
    values = getattr(features, "values", features)
    w = sampling_weights(values, omega)
    n = len(w.p)
    if not 0 <= m <= n:
        raise InfeasibleSample(f"sample size {m} outside [0, {n}]")
    if m == n:
        return list(range(n))
    positive = int(np.count_nonzero(w.p_normalized > 0))
    if m > positive:
        raise InfeasibleSample(f"{m} requested but only {positive} nodes have p > 0")
    rng = np.random.default_rng(seed)
    # numpy's weighted choice without replacement redraws with renormalised p
    return [int(v) for v in rng.choice(n, size=m, replace=False, p=w.p_normalized)]


def induce_subgraph(g: TemporalGraph, nodes: Sequence[int]) -> tuple[TemporalGraph, np.ndarray]:
    """Keep edges with both endpoints in `nodes`; node k of the result is nodes[k]."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(np.unique(nodes)) != len(nodes):
        raise ValueError("induce_subgraph needs distinct nodes")
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= g.num_nodes):
        raise InvalidStartNode("subgraph node outside graph")
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    keep = (remap[g.src] >= 0) & (remap[g.dst] >= 0)
    edges = tuple(
        e._replace(src=int(remap[e.src]), dst=int(remap[e.dst]))
        for e, k in zip(g.edges, keep) if k
    )
    sub = TemporalGraph(tuple(g.addresses[v] for v in nodes), edges, g.block_range)
    nodes.setflags(write=False)
    return sub, nodes


def write_corpus(corpus: WalkCorpus, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in corpus.to_lines():
            fh.write(line + "\n")


def read_corpus(path, n: int) -> WalkCorpus:
    walks = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                steps = tuple(
                    (int(v), int(t)) for v, t in (tok.split("@") for tok in line.split())
                )
                walks.append(Walk(steps))
    return corpus_from_walks(walks, n)
