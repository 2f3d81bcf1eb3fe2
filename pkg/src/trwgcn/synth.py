"""Seeded synthetic transaction graphs with planted temporal anomalies."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigInvalid
from .graph_core import TemporalGraph, TxEdge, build_graph, graph_from_arrays
from .ingest import RawTransaction, write_fixture

BLOCK_SECONDS = 12
INTRA_BIAS = 5.0
KINDS = ("burst", "pump_dump", "dormant_spike")


@dataclass(frozen=True)
class AnomalySpec:
    kind: str
    target_node: int
    start_block: int
    duration_blocks: int
    intensity: float = 10.0


@dataclass(frozen=True)
class SynthConfig:
    num_nodes: int = 500
    num_blocks: int = 200
    base_tx_rate: float = 10.0
    community_count: int = 5
    seed: int = 0
    anomalies: tuple[AnomalySpec, ...] = field(default_factory=tuple)

    def validate(self):
        if min(self.num_nodes, self.num_blocks, self.community_count) < 1 or self.base_tx_rate <= 0:
            raise ConfigInvalid("synth sizes and rate must be positive")
        if self.community_count > self.num_nodes:
            raise ConfigInvalid("more communities than nodes")
        for a in self.anomalies:
            if a.kind not in KINDS:
                raise ConfigInvalid(f"unknown anomaly kind {a.kind!r}")
            if not 0 <= a.target_node < self.num_nodes:
                raise ConfigInvalid(f"anomaly target {a.target_node} out of range")
            if a.intensity < 2:
                raise ConfigInvalid("anomaly intensity must be >= 2")
            if a.duration_blocks < 1 or a.start_block < 0 or a.start_block + a.duration_blocks > self.num_blocks:
                raise ConfigInvalid(f"anomaly window {a.start_block}+{a.duration_blocks} outside blocks")
        targets = [a.target_node for a in self.anomalies]
        if len(set(targets)) != len(targets):
            raise ConfigInvalid("anomaly targets must be distinct")


def address(node: int) -> str:
    return f"0x{node + 1:040x}"


@dataclass
class SynthData:
    config: SynthConfig
    transactions: list[RawTransaction]
    graph: TemporalGraph
    ground_truth: frozenset[int]
    truth_addresses: tuple[str, ...]

    def write(self, fixture_path, truth_path=None) -> None:
        write_fixture(self.transactions, fixture_path)
        if truth_path is not None:
            with open(truth_path, "w") as fh:
                json.dump({
                    "config": asdict(self.config),
                    "anomalous_addresses": list(self.truth_addresses),
                    "num_transactions": len(self.transactions),
                    "num_nodes": self.graph.num_nodes,
                    "num_edges": self.graph.num_edges,
                }, fh, indent=2, sort_keys=True)


def _values(rng, k) -> list[int]:
    # log-normal ETH amounts in micro-ETH resolution, as exact integer wei
    micro = np.round(rng.lognormal(mean=-1.0, sigma=1.0, size=k) * 1e6)
    return [int(m) * 10**12 for m in micro]


def generate(cfg: SynthConfig) -> SynthData:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, nb = cfg.num_nodes, cfg.num_blocks
    community = rng.integers(cfg.community_count, size=n)
    members = [np.flatnonzero(community == c) for c in range(cfg.community_count)]
    dormant = {a.target_node for a in cfg.anomalies if a.kind == "dormant_spike"}
    background = np.array([v for v in range(n) if v not in dormant])
    bg_members = [np.array([v for v in m if v not in dormant]) for m in members]
    bg_outside = [np.setdiff1d(background, m) for m in bg_members]

    per_block: list[list[tuple[int, int]]] = [[] for _ in range(nb)]

    def receiver(sender, k):
        # each same-community receiver weighs INTRA_BIAS times an outside one
        own, outside = bg_members[community[sender]], bg_outside[community[sender]]
        p_intra = INTRA_BIAS * len(own) / (INTRA_BIAS * len(own) + len(outside))
        intra = rng.random(k) < p_intra
        if len(outside) == 0:
            intra[:] = True
        out = np.where(intra, rng.choice(own, size=k), rng.choice(outside if len(outside) else own, size=k))
        # no accidental self-sends in background traffic
        clash = out == sender
        while clash.any():
            out[clash] = rng.choice(background, size=int(clash.sum()))
            clash = out == sender
        return out

    for b in range(nb):
        k = rng.poisson(cfg.base_tx_rate)
        senders = rng.choice(background, size=k)
        for s in senders:
            r = receiver(s, 1)[0]
            per_block[b].append((int(s), int(r)))

    others = lambda t: np.array([v for v in background if v != t])
    for a in cfg.anomalies:
        rate = max(1, int(round(a.intensity * cfg.base_tx_rate)))
        pool = others(a.target_node)
        window = range(a.start_block, a.start_block + a.duration_blocks)
        if a.kind == "burst":
            for b in window:
                for r in rng.choice(pool, size=rate):
                    per_block[b].append((a.target_node, int(r)))
        elif a.kind == "pump_dump":
            half = max(1, a.duration_blocks // 2)
            for i, b in enumerate(window):
                if i < half:
                    # fan-in ramps up towards the full rate
                    k = max(1, int(round(rate * (i + 1) / half)))
                    for s in rng.choice(pool, size=k):
                        per_block[b].append((int(s), a.target_node))
                else:
                    for r in rng.choice(pool, size=rate):
                        per_block[b].append((a.target_node, int(r)))
        else:
            for b in window:
                for j, c in enumerate(rng.choice(pool, size=rate)):
                    pair = (a.target_node, int(c)) if j % 2 == 0 else (int(c), a.target_node)
                    per_block[b].append(pair)

    txs = []
    counter = 0
    for b in range(nb):
        rows = per_block[b]
        order = rng.permutation(len(rows))
        vals = _values(rng, len(rows))
        for i in order:
            s, r = rows[i]
            txs.append(RawTransaction(
                hash=f"0x{cfg.seed & 0xFFFFFFFF:08x}{counter:056x}",
                from_=address(s),
                to=address(r),
                value=int(vals[i]),
                gas=21000,
                block=b,
                timestamp=b * BLOCK_SECONDS,
            ))
            counter += 1

    edges = [TxEdge(t.from_, t.to, t.value, t.gas, t.block, t.timestamp) for t in txs]
    g = build_graph(edges, (0, nb - 1))
    ids = {a: i for i, a in enumerate(g.addresses)}
    truth_addr = tuple(address(a.target_node) for a in cfg.anomalies)
    truth = frozenset(ids[x] for x in truth_addr if x in ids)
    return SynthData(cfg, txs, g, truth, truth_addr)


def mixed_anomalies(num_nodes: int, num_blocks: int, count: int = 10, seed: int = 0,
                    intensity: float = 3.0, duration: int = 4,
                    recent_blocks: int | None = None,
                    kinds: tuple[str, ...] = KINDS) -> tuple[AnomalySpec, ...]:
    """Round-robin over `kinds`, windows placed in the last `recent_blocks`
    blocks (default: the last fifth of the range)."""
    if count > num_nodes or duration > num_blocks:
        raise ConfigInvalid("more anomalies than nodes, or window longer than the range")
    rng = np.random.default_rng([seed, 0xA11])
    targets = rng.choice(num_nodes, size=count, replace=False)
    recent = max(duration, recent_blocks or num_blocks // 5)
    specs = []
    for i, t in enumerate(targets):
        start = int(rng.integers(num_blocks - recent, num_blocks - duration + 1))
        specs.append(AnomalySpec(kinds[i % len(kinds)], int(t), start, duration, intensity))
    return tuple(specs)


def burst_anomalies(num_nodes: int, num_blocks: int, count: int = 10, seed: int = 0,
                    intensity: float = 10.0, duration: int = 4,
                    recent_blocks: int | None = None) -> tuple[AnomalySpec, ...]:
    return mixed_anomalies(num_nodes, num_blocks, count, seed, intensity, duration,
                           recent_blocks, kinds=("burst",))


def mixed_fixture(seed: int = 0, num_nodes: int = 500, num_blocks: int = 200, count: int = 10) -> SynthData:
    """The 500-node, 200-block graph with planted anomalies of every kind."""
    an = mixed_anomalies(num_nodes, num_blocks, count, seed=seed)
    return generate(SynthConfig(num_nodes, num_blocks, 10.0, 5, seed, an))


def burst_fixture(seed: int = 0, num_nodes: int = 500, num_blocks: int = 200, count: int = 10) -> SynthData:
    an = burst_anomalies(num_nodes, num_blocks, count, seed=seed)
    return generate(SynthConfig(num_nodes, num_blocks, 10.0, 5, seed, an))


def temporal_chain(num_nodes: int = 200, num_chords: int = 100, seed: int = 0,
                   static_time: bool = False) -> TemporalGraph:
    """A path 0 -> 1 -> ... whose edge i -> i+1 sits at block i, plus random
    shortcut edges dated no later than their source's position. Walks that
    respect time cannot use a shortcut after arriving along the path;
    time-blind walks can. static_time puts every edge in block 0."""
    if num_nodes < 3:
        raise ConfigInvalid("chain needs at least 3 nodes")
    rng = np.random.default_rng([seed, 0xC4A])
    src = list(range(num_nodes - 1))
    dst = list(range(1, num_nodes))
    blk = list(range(num_nodes - 1))
    for _ in range(num_chords):
        a, b = rng.choice(num_nodes, size=2, replace=False)
        src.append(int(a))
        dst.append(int(b))
        blk.append(int(rng.integers(a + 1)))
    blk = np.zeros(len(blk), dtype=np.int64) if static_time else np.array(blk)
    return graph_from_arrays(num_nodes, src, dst, blk, blk * BLOCK_SECONDS,
                             block_range=(0, num_nodes - 1))


def community_graph(num_nodes: int = 200, communities: int = 4, p_in: float = 0.1,
                    p_out: float = 0.005, num_blocks: int = 100, seed: int = 0) -> TemporalGraph:
    """Planted-partition graph, one edge per linked pair, random direction and block."""
    if communities < 1 or not (0 <= p_out <= 1 and 0 <= p_in <= 1):
        raise ConfigInvalid("bad community parameters")
    rng = np.random.default_rng([seed, 0xC0A])
    c = np.arange(num_nodes) % communities
    i, j = np.triu_indices(num_nodes, 1)
    keep = rng.random(len(i)) < np.where(c[i] == c[j], p_in, p_out)
    s, d = i[keep], j[keep]
    flip = rng.random(len(s)) < 0.5
    s, d = np.where(flip, d, s), np.where(flip, s, d)
    b = rng.integers(num_blocks, size=len(s))
    return graph_from_arrays(num_nodes, s, d, b, b * BLOCK_SECONDS, block_range=(0, num_blocks - 1))
