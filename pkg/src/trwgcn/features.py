"""Per-address temporal features and windowed activity series."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BlockOutOfRange, ConfigInvalid
from .graph_core import TemporalGraph

FEATURE_NAMES = (
    "outgoing_tx_count",
    "incoming_tx_count",
    "outgoing_value_sum",
    "incoming_value_sum",
    "activity_rate",
    "change_in_activity",
    "time_since_last",
)
TEMPORAL_FEATURES = ("activity_rate", "change_in_activity", "time_since_last")
VOLUME_FEATURES = FEATURE_NAMES[:4]


@dataclass(frozen=True, eq=False)
class NodeFeatureMatrix:
    values: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.names):
            raise ValueError(f"values {v.shape} do not match {len(self.names)} names")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select(self, names: Sequence[str]) -> "NodeFeatureMatrix":
        unknown = [x for x in names if x not in self.names]
        if unknown:
            raise ConfigInvalid(f"unknown features {unknown}")
        idx = [self.names.index(x) for x in names]
        return NodeFeatureMatrix(self.values[:, idx], tuple(names))

    def rows(self, nodes) -> "NodeFeatureMatrix":
        return NodeFeatureMatrix(self.values[np.asarray(nodes, dtype=np.int64)], self.names)


def _involvement(g: TemporalGraph, mask: np.ndarray) -> np.ndarray:
    n = g.num_nodes
    return np.bincount(g.src[mask], minlength=n) + np.bincount(g.dst[mask], minlength=n)


def extract_features(g: TemporalGraph, at_block: int | None = None) -> NodeFeatureMatrix:
    start, end = g.block_range
    at_block = end if at_block is None else at_block
    if not start <= at_block <= end:
        raise BlockOutOfRange(f"at_block {at_block} outside {g.block_range}")
    n = g.num_nodes
    seen = g.block <= at_block
    s, d, b = g.src[seen], g.dst[seen], g.block[seen]
    val = g.value_eth[seen]

    out_cnt = np.bincount(s, minlength=n).astype(np.float64)
    in_cnt = np.bincount(d, minlength=n).astype(np.float64)
    out_val = np.bincount(s, weights=val, minlength=n)
    in_val = np.bincount(d, weights=val, minlength=n)

    first = np.full(n, np.iinfo(np.int64).max)
    last = np.full(n, np.iinfo(np.int64).min)
    for ends in (s, d):
        np.minimum.at(first, ends, b)
        np.maximum.at(last, ends, b)
    active = out_cnt + in_cnt > 0

    rate = np.zeros(n)
    rate[active] = (out_cnt + in_cnt)[active] / (at_block - first[active] + 1)

    now = _involvement(g, g.block == at_block)
    prev = _involvement(g, g.block == at_block - 1)
    change = (now - prev).astype(np.float64)

    since = np.full(n, float(at_block - start))
    since[active] = at_block - last[active]

    vals = np.column_stack([out_cnt, in_cnt, out_val, in_val, rate, change, since])
    return NodeFeatureMatrix(vals)


@dataclass(frozen=True)
class NodeTimeSeries:
    node: int
    window_blocks: int
    series: tuple[tuple[int, int], ...]


def extract_time_series(g: TemporalGraph, window_blocks: int) -> list[NodeTimeSeries]:
    """Windowed transaction counts (in + out) per node; last window may be partial."""
    if window_blocks < 1:
        raise ConfigInvalid("window_blocks must be >= 1")
    start, end = g.block_range
    starts = list(range(start, end + 1, window_blocks))
    n = g.num_nodes
    counts = np.zeros((n, len(starts)), dtype=np.int64)
    w = (g.block - start) // window_blocks
    np.add.at(counts, (g.src, w), 1)
    np.add.at(counts, (g.dst, w), 1)
    return [
        NodeTimeSeries(v, window_blocks, tuple(zip(starts, map(int, counts[v]))))
        for v in range(n)
    ]


def standardize(features: NodeFeatureMatrix) -> NodeFeatureMatrix:
    """Population z-score per column; constant columns become zeros."""
    x = features.values
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    z = np.zeros_like(x)
    z[:, ~const] = (x[:, ~const] - mu[~const]) / sd[~const]
    return NodeFeatureMatrix(z, features.names)


def write_feature_csv(features: NodeFeatureMatrix, path, node_labels=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("node",) + tuple(features.names))
        for i, row in enumerate(features.values):
            label = node_labels[i] if node_labels is not None else i
            w.writerow((label,) + tuple(repr(float(x)) for x in row))
