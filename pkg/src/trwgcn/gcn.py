"""A small GCN with hand-written backprop, trained as a graph autoencoder."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigInvalid, EmptyCorpus, NonFiniteLoss, ShapeMismatch
from .features import NodeFeatureMatrix
from .graph_core import TemporalGraph, adjacency
from .sampler import TrwConfig, WalkCorpus, induce_subgraph, transition_matrix

MODEL_FORMAT = "trwgcn-model"
MODEL_VERSION = 1
KERNELS = ("sym_adj", "trw")


@dataclass(frozen=True)
class GcnConfig:
    in_channels: int
    hidden_channels: int = 20
    out_channels: int = 8
    num_layers: int = 2
    epochs: int = 100
    learning_rate: float = 0.01
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if min(self.in_channels, self.hidden_channels, self.out_channels, self.num_layers) < 1:
            raise ConfigInvalid("GCN dimensions must be >= 1")
        if self.epochs < 0 or not self.learning_rate > 0:
            raise ConfigInvalid("epochs must be >= 0 and learning_rate > 0")
        if self.activation != "relu":
            raise ConfigInvalid(f"unsupported activation {self.activation!r}")

    @property
    def dims(self) -> list[int]:
        return [self.in_channels] + [self.hidden_channels] * (self.num_layers - 1) + [self.out_channels]


def sym_adj_kernel(g: TemporalGraph) -> sparse.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 on the binarised, symmetrised adjacency."""
    a = adjacency(g, "count")
    a = ((a + a.T + sparse.identity(g.num_nodes)) > 0).astype(np.float64)
    d = np.asarray(a.sum(axis=1)).ravel()
    s = sparse.diags(1.0 / np.sqrt(d))
    return (s @ a @ s).tocsr()


def trw_kernel(g: TemporalGraph, trw_cfg: TrwConfig, now: int | None = None) -> sparse.csr_matrix:
    """D_T^-1/2 T~ D_T^-1/2 where T gets a unit self-loop before normalisation."""
    if g.num_edges == 0:
        # T is empty, so the self-loop leaves the identity
        return sparse.identity(g.num_nodes, format="csr")
    tm = transition_matrix(g, now, trw_cfg)
    t = tm.raw + sparse.identity(g.num_nodes, format="csr")
    d = np.asarray(t.sum(axis=1)).ravel()
    t_norm = sparse.diags(1.0 / d) @ t
    s = sparse.diags(1.0 / np.sqrt(d))
    return (s @ t_norm @ s).tocsr()


def build_kernel(g: TemporalGraph, kernel: str, trw_cfg: TrwConfig | None = None) -> sparse.csr_matrix:
    if kernel == "sym_adj":
        return sym_adj_kernel(g)
    if kernel == "trw":
        if trw_cfg is None:
            raise ConfigInvalid("trw kernel needs a TrwConfig")
        return trw_kernel(g, trw_cfg)
    raise ConfigInvalid(f"unknown kernel {kernel!r}")


def init_weights(cfg: GcnConfig) -> list[np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x6C1]))
    dims = cfg.dims
    out = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        out.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    return out


@dataclass(eq=False)
class GcnModel:
    config: GcnConfig
    weights: list[np.ndarray]
    propagation_kernel: str
    kernel_matrix: sparse.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        check_weight_shapes(self.config, self.weights)
        if self.propagation_kernel not in KERNELS:
            raise ConfigInvalid(f"unknown kernel {self.propagation_kernel!r}")

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": asdict(self.config),
            "kernel": self.propagation_kernel,
            "weights": [
                {"rows": w.shape[0], "cols": w.shape[1], "data": [float(x) for x in w.ravel()]}
                for w in self.weights
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "GcnModel":
        with open(path) as fh:
            obj = json.load(fh)
        if obj.get("format") != MODEL_FORMAT or obj.get("version") != MODEL_VERSION:
            raise ShapeMismatch(f"{path}: not a version {MODEL_VERSION} model file")
        cfg = GcnConfig(**obj["config"])
        weights = []
        for w in obj["weights"]:
            data = np.asarray(w["data"], dtype=np.float64)
            if data.size != w["rows"] * w["cols"]:
                raise ShapeMismatch(f"{path}: weight payload size mismatch")
            weights.append(data.reshape(w["rows"], w["cols"]))
        return cls(cfg, weights, obj["kernel"])


def check_weight_shapes(cfg: GcnConfig, weights) -> None:
    dims = cfg.dims
    if len(weights) != len(dims) - 1:
        raise ShapeMismatch(f"{len(weights)} weight matrices for {cfg.num_layers} layers")
    for l, (w, a, b) in enumerate(zip(weights, dims[:-1], dims[1:])):
        if w.shape != (a, b):
            raise ShapeMismatch(f"layer {l} weight {w.shape}, expected {(a, b)}")


@dataclass(frozen=True, eq=False)
class Embeddings:
    values: np.ndarray
    node_ids: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite embeddings")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def write_csv(self, path, labels=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node"] + [f"e{i}" for i in range(self.dim)])
            for nid, row in zip(self.node_ids, self.values):
                label = labels[nid] if labels is not None else int(nid)
                w.writerow([label] + [repr(float(x)) for x in row])


def _propagate(kernel, x, weights):
    """Forward pass; returns output and per-layer (K h, pre-activation) caches."""
    h = x
    caches = []
    for l, w in enumerate(weights):
        kh = kernel @ h
        a = kh @ w
        caches.append((kh, a))
        h = a if l == len(weights) - 1 else np.maximum(a, 0.0)
    return h, caches


def forward(model: GcnModel, features, kernel=None) -> Embeddings:
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    k = model.kernel_matrix if kernel is None else kernel
    if x.shape[1] != model.config.in_channels:
        raise ShapeMismatch(f"features have {x.shape[1]} columns, model expects {model.config.in_channels}")
    if k is None or k.shape != (x.shape[0], x.shape[0]):
        raise ShapeMismatch("kernel missing or not n x n")
    z, _ = _propagate(k, x, model.weights)
    return Embeddings(z, np.arange(x.shape[0]))


def positive_pairs(g: TemporalGraph) -> np.ndarray:
    """Distinct undirected non-loop pairs (i < j) that share an edge."""
    lo = np.minimum(g.src, g.dst)
    hi = np.maximum(g.src, g.dst)
    keep = lo != hi
    pairs = np.unique(np.column_stack([lo[keep], hi[keep]]), axis=0)
    return pairs.astype(np.int64).reshape(-1, 2)


def negative_pairs(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    i = rng.integers(n, size=m)
    j = rng.integers(n - 1, size=m)
    j = j + (j >= i)
    return np.column_stack([i, j])


def _softplus(x):
    return np.logaddexp(0.0, x)


def reconstruction_loss(z, pos, neg):
    """Mean BCE of sigmoid(z_i . z_j) against 1 for pos pairs, 0 for neg pairs.

    Returns the loss and dL/dz.
    """
    pairs = np.vstack([pos, neg])
    y = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
    zi, zj = z[pairs[:, 0]], z[pairs[:, 1]]
    logit = np.einsum("ij,ij->i", zi, zj)
    m = len(pairs)
    loss = float(np.sum(_softplus(logit) - y * logit) / m)
    g = (1.0 / (1.0 + np.exp(-logit)) - y) / m
    dz = np.zeros_like(z)
    np.add.at(dz, pairs[:, 0], g[:, None] * zj)
    np.add.at(dz, pairs[:, 1], g[:, None] * zi)
    return loss, dz


def loss_and_grads(kernel, x, weights, pos, neg):
    z, caches = _propagate(kernel, x, weights)
    loss, d = reconstruction_loss(z, pos, neg)
    grads = [None] * len(weights)
    kt = kernel.T.tocsr()
    for l in range(len(weights) - 1, -1, -1):
        kh, a = caches[l]
        if l < len(weights) - 1:
            d = d * (a > 0)
        grads[l] = kh.T @ d
        if l:
            d = kt @ (d @ weights[l].T)
    return loss, grads, z


def edge_auc(z, pos, neg) -> float:
    """Rank AUC of decoder logits, positives vs negatives (ties count half)."""
    if len(pos) == 0 or len(neg) == 0:
        return float("nan")
    sp = np.einsum("ij,ij->i", z[pos[:, 0]], z[pos[:, 1]])
    sn = np.einsum("ij,ij->i", z[neg[:, 0]], z[neg[:, 1]])
    allv = np.r_[sp, sn]
    order = allv.argsort(kind="mergesort")
    ranks = np.empty(len(allv))
    sorted_v = allv[order]
    # average ranks over ties
    uniq, start, counts = np.unique(sorted_v, return_index=True, return_counts=True)
    avg = start + (counts + 1) / 2.0
    ranks[order] = np.repeat(avg, counts)
    r_pos = ranks[: len(sp)].sum()
    return float((r_pos - len(sp) * (len(sp) + 1) / 2) / (len(sp) * len(sn)))


@dataclass
class TrainReport:
    loss_per_epoch: list[float]
    wall_time: float
    final_loss: float | None
    kernel_nodes: int
    reconstruction_auc: float | None = None

    def to_json(self, with_time: bool = True) -> dict:
        d = asdict(self)
        if not with_time:
            d.pop("wall_time")
        return d


def train_unsupervised(g: TemporalGraph, features, cfg: GcnConfig, kernel: str = "sym_adj",
                       trw_cfg: TrwConfig | None = None) -> tuple[GcnModel, TrainReport]:
    """Full-batch gradient descent on edge reconstruction BCE with fresh,
    seeded negatives each epoch."""
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    if x.shape != (g.num_nodes, cfg.in_channels):
        raise ShapeMismatch(f"features {x.shape} vs graph of {g.num_nodes} nodes, {cfg.in_channels} channels")
    t0 = time.perf_counter()
    k = build_kernel(g, kernel, trw_cfg)
    weights = init_weights(cfg)
    pos = positive_pairs(g)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x0E6]))
    losses = []
    n = g.num_nodes
    if n >= 2 and len(pos):
        for epoch in range(cfg.epochs):
            neg = negative_pairs(n, len(pos), rng)
            loss, grads, _ = loss_and_grads(k, x, weights, pos, neg)
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch, loss)
            losses.append(loss)
            weights = [w - cfg.learning_rate * gw for w, gw in zip(weights, grads)]
    else:
        # nothing to reconstruct; keep the loss history length = epochs
        losses = [0.0] * cfg.epochs
    model = GcnModel(cfg, weights, kernel, k)
    auc = None
    if n >= 2 and len(pos):
        z, _ = _propagate(k, x, weights)
        auc = edge_auc(z, pos, negative_pairs(n, len(pos), np.random.default_rng([cfg.seed, 0xA1C])))
    report = TrainReport(losses, time.perf_counter() - t0, losses[-1] if losses else None, n, auc)
    return model, report


def train_on_corpus_nodes(g: TemporalGraph, features, corpus: WalkCorpus, cfg: GcnConfig,
                          kernel: str = "trw", trw_cfg: TrwConfig | None = None):
    """Train on the subgraph induced by corpus nodes, embed every node.

    Corpus nodes take their embeddings from the subgraph forward pass;
    the rest from one forward pass over the full-graph kernel.
    """
    nodes = corpus.nodes
    if len(nodes) == 0:
        raise EmptyCorpus("corpus visits no nodes")
    x = np.asarray(getattr(features, "values", features), dtype=np.float64)
    sub, mapping = induce_subgraph(g, nodes)
    model, report = train_unsupervised(sub, x[mapping], cfg, kernel, trw_cfg)
    sub_z = forward(model, x[mapping]).values
    if len(nodes) < g.num_nodes:
        full_k = build_kernel(g, kernel, trw_cfg)
        z = forward(model, x, full_k).values.copy()
    else:
        z = np.empty((g.num_nodes, cfg.out_channels))
    z[mapping] = sub_z
    return model, report, Embeddings(z, np.arange(g.num_nodes))


def gradient_check(cfg: GcnConfig, tiny_graph: TemporalGraph, kernel: str = "sym_adj",
                   trw_cfg: TrwConfig | None = None, step: float = 1e-5) -> float:
    """Max relative error between analytic weight gradients and central
    differences at a seeded point (no training step is taken)."""
    if tiny_graph.num_nodes > 12:
        raise ConfigInvalid("gradient_check is meant for graphs of <= 12 nodes")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x6C4]))
    n = tiny_graph.num_nodes
    x = rng.normal(size=(n, cfg.in_channels))
    k = build_kernel(tiny_graph, kernel, trw_cfg)
    weights = init_weights(cfg)
    pos = positive_pairs(tiny_graph)
    neg = negative_pairs(n, max(1, len(pos)), rng)
    _, grads, _ = loss_and_grads(k, x, weights, pos, neg)
    worst = 0.0
    for l, w in enumerate(weights):
        for idx in np.ndindex(w.shape):
            plus = [v.copy() for v in weights]
            minus = [v.copy() for v in weights]
            plus[l][idx] += step
            minus[l][idx] -= step
            fp = reconstruction_loss(_propagate(k, x, plus)[0], pos, neg)[0]
            fm = reconstruction_loss(_propagate(k, x, minus)[0], pos, neg)[0]
            num = (fp - fm) / (2 * step)
            ana = grads[l][idx]
            denom = max(abs(num), abs(ana), 1e-8)
            worst = max(worst, abs(num - ana) / denom)
    return worst
