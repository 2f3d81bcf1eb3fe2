"""Unsupervised detectors over node embeddings: DBSCAN, one-class SVM,
isolation forest and LOF, all exact and deterministic."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist
from scipy.special import digamma

from .errors import ConfigInvalid, DegenerateDistances, NoConvergence

METHODS = ("dbscan", "ocsvm", "isoforest", "lof")
_MEDIAN_SAMPLE = 4000
_BLOCK = 1024


def _points(points) -> np.ndarray:
    x = np.asarray(getattr(points, "values", points), dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigInvalid(f"expected a non-empty n x d point matrix, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class DbscanParams:
    eps: float | None = None  # None: half the median pairwise distance
    min_pts: int = 5


@dataclass(frozen=True)
class OcsvmParams:
    nu: float = 0.05
    gamma: float | None = None  # None: 1 / d
    max_iter: int = 100_000
    tol: float = 1e-3


@dataclass(frozen=True)
class IsoForestParams:
    num_trees: int = 100
    subsample_size: int = 256
    seed: int = 0
    threshold: float = 0.6


@dataclass(frozen=True)
class LofParams:
    k_neighbors: int = 20
    threshold: float = 1.5


@dataclass(frozen=True)
class DetectorConfig:
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    ocsvm: OcsvmParams = field(default_factory=OcsvmParams)
    isoforest: IsoForestParams = field(default_factory=IsoForestParams)
    lof: LofParams = field(default_factory=LofParams)

    def __post_init__(self):
        d, o, f, l = self.dbscan, self.ocsvm, self.isoforest, self.lof
        if d.eps is not None and not d.eps > 0:
            raise ConfigInvalid("dbscan eps must be > 0")
        if d.min_pts < 1:
            raise ConfigInvalid("dbscan min_pts must be >= 1")
        if not 0 < o.nu <= 1:
            raise ConfigInvalid("ocsvm nu must be in (0, 1]")
        if o.gamma is not None and not o.gamma > 0:
            raise ConfigInvalid("ocsvm gamma must be > 0")
        if o.max_iter < 1 or not o.tol > 0:
            raise ConfigInvalid("ocsvm max_iter and tol must be positive")
        if f.num_trees < 1 or f.subsample_size < 2:
            raise ConfigInvalid("isoforest needs >= 1 tree and subsample >= 2")
        if l.k_neighbors < 1:
            raise ConfigInvalid("lof k must be >= 1")


@dataclass(frozen=True, eq=False)
class DetectionResult:
    method: str
    labels: np.ndarray  # True = anomalous
    scores: np.ndarray  # higher = more anomalous
    params: dict
    threshold: float
    converged: bool = True

    @property
    def num_anomalies(self) -> int:
        return int(self.labels.sum())

    def anomalies(self) -> list[tuple[int, float]]:
        """Anomalous nodes by descending score, ties broken by node id."""
        idx = np.flatnonzero(self.labels)
        order = sorted(idx, key=lambda v: (-self.scores[v], v))
        return [(int(v), float(self.scores[v])) for v in order]

    def report(self, labels=None) -> dict:
        return {
            "method": self.method,
            "params": self.params,
            "threshold": self.threshold,
            "num_anomalies": self.num_anomalies,
            "anomalies": [
                {"node": labels[v] if labels is not None else v, "score": s}
                for v, s in self.anomalies()
            ],
        }

    def write_json(self, path, labels=None) -> None:
        with open(path, "w") as fh:
            json.dump(self.report(labels), fh, indent=2, sort_keys=True)
            fh.write("\n")


# --- DBSCAN -----------------------------------------------------------------

def median_pairwise_distance(x: np.ndarray) -> float:
    # large inputs use a fixed-stride subset so the default stays O(n)
    if len(x) > _MEDIAN_SAMPLE:
        x = x[:: math.ceil(len(x) / _MEDIAN_SAMPLE)]
    if len(x) < 2:
        return 0.0
    return float(np.median(pdist(x)))


def dbscan(points, eps: float | None = None, min_pts: int = 5) -> DetectionResult:
    x = _points(points)
    n = len(x)
    if eps is None:
        eps = 0.5 * median_pairwise_distance(x)
        if eps <= 0:
            raise DegenerateDistances("all points coincide; DBSCAN eps cannot be derived")
    if not eps > 0 or min_pts < 1:
        raise ConfigInvalid("dbscan needs eps > 0 and min_pts >= 1")
    tree = cKDTree(x)
    hoods = tree.query_ball_point(x, r=eps)
    core = np.array([len(h) >= min_pts for h in hoods], dtype=bool)

    cluster = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for p in range(n):
        if not core[p] or cluster[p] >= 0:
            continue
        cluster[p] = next_id
        stack = [p]
        while stack:
            q = stack.pop()
            for o in sorted(hoods[q]):
                if cluster[o] < 0:
                    cluster[o] = next_id
                    if core[o]:
                        stack.append(o)
        next_id += 1

    if core.any():
        dist, _ = cKDTree(x[core]).query(x, k=1)
    else:
        # no core point anywhere: fall back to nearest-neighbour distance
        dist = tree.query(x, k=2)[0][:, 1] if n > 1 else np.zeros(1)
    scores = np.where(core, 0.0, dist)
    labels = cluster < 0
    params = {"eps": float(eps), "min_pts": int(min_pts), "num_clusters": int(next_id)}
    res = DetectionResult("dbscan", labels, scores, params, float(eps))
    object.__setattr__(res, "clusters", cluster)
    return res


# --- one-class SVM ------------------------------------------------------------

def _rbf_column(x, sq, i, gamma):
    d2 = np.maximum(sq + sq[i] - 2.0 * (x @ x[i]), 0.0)
    return np.exp(-gamma * d2)


def one_class_svm(points, nu: float = 0.05, gamma: float | None = None,
                  max_iter: int = 100_000, tol: float = 1e-3, strict: bool = False) -> DetectionResult:
    """SMO on the dual  min 1/2 a'Qa  s.t. 0 <= a_i <= 1, sum a = nu*n,
    with maximal-violating-pair selection. decision(x) = sum a_i K(x_i, x) - rho."""
    x = _points(points)
    n, d = x.shape
    gamma = 1.0 / d if gamma is None else float(gamma)
    if not 0 < nu <= 1 or not gamma > 0:
        raise ConfigInvalid("ocsvm needs nu in (0, 1] and gamma > 0")
    sq = np.einsum("ij,ij->i", x, x)

    total = nu * n
    alpha = np.zeros(n)
    full = int(math.floor(total))
    alpha[:full] = 1.0
    if full < n:
        alpha[full] = total - full
    grad = np.zeros(n)
    for i in np.flatnonzero(alpha):
        grad += alpha[i] * _rbf_column(x, sq, i, gamma)

    converged = False
    it = 0
    for it in range(max_iter):
        up = alpha < 1.0
        low = alpha > 0.0
        neg = -grad
        i = int(np.argmax(np.where(up, neg, -np.inf)))
        j = int(np.argmin(np.where(low, neg, np.inf)))
        if neg[i] - neg[j] < tol:
            converged = True
            break
        qi = _rbf_column(x, sq, i, gamma)
        qj = _rbf_column(x, sq, j, gamma)
        curv = max(qi[i] + qj[j] - 2.0 * qi[j], 1e-12)
        step = (grad[j] - grad[i]) / curv
        step = min(step, 1.0 - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        grad += step * (qi - qj)

    free = (alpha > 0) & (alpha < 1)
    if free.any():
        rho = float(grad[free].mean())
    else:
        rho = 0.5 * (grad[alpha < 1].max(initial=-np.inf) + grad[alpha > 0].min(initial=np.inf))
        if not np.isfinite(rho):
            rho = float(grad.mean())
    decision = grad - rho
    params = {"nu": float(nu), "gamma": gamma, "max_iter": int(max_iter), "tol": float(tol),
              "iterations": int(it + 1 if not converged else it), "rho": rho,
              "num_support_vectors": int((alpha > 0).sum())}
    if not converged:
        msg = f"ocsvm did not converge in {max_iter} iterations"
        if strict:
            raise NoConvergence(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    # outliers are the bounded support vectors; at the optimum these are the
    # points with decision < 0, but the bound is exact where the sign of a
    # margin vector's decision is only known up to tol
    bounded = alpha >= 1.0 - 1e-9
    return DetectionResult("ocsvm", bounded, -decision, params, 0.0, converged)


# --- isolation forest ---------------------------------------------------------

def average_path_length(m) -> np.ndarray:
    """c(m) = 2 H(m-1) - 2 (m-1)/m, with H via digamma; c(1) = 0, c(2) = 1."""
    m = np.asarray(m, dtype=np.float64)
    out = np.zeros_like(m)
    big = m > 1
    mb = m[big]
    out[big] = 2.0 * (digamma(mb) + np.euler_gamma) - 2.0 * (mb - 1.0) / mb
    return out


def _grow(x, rng, limit):
    # nodes as parallel lists: feature, split, left, right, size, depth
    feat, split, left, right, size, depth = [], [], [], [], [], []

    def node(idx, h):
        k = len(feat)
        feat.append(-1); split.append(0.0); left.append(-1); right.append(-1)
        size.append(len(idx)); depth.append(h)
        if h >= limit or len(idx) <= 1:
            return k
        sub = x[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        live = np.flatnonzero(hi > lo)
        if len(live) == 0:
            return k
        q = int(live[rng.integers(len(live))])
        s = lo[q] + rng.random() * (hi[q] - lo[q])
        go_left = sub[:, q] < s
        feat[k], split[k] = q, s
        left[k] = node(idx[go_left], h + 1)
        right[k] = node(idx[~go_left], h + 1)
        return k

    node(np.arange(len(x)), 0)
    return (np.array(feat), np.array(split), np.array(left), np.array(right),
            np.array(size), np.array(depth))


def _path_lengths(tree, x):
    feat, split, left, right, size, depth = tree
    out = np.empty(len(x))
    todo = [(0, np.arange(len(x)))]
    while todo:
        k, idx = todo.pop()
        if feat[k] < 0:
            out[idx] = depth[k] + average_path_length(size[k])
            continue
        mask = x[idx, feat[k]] < split[k]
        todo.append((left[k], idx[mask]))
        todo.append((right[k], idx[~mask]))
    return out


def isolation_forest(points, cfg: IsoForestParams = IsoForestParams()) -> DetectionResult:
    x = _points(points)
    n = len(x)
    psi = min(cfg.subsample_size, n)
    if psi < 2:
        raise ConfigInvalid("isolation forest needs at least two points")
    limit = int(math.ceil(math.log2(psi)))
    paths = np.zeros(n)
    for t in range(cfg.num_trees):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, t]))
        sample = np.sort(rng.choice(n, size=psi, replace=False))
        paths += _path_lengths(_grow(x[sample], rng, limit), x)
    scores = 2.0 ** (-(paths / cfg.num_trees) / float(average_path_length(psi)))
    params = {"num_trees": cfg.num_trees, "subsample_size": int(psi), "seed": cfg.seed}
    return DetectionResult("isoforest", scores > cfg.threshold, scores, params, cfg.threshold)


# --- LOF --------------------------------------------------------------------

def _knn_with_ties(x, k):
    """k-distance and tie-inclusive k-neighbourhoods (self excluded)."""
    n = len(x)
    kdist = np.empty(n)
    hoods = []
    for a in range(0, n, _BLOCK):
        d = cdist(x[a:a + _BLOCK], x)
        rows = np.arange(d.shape[0])
        d[rows, rows + a] = np.inf
        kd = np.partition(d, k - 1, axis=1)[:, k - 1]
        kdist[a:a + _BLOCK] = kd
        for r in rows:
            nb = np.flatnonzero(d[r] <= kd[r])
            hoods.append((nb, d[r, nb]))
    return kdist, hoods


def local_outlier_factor(x: np.ndarray, k: int) -> np.ndarray:
    kdist, hoods = _knn_with_ties(x, k)
    # tiny offset keeps lrd finite when >= k duplicates share a point
    lrd = np.array([1.0 / (np.maximum(kdist[nb], dd).mean() + 1e-10) for nb, dd in hoods])
    return np.array([lrd[nb].mean() / lrd[p] for p, (nb, _) in enumerate(hoods)])


def lof(points, k: int = 20, threshold: float = 1.5) -> DetectionResult:
    x = _points(points)
    n = len(x)
    if not 1 <= k < n:
        raise ConfigInvalid(f"lof needs 1 <= k < n, got k={k}, n={n}")
    if np.all(x == x[0]):
        raise DegenerateDistances("all points are identical")
    scores = local_outlier_factor(x, k)
    params = {"k_neighbors": int(k)}
    return DetectionResult("lof", scores > threshold, scores, params, float(threshold))


def run_all(points, cfg: DetectorConfig = DetectorConfig()) -> list[DetectionResult]:
    x = _points(points)
    k = min(cfg.lof.k_neighbors, len(x) - 1)
    return [
        dbscan(x, cfg.dbscan.eps, cfg.dbscan.min_pts),
        one_class_svm(x, cfg.ocsvm.nu, cfg.ocsvm.gamma, cfg.ocsvm.max_iter, cfg.ocsvm.tol),
        isolation_forest(x, cfg.isoforest),
        lof(x, k, cfg.lof.threshold),
    ]


def config_dict(cfg: DetectorConfig) -> dict:
    return asdict(cfg)
