"""Laplacian spectra, graph Fourier energy, sampled-graph convergence and
embedding alignment."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (ConfigInvalid, NoConvergence, NotSymmetric, ShapeMismatch,
                     SubgraphTooSmall, TooFewSharedNodes)
from .graph_core import TemporalGraph, adjacency, normalized_laplacian
from .sampler import TrwConfig, induce_subgraph, probabilistic_sample, walk_node_sample

MAX_SWEEPS = 100
OFF_TOL = 1e-12
SYM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float
    sweeps: int = 0

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def orthonormality_error(self) -> float:
        u = self.eigenvectors
        return float(np.abs(u.T @ u - np.eye(self.n)).max()) if self.n else 0.0


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """m - 1 rounds of m/2 disjoint pairs covering every pair once (m even)."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def eig_symmetric(m, max_sweeps: int = MAX_SWEEPS, tol: float = OFF_TOL) -> SpectralSummary:
    """Cyclic Jacobi with parallel (round-robin) ordering.

    Each round applies n/2 disjoint rotations at once, which is the same
    sweep structure as the row-cyclic method, just vectorised. Stops when
    the off-diagonal Frobenius norm drops below tol * max(1, ||m||_F).
    """
    a = np.array(m, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got {a.shape}")
    n = a.shape[0]
    if n and np.abs(a - a.T).max() > SYM_TOL:
        raise NotSymmetric(f"asymmetry {np.abs(a - a.T).max():.3e} exceeds {SYM_TOL}")
    a = 0.5 * (a + a.T)
    orig = a.copy()
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))

    def off(x):
        # direct sum; ||x||^2 - sum(diag^2) cancels catastrophically
        return float(np.linalg.norm(x - np.diag(np.diag(x))))

    sweeps = 0
    if n > 1:
        size = n + (n % 2)
        rounds = []
        for p, q in _round_robin(size):
            keep = q < n  # the padding index pairs with nobody
            rounds.append((p[keep], q[keep]))
        while off(a) >= tol * scale:
            if sweeps >= max_sweeps:
                raise NoConvergence(f"Jacobi not converged after {max_sweeps} sweeps (off={off(a):.3e})")
            for p, q in rounds:
                apq = a[p, q]
                live = np.abs(apq) > 1e-300
                if not live.any():
                    continue
                p, q, apq = p[live], q[live], apq[live]
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t[theta == 0] = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c[:, None] * ap - s[:, None] * aq
                a[q, :] = s[:, None] * ap + c[:, None] * aq
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = ap * c - aq * s
                a[:, q] = ap * s + aq * c
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = vp * c - vq * s
                v[:, q] = vp * s + vq * c
            sweeps += 1

    lam = np.diag(a).copy()
    order = np.argsort(lam, kind="stable")
    lam, v = lam[order], v[:, order]
    resid = float(np.abs(orig @ v - v * lam).max()) if n else 0.0
    return SpectralSummary(lam, v, resid, sweeps)


def laplacian_spectrum(g: TemporalGraph, weighting: str = "count") -> SpectralSummary:
    return eig_symmetric(normalized_laplacian(adjacency(g, weighting)))


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    signal: np.ndarray
    spectrum: np.ndarray
    cumulative_energy: np.ndarray

    def fraction_below(self, k: int) -> float:
        """Energy share of the k lowest-frequency modes."""
        if k <= 0:
            return 0.0
        return float(self.cumulative_energy[min(k, len(self.cumulative_energy)) - 1])

    def parseval_error(self) -> float:
        return abs(float(np.linalg.norm(self.spectrum) - np.linalg.norm(self.signal)))


def energy_profile(summary: SpectralSummary, signal) -> EnergyProfile:
    s = np.asarray(signal, dtype=np.float64)
    if s.shape != (summary.n,):
        raise ShapeMismatch(f"signal of shape {s.shape} for a {summary.n}-node spectrum")
    hat = summary.eigenvectors.T @ s
    e = hat * hat
    total = e.sum()
    if total <= 0:
        raise ConfigInvalid("zero signal has no energy profile")
    cum = np.cumsum(e) / total
    cum[-1] = 1.0 if abs(cum[-1] - 1.0) < 1e-12 else cum[-1]
    return EnergyProfile(s, hat, cum)


def write_energy_csv(summary: SpectralSummary, profile: EnergyProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "cumulative_energy"])
        for i, (lam, c) in enumerate(zip(summary.eigenvalues, profile.cumulative_energy)):
            w.writerow([i, repr(float(lam)), repr(float(c))])


def spectral_distance(full: np.ndarray, sub: np.ndarray) -> float:
    """L2 distance after interpolating `sub` onto len(full) quantile points."""
    full = np.sort(np.asarray(full, dtype=np.float64))
    sub = np.sort(np.asarray(sub, dtype=np.float64))
    if len(sub) == 0 or len(full) == 0:
        raise ConfigInvalid("spectral distance needs non-empty spectra")
    grid = np.linspace(0.0, 1.0, len(full))
    if len(sub) == 1:
        interp = np.full(len(full), sub[0])
    else:
        interp = np.interp(grid, np.linspace(0.0, 1.0, len(sub)), sub)
    return float(np.linalg.norm(full - interp))


@dataclass(frozen=True)
class ConvergenceCurve:
    fractions: tuple[float, ...]
    distances: tuple[float, ...]
    per_seed: tuple[tuple[float, ...], ...]
    seeds_averaged: int

    def to_json(self) -> dict:
        return {
            "fractions": list(self.fractions),
            "mean_distances": list(self.distances),
            "per_seed_distances": [list(r) for r in self.per_seed],
            "seeds_averaged": self.seeds_averaged,
        }


def convergence_curve(g: TemporalGraph, features, omega, fractions: Sequence[float],
                      seeds: int = 10, weighting: str = "count") -> ConvergenceCurve:
    fr = [float(f) for f in fractions]
    if not fr or any(b <= a for a, b in zip(fr, fr[1:])) or fr[-1] != 1.0 or fr[0] <= 0:
        raise ConfigInvalid("fractions must ascend in (0, 1] and end at 1.0")
    if seeds < 1:
        raise ConfigInvalid("seeds must be >= 1")
    n = g.num_nodes
    full = laplacian_spectrum(g, weighting).eigenvalues
    rows = []
    for f in fr:
        m = min(n, max(1, math.ceil(f * n - 1e-9)))
        row = []
        for s in range(seeds):
            # sorted, so the full sample reproduces the original matrix exactly
            nodes = sorted(probabilistic_sample(features, omega, m, seed=s))
            sub, _ = induce_subgraph(g, nodes)
            row.append(spectral_distance(full, laplacian_spectrum(sub, weighting).eigenvalues))
        rows.append(tuple(row))
    means = tuple(float(np.mean(r)) for r in rows)
    return ConvergenceCurve(tuple(fr), means, tuple(rows), seeds)


def latest_timestamp_signal(g: TemporalGraph) -> np.ndarray:
    """Each node's latest transaction timestamp (sources and targets)."""
    t = np.full(g.num_nodes, np.iinfo(np.int64).min, dtype=np.int64)
    np.maximum.at(t, g.src, g.timestamp)
    np.maximum.at(t, g.dst, g.timestamp)
    t[t == np.iinfo(np.int64).min] = g.timestamp.min() if g.num_edges else 0
    return t.astype(np.float64)


def _standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else x - x.mean()


def low_frequency_energy(g: TemporalGraph, signal: np.ndarray, k_fraction: float,
                         weighting: str = "count") -> float:
    summary = laplacian_spectrum(g, weighting)
    s = _standardize(np.asarray(signal, dtype=np.float64))
    if not np.any(s):
        return 1.0  # a constant signal has no variation to misplace
    k = math.ceil(k_fraction * summary.n - 1e-9)
    return energy_profile(summary, s).fraction_below(k)


@dataclass(frozen=True)
class SmoothnessResult:
    trw_energy: float
    rw_energy: float
    per_seed: tuple[tuple[float, float], ...] = field(default_factory=tuple)
    sample_size: int = 0
    k_fraction: float = 0.2

    def wins(self) -> int:
        return sum(a >= b for a, b in self.per_seed)

    def to_json(self) -> dict:
        return {
            "trw_energy": self.trw_energy, "rw_energy": self.rw_energy,
            "per_seed": [list(p) for p in self.per_seed],
            "sample_size": self.sample_size, "k_fraction": self.k_fraction,
            "trw_wins": self.wins(),
        }


def smoothness_comparison(g: TemporalGraph, trw_cfg: TrwConfig, rw_cfg: TrwConfig | None = None,
                          signal_fn: Callable[[TemporalGraph], np.ndarray] | None = None,
                          k_fraction: float = 0.2, seeds: int = 10,
                          sample_size: int | None = None) -> SmoothnessResult:
    """Low-spectrum energy share of a node signal on TRW- vs plain-walk samples.

    Both samplers take the first `sample_size` distinct nodes visited by a
    seeded walk stream (default half the graph); seed s uses cfg.seed + s.
    """
    if not 0 < k_fraction <= 1:
        raise ConfigInvalid("k_fraction must be in (0, 1]")
    rw_cfg = rw_cfg or trw_cfg
    m = sample_size or max(3, g.num_nodes // 2)
    if m < 3 or g.num_nodes < 3:
        raise SubgraphTooSmall(f"need at least 3 nodes, got {min(m, g.num_nodes)}")
    signal = (signal_fn or latest_timestamp_signal)(g)
    pairs = []
    for s in range(seeds):
        out = []
        for cfg, temporal in ((trw_cfg, True), (rw_cfg, False)):
            c = TrwConfig(cfg.alpha, cfg.lambda_decay, cfg.num_walks, cfg.walk_length,
                          cfg.seed + s, cfg.direction)
            nodes = sorted(walk_node_sample(g, m, c, temporal=temporal))
            sub, mapping = induce_subgraph(g, nodes)
            out.append(low_frequency_energy(sub, signal[mapping], k_fraction))
        pairs.append(tuple(out))
    arr = np.array(pairs)
    return SmoothnessResult(float(arr[:, 0].mean()), float(arr[:, 1].mean()), tuple(pairs), m, k_fraction)


def procrustes_rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Orthogonal R minimising ||b R - a||_F."""
    u, _, vt = np.linalg.svd(b.T @ a)
    return u @ vt


def embedding_alignment(emb_full, emb_sampled, shared_nodes=None) -> float:
    """Mean |cosine| between rows after aligning emb_sampled onto emb_full.

    With shared_nodes given as (full_ids, sampled_ids), only those row pairs
    are compared; otherwise rows correspond one-to-one.
    """
    a = np.asarray(getattr(emb_full, "values", emb_full), dtype=np.float64)
    b = np.asarray(getattr(emb_sampled, "values", emb_sampled), dtype=np.float64)
    if shared_nodes is not None:
        fi, si = (np.asarray(x, dtype=np.int64) for x in shared_nodes)
        a, b = a[fi], b[si]
    if a.shape != b.shape:
        raise ShapeMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise TooFewSharedNodes(f"{len(a)} shared nodes; need at least 2")
    br = b @ procrustes_rotation(a, b)
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(br, axis=1)
    ok = (na > 0) & (nb > 0)
    if not ok.any():
        return 0.0
    cos = np.einsum("ij,ij->i", a[ok], br[ok]) / (na[ok] * nb[ok])
    return float(np.clip(np.abs(cos), 0.0, 1.0).mean())


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
