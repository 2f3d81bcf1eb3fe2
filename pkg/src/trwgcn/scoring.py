"""Walk-frequency-weighted z-scores and distance-based temporal sensitivity."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, NodeSetMismatch

MODES = ("last_dim", "mean_dims")


@dataclass(frozen=True)
class ScoreConfig:
    threshold: float = 2.0
    delta_sensitivity: float = 0.0
    dimension_reduction: str = "last_dim"

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigInvalid("threshold must be > 0")
        if self.delta_sensitivity < 0:
            raise ConfigInvalid("delta_sensitivity must be >= 0")
        if self.dimension_reduction not in MODES:
            raise ConfigInvalid(f"unknown mode {self.dimension_reduction!r}")


@dataclass(frozen=True)
class AnomalyScore:
    node: int
    z: float
    freq: float
    score: float
    flagged: bool


def _values(emb) -> np.ndarray:
    return np.asarray(getattr(emb, "values", emb), dtype=np.float64)


def embedding_scalar(emb, mode: str = "last_dim") -> np.ndarray:
    v = _values(emb)
    if mode == "last_dim":
        return v[:, -1]
    if mode == "mean_dims":
        return v.mean(axis=1)
    raise ConfigInvalid(f"unknown mode {mode!r}")


def zscores(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd <= 1e-12 * max(1.0, abs(float(x.mean()))):
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def score_nodes(emb, corpus, cfg: ScoreConfig = ScoreConfig()) -> list[AnomalyScore]:
    """S(v) = z(scalar embedding of v) * freq(v); flagged when |S| > threshold."""
    freq = np.asarray(getattr(corpus, "freq", corpus), dtype=np.float64)
    scalar = embedding_scalar(emb, cfg.dimension_reduction)
    if len(freq) != len(scalar):
        raise NodeSetMismatch(f"{len(scalar)} embeddings vs {len(freq)} walk frequencies")
    z = zscores(scalar)
    s = z * freq
    return [
        AnomalyScore(v, float(z[v]), float(freq[v]), float(s[v]), bool(abs(s[v]) > cfg.threshold))
        for v in range(len(s))
    ]


def flagged_nodes(scores: list[AnomalyScore]) -> list[int]:
    return [s.node for s in scores if s.flagged]


def distance_score(emb) -> np.ndarray:
    """Euclidean distance of each embedding to the mean embedding."""
    v = _values(emb)
    if v.shape[0] < 2:
        raise ValueError("distance_score needs at least two points")
    return np.linalg.norm(v - v.mean(axis=0), axis=1)


@dataclass(frozen=True)
class SensitivityGain:
    node: int
    gain: float
    significant: bool


def temporal_sensitivity(emb_trw, emb_plain, delta: float = 0.0) -> list[SensitivityGain]:
    a, b = _values(emb_trw), _values(emb_plain)
    if a.shape != b.shape:
        raise NodeSetMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    gain = distance_score(a) - distance_score(b)
    return [SensitivityGain(v, float(x), bool(x > delta)) for v, x in enumerate(gain)]


def score_report(scores: list[AnomalyScore], cfg: ScoreConfig, csv_path, labels=None) -> dict:
    """Report dict for flagged nodes and a companion CSV of every score."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "z", "freq", "score", "flagged"])
        for s in scores:
            w.writerow([labels[s.node] if labels else s.node, repr(s.z), repr(s.freq), repr(s.score), int(s.flagged)])
    flagged = sorted((s for s in scores if s.flagged), key=lambda s: (-abs(s.score), s.node))
    return {
        "threshold": cfg.threshold,
        "mode": cfg.dimension_reduction,
        "flagged": [
            {"node": labels[s.node] if labels else s.node, "z": s.z, "freq": s.freq, "score": s.score}
            for s in flagged
        ],
        "all_scores_csv": str(csv_path),
    }


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
