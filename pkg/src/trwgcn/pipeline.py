"""End-to-end runs: features, walks, both GCN models, detectors, scoring,
and the files each run leaves behind."""

from __future__ import annotations

import hashlib
import json
import os
import time
import zlib
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import detectors as det
from .errors import ConfigInvalid, DataError, TrwGcnError
from .features import (FEATURE_NAMES, TEMPORAL_FEATURES, VOLUME_FEATURES, NodeFeatureMatrix,
                       extract_features, standardize, write_feature_csv)
from .gcn import Embeddings, GcnConfig, forward, train_on_corpus_nodes, train_unsupervised
from .graph_core import TemporalGraph, adjacency, build_graph, read_edge_csv
from .ingest import IngestConfig, fetch_block_range, read_fixture, to_edges
from .sampler import TrwConfig, WalkCorpus, build_corpus, write_corpus
from .scoring import ScoreConfig, score_nodes, score_report, temporal_sensitivity, write_json

KERNEL_NAMES = {"sym": "sym_adj", "trw": "trw"}
MANIFEST = "manifest.json"
VOLATILE = ("wall_times", "runtime")


def stage_seed(seed: int, stage: str) -> int:
    """Deterministic per-stage seed fanned out from the run seed."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stage.encode())])
    return int(ss.generate_state(1, np.uint32)[0])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    alpha: float = 0.5
    lambda_decay: float | None = None
    num_walks: int = 2000
    walk_length: int = 10
    direction: str = "out"
    hidden: int = 20
    out_dim: int = 8
    epochs: int = 100
    lr: float = 0.01
    kernel: str = "trw"  # model behind the feature distribution and DOT output
    threshold: float = 2.0
    mode: str = "last_dim"
    delta: float = 0.0
    detectors: det.DetectorConfig = field(default_factory=det.DetectorConfig)

    def __post_init__(self):
        if self.kernel not in KERNEL_NAMES:
            raise ConfigInvalid(f"kernel must be one of {sorted(KERNEL_NAMES)}")

    def trw(self, stage: str) -> TrwConfig:
        return TrwConfig(self.alpha, self.lambda_decay, self.num_walks, self.walk_length,
                         stage_seed(self.seed, stage), self.direction)

    def gcn(self, stage: str) -> GcnConfig:
        return GcnConfig(len(FEATURE_NAMES), self.hidden, self.out_dim, 2, self.epochs, self.lr,
                         "relu", stage_seed(self.seed, stage))

    def score(self) -> ScoreConfig:
        return ScoreConfig(self.threshold, self.delta, self.mode)

    def detector_config(self) -> det.DetectorConfig:
        iso = replace(self.detectors.isoforest, seed=stage_seed(self.seed, "isoforest"))
        return replace(self.detectors, isoforest=iso)

    def to_json(self) -> dict:
        d = asdict(self)
        d["detectors"] = asdict(self.detector_config())
        return d


@dataclass
class KernelRun:
    kernel: str
    corpus: WalkCorpus
    embeddings: Embeddings
    train: dict
    scores: list
    detections: list
    model: object = None


@dataclass
class PipelineResult:
    config: PipelineConfig
    features: NodeFeatureMatrix
    standardized: NodeFeatureMatrix
    runs: dict
    truth: frozenset | None
    wall_times: dict

    def flagged(self, kernel: str | None = None) -> list[int]:
        return [s.node for s in self.runs[kernel or self.config.kernel].scores if s.flagged]

    def comparison(self) -> list[dict]:
        """One row per (kernel, detector): the anomaly counts with and without TRW."""
        rows = []
        for k in ("sym", "trw"):
            for r in self.runs[k].detections:
                row = {"kernel": k, "method": r.method, "num_anomalies": r.num_anomalies,
                       "threshold": r.threshold}
                row.update(recovery(np.flatnonzero(r.labels), self.truth))
                rows.append(row)
        return rows

    def score_summary(self) -> list[dict]:
        out = []
        for k in ("sym", "trw"):
            flagged = self.flagged(k)
            row = {"kernel": k, "num_flagged": len(flagged)}
            row.update(recovery(flagged, self.truth))
            out.append(row)
        return out

    def feature_distribution(self, kernel: str | None = None) -> dict:
        return feature_distribution(self.features, self.standardized, self.flagged(kernel))

    def metrics(self) -> dict:
        m = {f"{r['kernel']}_walk_score": {k: v for k, v in r.items() if k != "kernel"}
             for r in self.score_summary()}
        fd = self.feature_distribution()
        m["flagged_temporal_mean_abs_z"] = fd["temporal_mean_abs_z"]
        m["flagged_volume_mean_abs_z"] = fd["volume_mean_abs_z"]
        return m


def recovery(found, truth) -> dict:
    if truth is None:
        return {}
    found = set(int(v) for v in found)
    tp = len(found & set(truth))
    return {
        "true_positives": tp,
        "recall": tp / len(truth) if truth else None,
        "precision": tp / len(found) if found else None,
    }


def feature_distribution(raw: NodeFeatureMatrix, z: NodeFeatureMatrix, nodes) -> dict:
    """Per-feature summary over flagged nodes (z is over all nodes)."""
    nodes = np.asarray(sorted(nodes), dtype=np.int64)
    per = {}
    for name in raw.names:
        col, zc = raw.column(name)[nodes], z.column(name)[nodes]
        per[name] = {
            "mean": float(col.mean()) if len(nodes) else None,
            "min": float(col.min()) if len(nodes) else None,
            "max": float(col.max()) if len(nodes) else None,
            "mean_z": float(zc.mean()) if len(nodes) else None,
            "mean_abs_z": float(np.abs(zc).mean()) if len(nodes) else None,
        }

    def group(names):
        if not len(nodes):
            return None
        return float(np.mean([per[n]["mean_abs_z"] for n in names]))

    return {
        "num_flagged": int(len(nodes)),
        "nodes": [int(v) for v in nodes],
        "features": per,
        "temporal_mean_abs_z": group(TEMPORAL_FEATURES),
        "volume_mean_abs_z": group(VOLUME_FEATURES),
    }


@contextmanager
def _timed(times: dict, stage: str):
    t0 = time.perf_counter()
    try:
        yield
    except TrwGcnError as exc:
        exc.args = (f"[{stage}] {exc}",) + exc.args[1:]
        raise
    finally:
        times[stage] = round(time.perf_counter() - t0, 6)


def _check_features(x: NodeFeatureMatrix) -> None:
    if x.n < 2:
        raise DataError("pipeline needs at least two nodes")


def run_pipeline(g: TemporalGraph, cfg: PipelineConfig = PipelineConfig(),
                 truth=None) -> PipelineResult:
    times: dict = {}
    with _timed(times, "features"):
        feats = extract_features(g)
        _check_features(feats)
        z = standardize(feats)
    runs = {}
    dcfg = cfg.detector_config()
    scfg = cfg.score()
    for k in ("sym", "trw"):
        with _timed(times, f"walks_{k}"):
            walk_cfg = cfg.trw(f"walks_{k}").resolved(g)
            # the plain model's walk frequencies come from time-blind walks
            corpus = build_corpus(g, walk_cfg, temporal=(k == "trw"))
        with _timed(times, f"train_{k}"):
            gcfg = cfg.gcn(f"gcn_{k}")
            if k == "trw":
                model, report, emb = train_on_corpus_nodes(g, z, corpus, gcfg, "trw", walk_cfg)
            else:
                model, report = train_unsupervised(g, z, gcfg, "sym_adj")
                emb = forward(model, z)
        with _timed(times, f"detect_{k}"):
            results = det.run_all(emb, dcfg)
        with _timed(times, f"score_{k}"):
            scores = score_nodes(emb, corpus, scfg)
        runs[k] = KernelRun(k, corpus, emb, report.to_json(with_time=False), scores, results, model)
    truth = frozenset(truth) if truth is not None else None
    return PipelineResult(cfg, feats, z, runs, truth, times)


# --- inputs -------------------------------------------------------------------

def load_graph(file: str | None = None, graph_csv: str | None = None,
               start: int | None = None, end: int | None = None) -> TemporalGraph:
    if (file is None) == (graph_csv is None):
        raise ConfigInvalid("give exactly one of a transaction fixture or an edge CSV")
    if graph_csv is not None:
        if not Path(graph_csv).is_file():
            raise DataError(f"edge CSV not found: {graph_csv}")
        rng = (start, end) if start is not None and end is not None else None
        return read_edge_csv(graph_csv, rng)
    txs = read_fixture(file)
    if start is not None or end is not None:
        lo = start if start is not None else min(t.block for t in txs)
        hi = end if end is not None else max(t.block for t in txs)
        txs = fetch_block_range(IngestConfig(lo, hi, "file", file_path=file))
    if not txs:
        raise DataError("no transactions in range")
    lo = start if start is not None else min(t.block for t in txs)
    hi = end if end is not None else max(t.block for t in txs)
    return build_graph(to_edges(txs), (lo, hi))


def load_truth(path, g: TemporalGraph) -> frozenset:
    with open(path) as fh:
        doc = json.load(fh)
    ids = {a: i for i, a in enumerate(g.addresses)}
    return frozenset(ids[a] for a in doc["anomalous_addresses"] if a in ids)


# --- outputs ------------------------------------------------------------------

def write_dot(g: TemporalGraph, flagged_scores: dict, path, max_neighbors: int = 25) -> None:
    """Flagged nodes, their busiest neighbours, and the collapsed edges between them."""
    a = adjacency(g, "count").tocoo()
    flagged = sorted(flagged_scores)
    keep = set(flagged)
    pairs = {}
    for s, d, c in zip(a.row, a.col, a.data):
        if s in flagged_scores or d in flagged_scores:
            pairs[(int(s), int(d))] = int(c)
    for v in flagged:
        nb = sorted(((c, u) for (s, d), c in pairs.items() for u in (s, d)
                     if v in (s, d) and u != v), key=lambda t: (-t[0], t[1]))
        keep.update(u for _, u in nb[:max_neighbors])
    with open(path, "w") as fh:
        fh.write("digraph transactions {\n  node [shape=circle, fontsize=8];\n")
        for v in sorted(keep):
            addr = g.addresses[v]
            addr = addr if len(addr) <= 14 else f"{addr[:6]}..{addr[-4:]}"
            if v in flagged_scores:
                fh.write(f'  n{v} [label="{addr}\\nS={flagged_scores[v]:.2f}", '
                         'style=filled, fillcolor=red, anomalous=true];\n')
            else:
                fh.write(f'  n{v} [label="{addr}"];\n')
        for (s, d), c in sorted(pairs.items()):
            if s in keep and d in keep:
                fh.write(f'  n{s} -> n{d} [label="{c}"];\n')
        fh.write("}\n")


def write_pipeline_outputs(res: PipelineResult, g: TemporalGraph, out_dir) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = list(g.addresses)
    written = []

    def track(name):
        written.append(name)
        return out / name

    write_feature_csv(res.features, track("features.csv"), labels)
    training = {}
    for k, run in res.runs.items():
        write_corpus(run.corpus, track(f"corpus_{k}.txt"))
        run.embeddings.write_csv(track(f"embeddings_{k}.csv"), labels)
        run.model.save(track(f"model_{k}.json"))
        for r in run.detections:
            r.write_json(track(f"detect_{k}_{r.method}.json"), labels)
        csv_name = f"scores_{k}.csv"
        rep = score_report(run.scores, res.config.score(), track(csv_name), labels)
        rep["all_scores_csv"] = csv_name
        rep["kernel"] = k
        write_json(rep, track(f"scores_{k}.json"))
        training[k] = run.train
    write_json(training, track("training.json"))

    comparison = {"rows": res.comparison(), "walk_score": res.score_summary(),
                  "mode": res.config.mode, "threshold": res.config.threshold}
    write_json(comparison, track("comparison.json"))

    fd = res.feature_distribution()
    fd["kernel"] = res.config.kernel
    fd["nodes"] = [labels[v] for v in fd["nodes"]]
    write_json(fd, track("feature_distribution.json"))

    gains = temporal_sensitivity(res.runs["trw"].embeddings, res.runs["sym"].embeddings,
                                 res.config.delta)
    sens = {"delta": res.config.delta,
            "num_significant": sum(x.significant for x in gains),
            "gains": [{"node": labels[x.node], "gain": x.gain, "significant": x.significant}
                      for x in gains]}
    write_json(sens, track("sensitivity.json"))

    flagged = {s.node: s.score for s in res.runs[res.config.kernel].scores if s.flagged}
    write_dot(g, flagged, track("flagged.dot"))
    return written


def build_manifest(command: str, config: dict, seed: int, inputs: list[str], out_dir,
                   outputs: list[str], wall_times: dict, metrics: dict | None = None,
                   runtime: dict | None = None) -> dict:
    out = Path(out_dir)
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [{"path": str(p), "sha256": sha256_file(p)} for p in inputs],
        "outputs": [{"path": name, "sha256": sha256_file(out / name)} for name in outputs],
        "metrics": metrics or {},
        "wall_times": wall_times,
        "runtime": runtime or {},
    }


def write_manifest(manifest: dict, out_dir, name: str = MANIFEST) -> Path:
    path = Path(out_dir) / name
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def stable_view(manifest: dict) -> dict:
    """The manifest without wall-clock fields, for determinism comparisons."""
    return {k: v for k, v in manifest.items() if k not in VOLATILE}


def verify_manifest(path) -> list[str]:
    """Re-hash every input and output; returns the list of problems found."""
    path = Path(path)
    try:
        with open(path) as fh:
            m = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    problems = []
    for key in ("command", "config", "seed", "inputs", "outputs"):
        if key not in m:
            problems.append(f"manifest lacks {key!r}")
    for kind, base in (("inputs", Path.cwd()), ("outputs", path.parent)):
        for entry in m.get(kind, []):
            p = Path(entry["path"])
            p = p if p.is_absolute() else base / p
            if not p.is_file():
                problems.append(f"{kind[:-1]} missing: {entry['path']}")
            elif sha256_file(p) != entry["sha256"]:
                problems.append(f"{kind[:-1]} changed: {entry['path']}")
    return problems


def threads_note(threads: int | None) -> dict:
    # every stage is sequential and bit-deterministic; the count is only recorded
    return {"threads": threads or 1, "pid_independent": True, "cpu_count": os.cpu_count()}
