"""Command-line entry point: ingest, synth, pipeline, spectral, verify.

Exit codes: 0 success, 64 usage, 2 network, 3 data, 1 internal.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .errors import ConfigInvalid, DataError, TrwGcnError, UsageError
from .features import extract_features, standardize
from .graph_core import build_graph, write_edge_csv
from .ingest import (IngestConfig, RpcClient, fetch_block_range, read_fixture, to_edges,
                     write_fixture)
from .sampler import TrwConfig
from .spectral import (convergence_curve, energy_profile, laplacian_spectrum,
                       latest_timestamp_signal, smoothness_comparison, write_energy_csv)
from .spectral import write_json as write_spectral_json
from .synth import (KINDS, SynthConfig, burst_anomalies, community_graph, generate,
                    mixed_anomalies, temporal_chain)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fractions(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def _add_model_flags(p):
    d = pl.PipelineConfig()
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--lambda", dest="lambda_decay", type=float, default=None,
                   help="recency decay per second (default: 1 / mean timestamp gap)")
    p.add_argument("--num-walks", type=int, default=d.num_walks)
    p.add_argument("--walk-length", type=int, default=d.walk_length)
    p.add_argument("--direction", choices=("out", "both"), default=d.direction)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--out-dim", type=int, default=d.out_dim)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--kernel", choices=("sym", "trw"), default=d.kernel,
                   help="model behind the feature distribution and flagged.dot; both always run")
    p.add_argument("--threshold", type=float, default=d.threshold)
    p.add_argument("--mode", choices=("last_dim", "mean_dims"), default=d.mode)
    p.add_argument("--delta", type=float, default=d.delta)


def _add_input_flags(p, required=True):
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--file", help="transaction fixture (JSONL)")
    src.add_argument("--graph", help="edge CSV written by `ingest`")
    p.add_argument("--start", type=int)
    p.add_argument("--end", type=int)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker count; every stage is sequential, so outputs never depend on it")
    top = _Parser(prog="trwgcn", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="fetch or load transactions and write an edge CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--file")
    src.add_argument("--rpc", nargs="?", const="", default=None,
                     help="JSON-RPC endpoint (ETH_RPC_URL takes priority)")
    p.add_argument("--start", type=int)
    p.add_argument("--end", type=int)
    p.add_argument("--descending", action="store_true",
                   help="read --start as the latest block and walk down to --end")
    p.add_argument("--out", default="graph.csv")
    p.add_argument("--fixture-out", help="also save fetched transactions as JSONL")
    p.add_argument("--include-contract-creation", action="store_true")
    p.add_argument("--exclude-zero-value", action="store_true",
                   help="drop transactions that move no ether")
    p.add_argument("--timeout", type=float, default=30.0)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic fixture with planted anomalies")
    p.add_argument("--nodes", type=int, default=500)
    p.add_argument("--blocks", type=int, default=200)
    p.add_argument("--rate", type=float, default=10.0)
    p.add_argument("--communities", type=int, default=5)
    p.add_argument("--anomalies", type=int, default=10)
    p.add_argument("--kind", choices=("mixed",) + KINDS, default="mixed")
    p.add_argument("--intensity", type=float, default=None)
    p.add_argument("--duration", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth.jsonl")
    p.add_argument("--truth", default=None, help="ground-truth JSON (default: <out>.truth.json)")

    p = sub.add_parser("pipeline", parents=[common], help="run both models, all detectors and scoring")
    _add_input_flags(p)
    p.add_argument("--truth", help="ground-truth JSON from `synth`")
    _add_model_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")

    p = sub.add_parser("spectral", parents=[common], help="convergence and smoothness experiments")
    _add_input_flags(p, required=False)
    p.add_argument("--fixture", choices=("community", "chain"), default=None)
    p.add_argument("--fractions", type=_fractions, default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--k-fraction", type=float, default=0.2)
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--lambda", dest="lambda_decay", type=float, default=None)
    p.add_argument("--walk-length", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")

    p = sub.add_parser("verify", parents=[common], help="re-hash a run's inputs and outputs")
    p.add_argument("manifest")
    return top


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_ingest(a) -> int:
    t0 = time.perf_counter()
    if a.rpc is not None:
        if a.start is None or a.end is None:
            raise UsageError("--rpc needs --start and --end")
        kw = dict(source="rpc", rpc_url=a.rpc or None)
        cfg = (IngestConfig.descending(a.start, a.end - 1, **kw) if a.descending
               else IngestConfig(a.start, a.end, **kw))
        txs = fetch_block_range(cfg, RpcClient(cfg.endpoint, timeout=a.timeout))
        inputs = []
    else:
        if a.descending and a.start is not None and a.end is not None:
            lo, hi = sorted((a.start, a.end))
        else:
            lo, hi = a.start, a.end
        all_txs = read_fixture(a.file)
        if not all_txs:
            raise DataError(f"{a.file}: no transactions")
        lo = min(t.block for t in all_txs) if lo is None else lo
        hi = max(t.block for t in all_txs) if hi is None else hi
        cfg = IngestConfig(lo, hi, "file", file_path=a.file)
        txs = fetch_block_range(cfg)
        inputs = [a.file]
    g = build_graph(to_edges(txs, skip_contract_creation=not a.include_contract_creation,
                             include_zero_value=not a.exclude_zero_value),
                    (cfg.start_block, cfg.end_block))
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_edge_csv(g, out)
    outputs = [out.name]
    if a.fixture_out:
        fx = Path(a.fixture_out)
        write_fixture(txs, fx)
        if fx.resolve().parent == out.resolve().parent:
            outputs.append(fx.name)
    config = {"source": cfg.source, "start_block": cfg.start_block, "end_block": cfg.end_block,
              "include_contract_creation": a.include_contract_creation,
              "exclude_zero_value": a.exclude_zero_value}
    metrics = {"num_transactions": len(txs), "num_nodes": g.num_nodes, "num_edges": g.num_edges}
    m = pl.build_manifest("ingest", config, 0, inputs, out.parent, outputs,
                          {"ingest": round(time.perf_counter() - t0, 6)}, metrics,
                          pl.threads_note(a.threads))
    pl.write_manifest(m, out.parent, out.stem + ".manifest.json")
    _log(f"ingest: {g.num_nodes} nodes, {g.num_edges} edges -> {out}")
    return 0


def cmd_synth(a) -> int:
    t0 = time.perf_counter()
    if a.kind == "mixed":
        an = mixed_anomalies(a.nodes, a.blocks, a.anomalies, a.seed,
                             3.0 if a.intensity is None else a.intensity, a.duration)
    elif a.kind == "burst":
        an = burst_anomalies(a.nodes, a.blocks, a.anomalies, a.seed,
                             10.0 if a.intensity is None else a.intensity, a.duration)
    else:
        an = mixed_anomalies(a.nodes, a.blocks, a.anomalies, a.seed,
                             3.0 if a.intensity is None else a.intensity, a.duration, kinds=(a.kind,))
    data = generate(SynthConfig(a.nodes, a.blocks, a.rate, a.communities, a.seed, an))
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    truth = Path(a.truth) if a.truth else out.with_suffix(".truth.json")
    data.write(out, truth)
    outputs = [out.name] + ([truth.name] if truth.resolve().parent == out.resolve().parent else [])
    metrics = {"num_nodes": data.graph.num_nodes, "num_edges": data.graph.num_edges,
               "num_transactions": len(data.transactions)}
    config = {k: v for k, v in vars(a).items() if k not in ("threads", "func", "out", "truth")}
    m = pl.build_manifest("synth", config, a.seed, [], out.parent, outputs,
                          {"synth": round(time.perf_counter() - t0, 6)}, metrics,
                          pl.threads_note(a.threads))
    pl.write_manifest(m, out.parent, out.stem + ".manifest.json")
    _log(f"synth: {metrics['num_transactions']} transactions, {len(an)} anomalies -> {out}")
    return 0


def cmd_pipeline(a) -> int:
    cfg = pl.PipelineConfig(
        seed=a.seed, alpha=a.alpha, lambda_decay=a.lambda_decay, num_walks=a.num_walks,
        walk_length=a.walk_length, direction=a.direction, hidden=a.hidden, out_dim=a.out_dim,
        epochs=a.epochs, lr=a.lr, kernel=a.kernel, threshold=a.threshold, mode=a.mode,
        delta=a.delta)
    t0 = time.perf_counter()
    g = pl.load_graph(a.file, a.graph, a.start, a.end)
    load_time = round(time.perf_counter() - t0, 6)
    truth = pl.load_truth(a.truth, g) if a.truth else None
    res = pl.run_pipeline(g, cfg, truth)
    outputs = pl.write_pipeline_outputs(res, g, a.out_dir)
    inputs = [p for p in (a.file, a.graph, a.truth) if p]
    config = cfg.to_json()
    config.update({"start": a.start, "end": a.end})
    wall = {"load": load_time, **res.wall_times}
    metrics = {"num_nodes": g.num_nodes, "num_edges": g.num_edges, **res.metrics()}
    m = pl.build_manifest("pipeline", config, a.seed, inputs, a.out_dir, outputs, wall,
                          metrics, pl.threads_note(a.threads))
    pl.write_manifest(m, a.out_dir)
    for row in res.score_summary():
        extra = f" recall={row['recall']:.2f}" if "recall" in row and row["recall"] is not None else ""
        _log(f"pipeline[{row['kernel']}]: {row['num_flagged']} flagged{extra}")
    return 0


def cmd_spectral(a) -> int:
    t0 = time.perf_counter()
    inputs = [p for p in (a.file, a.graph) if p]
    if inputs:
        g = pl.load_graph(a.file, a.graph, a.start, a.end)
        chain_static = None
    elif a.fixture == "chain":
        g = temporal_chain(seed=a.seed)
        chain_static = temporal_chain(seed=a.seed, static_time=True)
    else:
        g = community_graph(seed=a.seed)
        chain_static = None
    if a.k_fraction <= 0 or a.k_fraction > 1:
        raise ConfigInvalid("--k-fraction must be in (0, 1]")
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    times = {}

    x = standardize(extract_features(g)).values
    omega = np.full(x.shape[1], 1.0 / x.shape[1])
    t = time.perf_counter()
    curve = convergence_curve(g, x, omega, a.fractions, a.seeds)
    times["convergence"] = round(time.perf_counter() - t, 6)
    write_spectral_json(curve.to_json(), out / "convergence.json")
    outputs.append("convergence.json")

    t = time.perf_counter()
    summary = laplacian_spectrum(g)
    sig = latest_timestamp_signal(g)
    sig = sig - sig.mean()
    if np.any(sig):
        write_energy_csv(summary, energy_profile(summary, sig), out / "energy.csv")
        outputs.append("energy.csv")
    times["energy"] = round(time.perf_counter() - t, 6)

    t = time.perf_counter()
    trw = TrwConfig(alpha=a.alpha, lambda_decay=a.lambda_decay, walk_length=a.walk_length, seed=a.seed)
    smooth = {"temporal": smoothness_comparison(g, trw, k_fraction=a.k_fraction, seeds=a.seeds,
                                                sample_size=a.sample_size).to_json()}
    if chain_static is not None:
        pos = lambda h: np.arange(h.num_nodes, dtype=np.float64)  # noqa: E731
        smooth["static_time"] = smoothness_comparison(
            chain_static, trw, signal_fn=pos, k_fraction=a.k_fraction, seeds=a.seeds,
            sample_size=a.sample_size).to_json()
    times["smoothness"] = round(time.perf_counter() - t, 6)
    write_spectral_json(smooth, out / "smoothness.json")
    outputs.append("smoothness.json")

    config = {"fixture": a.fixture, "fractions": a.fractions, "seeds": a.seeds,
              "k_fraction": a.k_fraction, "sample_size": a.sample_size, "alpha": a.alpha,
              "lambda": a.lambda_decay, "walk_length": a.walk_length, "start": a.start, "end": a.end}
    times["total"] = round(time.perf_counter() - t0, 6)
    metrics = {"final_distance": curve.distances[-1],
               "trw_energy": smooth["temporal"]["trw_energy"],
               "rw_energy": smooth["temporal"]["rw_energy"]}
    m = pl.build_manifest("spectral", config, a.seed, inputs, out, outputs, times, metrics,
                          pl.threads_note(a.threads))
    pl.write_manifest(m, out)
    _log(f"spectral: distances {[round(d, 4) for d in curve.distances]}")
    return 0


def cmd_verify(a) -> int:
    problems = pl.verify_manifest(a.manifest)
    for p in problems:
        _log(f"verify: {p}")
    if problems:
        return DataError.exit_code
    _log("verify: ok")
    return 0


COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth, "pipeline": cmd_pipeline,
            "spectral": cmd_spectral, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except TrwGcnError as exc:
        _log(f"error: {exc}")
        return exc.exit_code
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # anything unexpected is an internal error
        _log(f"internal error: {type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
