import json

import numpy as np
import pytest

from trwgcn import pipeline as pl
from trwgcn.errors import ConfigInvalid, DataError
from trwgcn.synth import mixed_fixture


@pytest.fixture(scope="module")
def small():
    d = mixed_fixture(0, 150, 60, 6)
    cfg = pl.PipelineConfig(seed=3, num_walks=400, epochs=30)
    return d, cfg, pl.run_pipeline(d.graph, cfg, d.ground_truth)


def test_stage_seed():
    assert pl.stage_seed(7, "walks_trw") == pl.stage_seed(7, "walks_trw")
    assert pl.stage_seed(7, "walks_trw") != pl.stage_seed(7, "walks_sym")
    assert pl.stage_seed(7, "a") != pl.stage_seed(8, "a")


def test_config():
    with pytest.raises(ConfigInvalid):
        pl.PipelineConfig(kernel="gat")
    cfg = pl.PipelineConfig(seed=1)
    assert cfg.detector_config().isoforest.seed == pl.stage_seed(1, "isoforest")
    json.dumps(cfg.to_json())


def test_both_models_and_comparison(small):
    _, _, res = small
    assert set(res.runs) == {"sym", "trw"}
    rows = res.comparison()
    assert len(rows) == 8
    assert {(r["kernel"], r["method"]) for r in rows} == {
        (k, m) for k in ("sym", "trw") for m in ("dbscan", "ocsvm", "isoforest", "lof")}
    assert all({"recall", "precision", "true_positives"} <= set(r) for r in rows)


def test_recovery():
    assert pl.recovery([1, 2, 3], frozenset({2, 3, 4, 5})) == {
        "true_positives": 2, "recall": 0.5, "precision": 2 / 3}
    assert pl.recovery([], frozenset({1}))["precision"] is None
    assert pl.recovery([1], None) == {}


def test_timed_names_stage():
    with pytest.raises(DataError, match=r"\[walks\]"):
        with pl._timed({}, "walks"):
            raise DataError("boom")


def test_feature_distribution(small):
    _, _, res = small
    nodes = [0, 1, 2]
    fd = pl.feature_distribution(res.features, res.standardized, nodes)
    z = res.standardized.values[nodes]
    temporal = np.abs(z[:, 4:]).mean(axis=0).mean()
    assert fd["temporal_mean_abs_z"] == pytest.approx(temporal)
    assert pl.feature_distribution(res.features, res.standardized, [])["temporal_mean_abs_z"] is None


def test_outputs_and_manifest(small, tmp_path):
    d, cfg, res = small
    names = pl.write_pipeline_outputs(res, d.graph, tmp_path)
    for name in ("comparison.json", "feature_distribution.json", "flagged.dot", "scores_trw.json",
                 "embeddings_sym.csv", "model_trw.json", "sensitivity.json", "detect_trw_lof.json"):
        assert name in names and (tmp_path / name).is_file()
    comp = json.loads((tmp_path / "comparison.json").read_text())
    assert len(comp["rows"]) == 8
    m = pl.build_manifest("pipeline", cfg.to_json(), cfg.seed, [], tmp_path, names,
                          res.wall_times, res.metrics())
    pl.write_manifest(m, tmp_path)
    assert pl.verify_manifest(tmp_path / pl.MANIFEST) == []
    (tmp_path / "flagged.dot").write_text("digraph {}\n")
    assert pl.verify_manifest(tmp_path / pl.MANIFEST) == ["output changed: flagged.dot"]


def test_dot_marks_flagged(tmp_path):
    d = mixed_fixture(0, 40, 20, 2)
    pl.write_dot(d.graph, {0: 3.5}, tmp_path / "g.dot")
    text = (tmp_path / "g.dot").read_text()
    assert text.startswith("digraph") and "S=3.50" in text and "anomalous=true" in text


def test_deterministic(small):
    d, cfg, res = small
    again = pl.run_pipeline(d.graph, cfg, d.ground_truth)
    for k in ("sym", "trw"):
        assert np.array_equal(res.runs[k].embeddings.values, again.runs[k].embeddings.values)
        assert res.runs[k].corpus.to_lines() == again.runs[k].corpus.to_lines()
    assert res.comparison() == again.comparison()


def test_load_graph_inputs(tmp_path):
    d = mixed_fixture(0, 40, 20, 2)
    d.write(tmp_path / "f.jsonl", tmp_path / "t.json")
    g = pl.load_graph(str(tmp_path / "f.jsonl"))
    assert g.same_as(d.graph)
    assert pl.load_truth(tmp_path / "t.json", g) == d.ground_truth
    part = pl.load_graph(str(tmp_path / "f.jsonl"), start=5, end=9)
    assert part.block.min() >= 5 and part.block.max() <= 9
    with pytest.raises(ConfigInvalid):
        pl.load_graph()
    with pytest.raises(DataError):
        pl.load_graph(graph_csv=str(tmp_path / "none.csv"))
