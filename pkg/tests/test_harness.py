import json
import math

import numpy as np
import pytest

from ffibp.audio_io import write_wav
from ffibp.cli import main
from ffibp.clustering import BPClass
from ffibp.features import FEATURE_NAMES
from ffibp.harness import (
    METHODS,
    METRIC_FIELDS,
    ExperimentConfig,
    InsufficientData,
    SweepGrid,
    SyntheticSpec,
    cell_id,
    extract_corpus,
    generate_synthetic,
    plot_series,
    read_manifest,
    run_experiment,
    stratified_split,
    sweep,
    write_manifest,
    write_sweep_outputs,
)

RANGES = {
    "davies_bouldin": (0.0, math.inf),
    "homogeneity": (0.0, 1.0),
    "completeness": (0.0, 1.0),
    "jaccard": (0.0, 1.0),
    "silhouette": (-1.0, 1.0),
    "dunn": (0.0, math.inf),
    "accuracy": (0.0, 1.0),
}


@pytest.fixture(scope="module")
def corpus(manifest):
    cfg = ExperimentConfig()
    return extract_corpus(manifest, cfg.preprocess, cfg.features)


# -- corpus generation ------------------------------------------------------------


def test_generate_counts(corpus_dir, manifest):
    assert len(list(corpus_dir.glob("*.wav"))) == 30
    assert len(manifest) == 30
    assert (corpus_dir / "manifest.csv").read_text().splitlines()[0] == "clip_path,systolic,diastolic,age,sex"


def test_generate_labels_match_class(manifest):
    counts = {c: 0 for c in BPClass}
    for row in manifest:
        counts[row.bp_class] += 1
        assert 20 <= row.age <= 65 and row.sex in ("M", "F")
    assert all(n == 10 for n in counts.values())
    names = {row.clip_path.name.split("_")[0] for row in manifest if row.bp_class is BPClass.LOW}
    assert len(names) == 1


def test_generate_is_byte_identical(tmp_path, corpus_dir):
    generate_synthetic(SyntheticSpec(clips_per_class=10, seed=7), tmp_path)
    for wav in sorted(corpus_dir.glob("*.wav")):
        assert (tmp_path / wav.name).read_bytes() == wav.read_bytes()
    assert (tmp_path / "manifest.csv").read_bytes() == (corpus_dir / "manifest.csv").read_bytes()


def test_manifest_rejects_bad_header(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("path,sys,dia\n")
    with pytest.raises(ValueError):
        read_manifest(p)


def test_manifest_roundtrip(tmp_path):
    write_wav(tmp_path / "a.wav", np.zeros(800), 16000)
    write_manifest(tmp_path / "m.csv", [("a.wav", 118.0, 76.0, 30, "F")])
    (row,) = read_manifest(tmp_path / "m.csv")
    assert row.clip_path == tmp_path / "a.wav"
    assert row.bp_class is BPClass.NORMAL


def test_corpus_features_clean(corpus):
    assert corpus.matrix.shape == (30, len(FEATURE_NAMES))
    assert corpus.excluded == []


# -- splitting ---------------------------------------------------------------------


def test_split_40_percent():
    classes = np.repeat([0, 1, 2], 10)
    train, test = stratified_split(classes, 40, seed=3)
    assert train.size == 12 and test.size == 18
    assert np.bincount(classes[train]).tolist() == [4, 4, 4]
    assert np.bincount(classes[test]).tolist() == [6, 6, 6]
    assert set(train).isdisjoint(test)


@pytest.mark.parametrize("pct", [40, 50, 60, 70, 80, 90])
def test_split_proportions(pct):
    classes = np.array([0] * 7 + [1] * 11 + [2] * 9)
    train, test = stratified_split(classes, pct, seed=0)
    assert train.size + test.size == classes.size
    for c, n in ((0, 7), (1, 11), (2, 9)):
        assert abs(np.sum(classes[train] == c) - n * pct / 100) <= 1


# -- single runs ---------------------------------------------------------------------


@pytest.mark.parametrize("method", METHODS)
def test_run_report_contract(manifest, corpus, method):
    cfg = ExperimentConfig(seed=7, method=method)
    rep = run_experiment(manifest, cfg, corpus)
    for name, (lo, hi) in RANGES.items():
        value = getattr(rep, name)
        assert math.isfinite(value) and lo <= value <= hi, (name, value)
    assert (rep.seed, rep.training_percent, rep.epochs, rep.method) == (7, 90, 10, method)
    assert (rep.n_train, rep.n_test) == (27, 3)


def test_fusion_vs_kmeans_pinned(manifest, corpus):
    fusion = run_experiment(manifest, ExperimentConfig(seed=7, training_percent=40, method="ffi_fusion"), corpus)
    kmeans = run_experiment(manifest, ExperimentConfig(seed=7, training_percent=40, method="kmeans_only"), corpus)
    assert fusion.accuracy == pytest.approx(17 / 18)
    assert kmeans.accuracy == pytest.approx(14 / 18)
    assert fusion.accuracy >= kmeans.accuracy


def test_run_is_reproducible(manifest, corpus):
    cfg = ExperimentConfig(seed=3, training_percent=60, epochs=20)
    assert run_experiment(manifest, cfg, corpus).to_json() == run_experiment(manifest, cfg).to_json()


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(method="svm")
    with pytest.raises(ValueError):
        ExperimentConfig(training_percent=100)
    with pytest.raises(ValueError):
        ExperimentConfig(k=4)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"trainng_percent": 50})
    cfg = ExperimentConfig.from_dict({"optimizer": {"max_iterations": 5}, "seed": 2})
    assert cfg.optimizer.max_iterations == 5 and cfg.ffi_config().rng_seed == 2


def test_insufficient_data(manifest, corpus):
    with pytest.raises(InsufficientData):
        run_experiment(manifest[:2], ExperimentConfig(), None)


# -- sweeps ----------------------------------------------------------------------------


def test_full_grid_sweep(manifest, tmp_path):
    grid = SweepGrid(base=ExperimentConfig(seed=7))
    result = sweep(manifest, grid)
    assert len(result.reports) == 30 and result.failures == {}
    a = write_sweep_outputs(tmp_path / "a", result, plots=True)
    b = write_sweep_outputs(tmp_path / "b", sweep(manifest, grid), plots=True)
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 31
    for metric in METRIC_FIELDS:
        svg_a = (tmp_path / "a" / "plots" / f"{metric}.svg").read_bytes()
        assert svg_a == (tmp_path / "b" / "plots" / f"{metric}.svg").read_bytes()


def test_plot_series_covers_each_cell_once(manifest):
    grid = SweepGrid(base=ExperimentConfig(seed=1), training_percent=[60, 90], epochs=[10, 20], methods=["kmeans_only", "ffi_only"])
    reports = sweep(manifest, grid).reports
    for metric in METRIC_FIELDS:
        series = plot_series(reports, metric)
        cells = [(m, tp, ep) for (m, tp), pts in series.items() for ep, _ in pts]
        assert sorted(cells) == sorted((r.method, r.training_percent, r.epochs) for r in reports)
        assert len(set(cells)) == len(cells) == 8


def test_sweep_records_failed_cells(manifest):
    grid = SweepGrid(base=ExperimentConfig(seed=0), training_percent=[1, 50], epochs=[10])
    result = sweep(manifest, grid)
    bad = cell_id(ExperimentConfig(seed=0, training_percent=1, epochs=10))
    assert len(result.reports) == 1
    assert list(result.failures) == [bad]
    assert "InsufficientData" in result.failures[bad]


def test_grid_from_dict():
    grid = SweepGrid.from_dict({"base": {"seed": 4}, "training_percent": [50], "epochs": [10, 30], "methods": ["tlo_only"]})
    cells = grid.cells()
    assert [(c.method, c.training_percent, c.epochs, c.seed) for c in cells] == [
        ("tlo_only", 50, 10, 4),
        ("tlo_only", 50, 30, 4),
    ]


# -- command line ------------------------------------------------------------------------


def test_cli_generate_and_features(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"clips_per_class": 2, "duration_s": 0.5, "seed": 1}))
    assert main(["generate", "--spec", str(spec), "--out", str(tmp_path / "c")]) == 0
    assert len(list((tmp_path / "c").glob("*.wav"))) == 6
    assert main(["features", "--manifest", str(tmp_path / "c" / "manifest.csv"), "--out", str(tmp_path / "f.csv")]) == 0
    assert len((tmp_path / "f.csv").read_text().splitlines()) == 7


def test_cli_run_twice_identical(corpus_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 7, "training_percent": 70, "epochs": 20}))
    for name in ("a", "b"):
        args = ["run", "--manifest", str(corpus_dir / "manifest.csv"), "--config", str(cfg), "--out", str(tmp_path / f"{name}.json")]
        assert main(args) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    report = json.loads((tmp_path / "a.json").read_text())
    assert set(METRIC_FIELDS) <= set(report)


def test_cli_sweep(corpus_dir, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"training_percent": [80, 90], "epochs": [10], "base": {"seed": 7}}))
    args = ["sweep", "--manifest", str(corpus_dir / "manifest.csv"), "--grid", str(grid), "--out", str(tmp_path / "s"), "--plots"]
    assert main(args) == 0
    assert len((tmp_path / "s" / "sweep.csv").read_text().splitlines()) == 3
    assert len(list((tmp_path / "s" / "plots").glob("*.svg"))) == len(METRIC_FIELDS)


def test_cli_error_json(tmp_path, capsys):
    code = main(["run", "--manifest", str(tmp_path / "missing.csv")])
    assert code != 0
    err = json.loads(capsys.readouterr().err)
    assert err["command"] == "run" and err["error"] == "FileNotFoundError"
