"""End-to-end checks of the command line interface, run in-process."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from longsurv._version import __version__
from longsurv.cli import main
from longsurv.cohort import load_cohort, save_cohort
from longsurv.models import encode_inputs

from helpers import random_survival_cohort


def read_csv(path):
    """(comment_line, header, data_rows) of one artifact."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("#")
    rows = list(csv.reader(lines[1:]))
    return lines[0], rows[0], rows[1:]


def write_config(path, obj):
    Path(path).write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    rc = main(["simulate", "--out", str(d), "--n-patients", "80", "--seed", "3",
               "--quiet"])
    assert rc == 0
    return d


@pytest.fixture(scope="module")
def train_run(tmp_path_factory):
    """A tiny but real training run with exported splits."""
    d = tmp_path_factory.mktemp("train")
    cfg = write_config(d / "cfg.json", {
        "seed": 11,
        "synthetic": {"n_patients": 120, "true_linear_coefficients": [2.0, -1.0],
                      "censoring_rate": 0.3},
        "training": {"batch_size": 20, "learning_rate": 0.05, "epochs": 2,
                     "minibatches_per_epoch": 5, "k_max_observations": 4},
    })
    out = d / "run"
    rc = main(["train", "--config", cfg, "--out", str(out), "--export-splits",
               "--quiet"])
    assert rc == 0
    return out


# --- simulate ------------------------------------------------------------------

def test_simulate_artifacts(sim_dir):
    assert (sim_dir / "cohort.jsonl").exists()
    assert (sim_dir / "cohort_meta.json").exists()
    assert (sim_dir / "truth.json").exists()
    lines = (sim_dir / "cohort.jsonl").read_text().strip().splitlines()
    assert len(lines) == 80
    cohort = load_cohort(sim_dir / "cohort.jsonl")
    assert cohort.n == 80
    truth = json.loads((sim_dir / "truth.json").read_text())
    assert set(truth["true_risks"]) == {p.id for p in cohort.patients}
    assert truth["true_coefficients"] == [1.0, -0.5]
    assert "config_hash" in truth["provenance"]


def test_simulate_deterministic(tmp_path, sim_dir):
    d2 = tmp_path / "again"
    rc = main(["simulate", "--out", str(d2), "--n-patients", "80", "--seed", "3",
               "--quiet"])
    assert rc == 0
    assert (d2 / "cohort.jsonl").read_bytes() == (sim_dir / "cohort.jsonl").read_bytes()
    assert (d2 / "truth.json").read_bytes() == (sim_dir / "truth.json").read_bytes()


def test_simulate_calibrates_censoring(tmp_path):
    d = tmp_path / "cal"
    rc = main(["simulate", "--out", str(d), "--n-patients", "300", "--seed", "1",
               "--censoring-rate", "0.4", "--quiet"])
    assert rc == 0
    cohort = load_cohort(d / "cohort.jsonl")
    frac = 1.0 - cohort.events().mean()
    assert abs(frac - 0.4) < 0.06


def test_simulate_quiet_silences_stdout(tmp_path, capsys):
    rc = main(["simulate", "--out", str(tmp_path / "q"), "--n-patients", "10",
               "--quiet"])
    assert rc == 0
    assert capsys.readouterr().out == ""


# --- train ---------------------------------------------------------------------

def test_train_artifacts(train_run):
    bundle = json.loads((train_run / "model.json").read_text())
    assert bundle["bundle_type"] == "cox"
    assert bundle["baseline"]["times"]
    assert bundle["config"]["training"]["epochs"] == 2
    comment, header, rows = read_csv(train_run / "training_log.csv")
    assert header == ["epoch", "train_nll", "val_concordance_error"]
    assert [r[0] for r in rows] == ["0", "1"]
    for r in rows:
        assert 0.0 <= float(r[2]) <= 1.0


def test_train_exports_splits(train_run):
    sizes = {}
    for name in ("train", "val", "test"):
        cohort = load_cohort(train_run / f"{name}.jsonl")
        sizes[name] = cohort.n
    assert sizes["train"] + sizes["val"] + sizes["test"] == 120
    assert sizes["train"] == 72  # 0.6 * 120


def test_train_byte_identical_reruns(tmp_path, train_run):
    cfg = write_config(tmp_path / "cfg.json", {
        "seed": 11,
        "synthetic": {"n_patients": 120, "true_linear_coefficients": [2.0, -1.0],
                      "censoring_rate": 0.3},
        "training": {"batch_size": 20, "learning_rate": 0.05, "epochs": 2,
                     "minibatches_per_epoch": 5, "k_max_observations": 4},
    })
    out = tmp_path / "rerun"
    assert main(["train", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    assert (out / "model.json").read_bytes() == (train_run / "model.json").read_bytes()
    assert (out / "training_log.csv").read_bytes() == \
        (train_run / "training_log.csv").read_bytes()


def test_train_zero_epochs(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", {
        "seed": 2,
        "synthetic": {"n_patients": 40, "true_linear_coefficients": [1.0]},
        "training": {"batch_size": 10, "epochs": 0, "k_max_observations": 3},
    })
    out = tmp_path / "zero"
    assert main(["train", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    _, _, rows = read_csv(out / "training_log.csv")
    assert rows == []
    bundle = json.loads((out / "model.json").read_text())
    assert bundle["baseline"]["times"]  # baseline still estimated at init


def test_train_learns_on_linear_synthetic(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", {
        "seed": 7,
        "synthetic": {"n_patients": 300, "true_linear_coefficients": [2.0, -1.0],
                      "censoring_rate": 0.3},
        "training": {"batch_size": 40, "learning_rate": 0.05, "epochs": 12,
                     "minibatches_per_epoch": 10, "k_max_observations": 4},
    })
    out = tmp_path / "learn"
    assert main(["train", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    _, _, rows = read_csv(out / "training_log.csv")
    final = float(rows[-1][2])
    # deterministic frozen config measures 0.273; the val split is only 60
    # patients, so the bound leaves sampling room while staying well under
    # the 0.5 chance line
    assert final < 0.30


def test_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", {
        "seed": 2,
        "synthetic": {"n_patients": 40, "true_linear_coefficients": [1.0]},
        "training": {"batch_size": 10, "epochs": 5, "minibatches_per_epoch": 2,
                     "k_max_observations": 3},
    })
    out = tmp_path / "flag"
    assert main(["train", "--config", cfg, "--out", str(out), "--epochs", "2",
                 "--quiet"]) == 0
    _, _, rows = read_csv(out / "training_log.csv")
    assert len(rows) == 2


# --- evaluate ------------------------------------------------------------------

def test_evaluate_artifacts(tmp_path, train_run):
    out = tmp_path / "eval"
    rc = main(["evaluate", "--model", str(train_run / "model.json"),
               "--cohort", str(train_run / "test.jsonl"),
               "--grid", "5,10", "--out", str(out), "--quiet"])
    assert rc == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["model"] == "model"  # defaults to the bundle file stem
    assert metrics["event"] == "synthetic_event"
    assert 0.0 <= metrics["metrics"]["concordance_error"] <= 1.0
    assert [b["time"] for b in metrics["metrics"]["brier"]] == [5.0, 10.0]

    comment, header, rows = read_csv(out / "metrics.csv")
    assert header == ["model", "event", "metric", "value", "seed"]
    assert [r[2] for r in rows] == ["concordance_error", "brier@5", "brier@10"]
    assert all(r[0] == "model" for r in rows)

    _, bheader, brows = read_csv(out / "brier.csv")
    assert bheader == ["time", "brier_score"]
    assert len(brows) == 2
    for r in brows:
        assert 0.0 <= float(r[1]) <= 1.0


def test_evaluate_label_flag(tmp_path, train_run):
    out = tmp_path / "eval"
    rc = main(["evaluate", "--model", str(train_run / "model.json"),
               "--cohort", str(train_run / "test.jsonl"), "--grid", "5",
               "--label", "cox-linear", "--out", str(out), "--quiet"])
    assert rc == 0
    assert json.loads((out / "metrics.json").read_text())["model"] == "cox-linear"


def test_evaluate_null_parametric_bundle(tmp_path, train_run):
    cohort = load_cohort(train_run / "test.jsonl")
    width = encode_inputs(cohort)[0].flattened.size
    bundle = {"bundle_type": "parametric",
              "model": {"family": "weibull", "shape": 1.0, "rate": 10.0,
                        "coefficients": [0.0] * width}}
    bpath = tmp_path / "null.json"
    bpath.write_text(json.dumps(bundle))
    out = tmp_path / "eval"
    rc = main(["evaluate", "--model", str(bpath),
               "--cohort", str(train_run / "test.jsonl"), "--grid", "5",
               "--out", str(out), "--quiet"])
    assert rc == 0
    metrics = json.loads((out / "metrics.json").read_text())
    # constant risk scores: every comparable pair is a tie, error is exactly 1/2
    assert metrics["metrics"]["concordance_error"] == 0.5


def test_evaluate_requires_model(tmp_path, train_run):
    rc = main(["evaluate", "--cohort", str(train_run / "test.jsonl"),
               "--out", str(tmp_path / "x"), "--quiet"])
    assert rc == 2


def test_evaluate_missing_bundle(tmp_path, train_run):
    rc = main(["evaluate", "--model", str(tmp_path / "nope.json"),
               "--cohort", str(train_run / "test.jsonl"),
               "--out", str(tmp_path / "x"), "--quiet"])
    assert rc == 2


def test_evaluate_unknown_bundle_type(tmp_path, train_run):
    bpath = tmp_path / "bad.json"
    bpath.write_text(json.dumps({"bundle_type": "mystery"}))
    rc = main(["evaluate", "--model", str(bpath),
               "--cohort", str(train_run / "test.jsonl"),
               "--out", str(tmp_path / "x"), "--quiet"])
    assert rc == 2


# --- sweep ---------------------------------------------------------------------

def test_sweep_grid_shape(tmp_path):
    # multi-day observations so that B*k stays within the observed-day budget
    rng = np.random.default_rng(4)
    cohort = random_survival_cohort(rng, 60, mean_time=6.0, days=12)
    save_cohort(cohort, tmp_path / "cohort.jsonl")
    cfg = write_config(tmp_path / "cfg.json", {
        "seed": 4,
        "cohort": str(tmp_path / "cohort.jsonl"),
        "training": {"learning_rate": 0.05, "epochs": 1,
                     "minibatches_per_epoch": 2},
    })
    out = tmp_path / "sweep"
    rc = main(["sweep", "--config", cfg, "--out", str(out),
               "--batch-sizes", "10,50,all", "--k-values", "2,4", "--quiet"])
    assert rc == 0
    comment, header, rows = read_csv(out / "sweep.csv")
    assert header == ["B", "k=2", "k=4"]
    assert [r[0] for r in rows] == ["B=10", "B=50", "B=36 (All)"]
    for cell in rows[0][1:] + rows[2][1:]:
        assert 0.0 <= float(cell) <= 1.0
    assert rows[1][1:] == ["", ""]  # B=50 exceeds the 36-patient training split


def test_sweep_marks_data_budget_cells_empty(tmp_path):
    # synthetic cohorts observe day 0 only: 36 training patients carry 36
    # observed days, so B=10 fits at k=2 (20) but not at k=4 (40)
    cfg = write_config(tmp_path / "cfg.json", {
        "seed": 4,
        "synthetic": {"n_patients": 60, "true_linear_coefficients": [1.0, -0.5]},
        "training": {"learning_rate": 0.05, "epochs": 1,
                     "minibatches_per_epoch": 2},
    })
    out = tmp_path / "sweep"
    rc = main(["sweep", "--config", cfg, "--out", str(out),
               "--batch-sizes", "10", "--k-values", "2,4", "--quiet"])
    assert rc == 0
    _, header, rows = read_csv(out / "sweep.csv")
    assert 0.0 <= float(rows[0][1]) <= 1.0
    assert rows[0][2] == ""


def test_sweep_single_cell(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", {
        "seed": 4,
        "synthetic": {"n_patients": 50, "true_linear_coefficients": [1.0]},
        "training": {"learning_rate": 0.05, "epochs": 1,
                     "minibatches_per_epoch": 2},
    })
    out = tmp_path / "sweep1"
    rc = main(["sweep", "--config", cfg, "--out", str(out),
               "--batch-sizes", "10", "--k-values", "3", "--quiet"])
    assert rc == 0
    _, header, rows = read_csv(out / "sweep.csv")
    assert header == ["B", "k=3"]
    assert len(rows) == 1 and rows[0][0] == "B=10"


def test_sweep_requires_grid_flags(tmp_path):
    assert main(["sweep", "--k-values", "2"]) == 2
    assert main(["sweep", "--batch-sizes", "10"]) == 2


# --- importance ------------------------------------------------------------------

def test_importance_artifacts(tmp_path, train_run):
    out = tmp_path / "imp"
    rc = main(["importance", "--model", str(train_run / "model.json"),
               "--cohort", str(train_run / "test.jsonl"),
               "--repeats", "2", "--features", "f0,f1",
               "--out", str(out), "--quiet"])
    assert rc == 0
    report = json.loads((out / "importance.json").read_text())
    assert report["repeats"] == 2
    assert [e["feature"] for e in report["importances"]] == ["f0", "f1"]
    for e in report["importances"]:
        assert np.isfinite(e["mean_increase"])
        assert e["std_increase"] >= 0.0


def test_importance_requires_model(tmp_path, train_run):
    rc = main(["importance", "--cohort", str(train_run / "test.jsonl"),
               "--out", str(tmp_path / "x"), "--quiet"])
    assert rc == 2


# --- report ----------------------------------------------------------------------

@pytest.fixture()
def two_metric_dirs(tmp_path, train_run):
    dirs = []
    for label, err_source in (("alpha", "model.json"), ("beta", "model.json")):
        out = tmp_path / label
        rc = main(["evaluate", "--model", str(train_run / err_source),
                   "--cohort", str(train_run / "test.jsonl"), "--grid", "5",
                   "--label", label, "--seed", "0" if label == "alpha" else "1",
                   "--out", str(out), "--quiet"])
        assert rc == 0
        dirs.append(out)
    return dirs


def test_report_ranks_and_missing(tmp_path, two_metric_dirs, capsys):
    a, b = two_metric_dirs
    out = tmp_path / "report"
    rc = main(["report", str(a / "metrics.json"), str(b / "metrics.json"),
               str(tmp_path / "ghost.metrics.json"), "--out", str(out), "--quiet"])
    assert rc == 0
    err = capsys.readouterr().err
    assert "missing metrics" in err

    _, header, rows = read_csv(out / "report.csv")
    assert header == ["model", "event", "concordance_error", "rank"]
    assert len(rows) == 3
    by_model = {r[0]: r for r in rows}
    assert by_model["ghost.metrics"][2] == "absent"
    assert by_model["ghost.metrics"][3] == ""
    ranked = sorted((r for r in rows if r[2] != "absent"), key=lambda r: float(r[2]))
    assert [r[3] for r in ranked] == ["1", "2"]

    report = json.loads((out / "report.json").read_text())
    assert report["warnings"] == 1


def test_report_accepts_directories(tmp_path, two_metric_dirs):
    a, b = two_metric_dirs
    out = tmp_path / "report"
    rc = main(["report", str(a), str(b), "--out", str(out), "--quiet"])
    assert rc == 0
    _, _, rows = read_csv(out / "report.csv")
    assert sorted(r[0] for r in rows) == ["alpha", "beta"]


# --- plumbing ----------------------------------------------------------------------

def test_exit_code_bad_config_json(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["train", "--config", str(bad), "--quiet"]) == 2


def test_exit_code_unknown_flag():
    assert main(["train", "--no-such-flag"]) == 2


def test_exit_code_missing_cohort(tmp_path):
    rc = main(["train", "--cohort", str(tmp_path / "missing.jsonl"), "--quiet"])
    assert rc == 2


def test_exit_code_no_data_source():
    assert main(["train", "--quiet"]) == 2


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_csv_provenance_comment(train_run):
    comment, _, _ = read_csv(train_run / "training_log.csv")
    assert comment.startswith("# config_hash=")
    assert f"version={__version__}" in comment
    assert "seed=11" in comment
