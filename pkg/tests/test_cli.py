import csv

import numpy as np
import pytest

from proxtrace.cli import main
from proxtrace.features import FEATURE_NAMES, FeatureVector, Observation, write_features_csv, write_log_csv

SCENARIO = """\
seed: 5
replication: {distances_m: [0.5, 1.5, 3.0, 4.0], dwell_ms: 20000, sessions: 1}
"""

DRILL = """\
seed: 2
timings: {t_gen_ms: 10000, t_adv_ms: 200, t_scan_ms: 1000, t_window_ms: 400}
drill:
  horizon_ms: 30000
  infected: A
  agents:
    - {id: A, static: [0, 0]}
    - {id: B, static: [1, 0]}
    - {id: C, static: [60, 0]}
"""


def data_rows(path):
    return [r for r in csv.reader(l for l in open(path) if not l.startswith("#"))]


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    (d / "scenario.yaml").write_text(SCENARIO)
    assert main(["simulate", str(d / "scenario.yaml"), str(d / "out")]) == 0
    return d


def test_simulate_writes_two_datasets(sim):
    for g in ("direct", "crosswise"):
        rows = data_rows(sim / "out" / f"{g}.csv")
        assert rows[0] == list(FEATURE_NAMES) + ["label"]
        assert {r[-1] for r in rows[1:]} == {"1", "-1"}
        assert (sim / "out" / f"{g}_log.csv").exists()
    head = (sim / "out" / "direct.csv").read_text().splitlines()[:2]
    assert head[0] == "# proxtrace simulate" and head[1].startswith("# config_sha256=") and "seed=5" in head[1]


def test_simulate_is_byte_identical(sim, tmp_path):
    assert main(["simulate", str(sim / "scenario.yaml"), str(tmp_path)]) == 0
    for name in ("direct.csv", "crosswise.csv", "direct_log.csv"):
        assert (tmp_path / name).read_bytes() == (sim / "out" / name).read_bytes()


def test_missing_scenario_exit_2(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nope.yaml"), str(tmp_path)]) == 2
    assert "nope.yaml" in capsys.readouterr().err


def test_bad_scenario_exit_3(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("replication: {distances_m: [0.5, 99]}\n")
    assert main(["simulate", str(p), str(tmp_path)]) == 3


def test_usage_errors_exit_2(sim):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate"])
    assert exc.value.code == 2
    assert main(["evaluate", str(sim / "out" / "direct.csv"), "--classifiers", "SVM"]) == 2


def test_evaluate_table(sim, tmp_path):
    out = tmp_path / "m.csv"
    args = ["evaluate", str(sim / "out" / "direct.csv"), "--reps", "4", "--out", str(out)]
    assert main(args) == 0
    rows = data_rows(out)
    assert rows[0] == ["classifier", "metric", "mean", "ci_lo", "ci_hi"]
    assert [r[0] for r in rows[1:]] == [k for k in ("DT", "LDA", "NB", "KNN") for _ in range(4)]
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_evaluate_separable_toy(tmp_path):
    rows = [FeatureVector(100, -55.0 - i * 0.01, -50.0, -60.0, 10.0, 1) for i in range(30)]
    rows += [FeatureVector(40, -85.0 - i * 0.01, -80.0, -90.0, 10.0, -1) for i in range(30)]
    p = tmp_path / "toy.csv"
    write_features_csv(rows, p)
    out = tmp_path / "m.csv"
    assert main(["evaluate", str(p), "--reps", "5", "--out", str(out)]) == 0
    assert all(float(r[2]) == 1.0 for r in data_rows(out)[1:])


def test_evaluate_single_class_exit_4(tmp_path):
    p = tmp_path / "one.csv"
    write_features_csv([FeatureVector(5, -60.0, -59.0, -61.0, 2.0, 1)] * 10, p)
    assert main(["evaluate", str(p)]) == 4


def test_evaluate_corrupt_dataset_exit_3(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("n_samples,mean_rss\n1,2\n")
    assert main(["evaluate", str(p)]) == 3


def test_ablate_features_default_order(sim, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["ablate-features", str(sim / "out" / "direct.csv"), "--reps", "3",
                 "--classifiers", "KNN", "--out", str(out)]) == 0
    rows = data_rows(out)[1:]
    assert [r[1] for r in rows] == ["1", "2", "3", "4", "5"]
    assert rows[0][2] == "mean_rss" and rows[1][2] == "mean_rss+n_samples"


def test_ablate_features_constant_dataset(tmp_path):
    # every feature identical across rows: no feature count helps
    rng = np.random.default_rng(0)
    labels = rng.choice([-1, 1], 60)
    p = tmp_path / "const.csv"
    write_features_csv([FeatureVector(10, -70.0, -65.0, -75.0, 10.0, int(l)) for l in labels], p)
    out = tmp_path / "f.csv"
    assert main(["ablate-features", str(p), "--reps", "5", "--classifiers", "DT,NB,KNN", "--out", str(out)]) == 0
    rows = data_rows(out)[1:]
    for kind in ("DT", "NB", "KNN"):
        accs = {r[3] for r in rows if r[0] == kind}
        assert len(accs) == 1


def test_ablate_samples_caps(sim, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["ablate-samples", str(sim / "out" / "direct_log.csv"), "--caps", "1,100,500",
                 "--reps", "3", "--classifiers", "DT", "--out", str(out)]) == 0
    rows = data_rows(out)[1:]
    acc = {int(r[1]): float(r[2]) for r in rows}
    assert acc[1] < acc[100]
    # a cap above the per-window count changes nothing
    assert acc[100] == acc[500]
    assert main(["ablate-samples", str(sim / "out" / "direct_log.csv"), "--caps", "10,5"]) == 2


def test_ablate_threshold_degenerate(sim, tmp_path):
    out = tmp_path / "t.csv"
    code = main(["ablate-threshold", str(sim / "out" / "direct_log.csv"), "--thresholds", "0.3,1.0,2.0,9.0",
                 "--reps", "3", "--classifiers", "NB", "--out", str(out)])
    assert code == 4
    status = {r[1]: r[-1] for r in data_rows(out)[1:]}
    assert status == {"0.3": "single-class", "1.0": "ok", "2.0": "ok", "9.0": "single-class"}


def test_drill_report(tmp_path):
    p = tmp_path / "d.yaml"
    p.write_text(DRILL)
    out = tmp_path / "d.csv"
    assert main(["drill", str(p), "--out", str(out)]) == 0
    rows = {r[0]: r for r in data_rows(out)[1:]}
    assert rows["B"][1] == "1" and rows["C"][1] == "0"
    first = out.read_bytes()
    assert main(["drill", str(p), "--out", str(out)]) == 0
    assert out.read_bytes() == first
    assert main(["drill", str(p), "--infected", "Q"]) == 3


def test_ingest_skips_corrupt_row(tmp_path, capsys):
    obs = [Observation(-60.0 - i % 3, i * 100.0, 1.0, "w", "m", "ab", 0.0) for i in range(200)]
    log = tmp_path / "log.csv"
    write_log_csv(obs, log)
    lines = log.read_text().splitlines()
    lines[5] = lines[5].replace("-6", "x-6", 1)
    log.write_text("\n".join(lines) + "\n")
    out = tmp_path / "f.csv"
    assert main(["ingest", str(log), str(out), "--window-ms", "5000", "--stride-ms", "5000"]) == 0
    assert "skipped" in capsys.readouterr().err
    rows = data_rows(out)[1:]
    assert len(rows) == 4 and sum(int(r[0]) for r in rows) == 199


def test_pr_curve_command(sim, tmp_path):
    out = tmp_path / "pr.csv"
    assert main(["pr-curve", str(sim / "out" / "direct.csv"), "--classifier", "NB", "--out", str(out)]) == 0
    rows = data_rows(out)
    assert rows[0] == ["threshold", "recall", "precision"]
    rec = [float(r[1]) for r in rows[1:]]
    assert rec == sorted(rec, reverse=True)
