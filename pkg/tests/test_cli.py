import json

import pytest

from fixmarkov.cli import main
from fixmarkov.data import Dataset
from fixmarkov.markov import BayesFactorReport

FAST = ["--k-max", "3", "--mc-samples", "200", "--restarts", "3"]


def spec_list(images=(1, 2, 3), subjects=4, fixations=25):
    region = {"initial_probs": [1 / 3, 1 / 3, 1 / 3],
              "transition_matrix": [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]],
              "emissions": [{"mean": [-300, 0], "sd": [40, 40]}, {"mean": [300, 0], "sd": [40, 40]},
                            {"mean": [0, 250], "sd": [40, 40]}]}
    blob = {"initial_probs": [1.0], "transition_matrix": [[1.0]],
            "emissions": [{"mean": [0, 0], "sd": [150, 120]}]}
    specs = []
    for image in images:
        for j, (scheme, base) in enumerate((("normal", region), ("abnormal", region), ("grayscale", blob))):
            specs.append({**base, "subjects": subjects, "fixations_per_subject": fixations,
                          "seed": 100 + 10 * image + j, "image_id": image, "scheme": scheme,
                          "duration_model": {"coupling": 1.0}})
    return specs


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.json").write_text(json.dumps(spec_list()))
    assert main(["simulate", "--spec", str(root / "spec.json"), "--out", str(root / "data.csv")]) == 0
    assert main(["ingest", "--input", str(root / "data.csv"), "--out-dir", str(root / "ingest")]) == 0
    ds = str(root / "ingest" / "dataset.json")
    assert main(["score", "--input", ds, "--out-dir", str(root / "score"), *FAST]) == 0
    return root


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_ingest_summary(pipeline, capsys):
    summary = read_json(pipeline / "ingest" / "ingest_summary.json")
    assert summary["schemes"] == ["normal", "abnormal", "grayscale"]
    assert summary["images"] == 3 and summary["sequences"] == 36


def test_simulate_ingest_round_trip(pipeline):
    ds = Dataset.load(pipeline / "ingest" / "dataset.json")
    assert len(ds) == 36 and all(len(s) == 25 for s in ds)
    assert (pipeline / "data.states.csv").exists()


def test_malformed_line_17(tmp_path, capsys):
    rows = [f"{i}.0, 1.0, 200, {i}, n1, normal, 1, landscape" for i in range(1, 17)]
    rows.append("oops, 1.0, 200, 17, n1, normal, 1, landscape")
    (tmp_path / "bad.csv").write_text("\n".join(rows) + "\n")
    assert main(["ingest", "--input", str(tmp_path / "bad.csv"), "--out-dir", str(tmp_path)]) != 0
    assert "line 17" in capsys.readouterr().err


def test_empty_file_warns(tmp_path, caplog):
    (tmp_path / "empty.csv").write_text("")
    with caplog.at_level("WARNING"):
        assert main(["ingest", "--input", str(tmp_path / "empty.csv"), "--out-dir", str(tmp_path)]) == 0
    assert "no fixation rows" in caplog.text
    assert len(Dataset.load(tmp_path / "dataset.json")) == 0


def test_missing_input(tmp_path, capsys):
    assert main(["roc", "--input", str(tmp_path / "nope"), "--out-dir", str(tmp_path)]) != 0
    assert "not found" in capsys.readouterr().err
    assert main(["score", "--out-dir", str(tmp_path)]) != 0


def test_score_outputs(pipeline):
    reports = sorted((pipeline / "score" / "reports").glob("report_*.json"))
    assert len(reports) == 9
    report = BayesFactorReport.from_json(read_json(reports[0]))
    assert sorted(report.per_k) == [1, 2, 3]
    summary = read_json(pipeline / "score" / "score_summary.json")
    assert list(summary["paired_t_log2_bf"]) == ["Norm - Abno", "Norm - Gray", "Abno - Gray"]
    assert summary["config"]["k_max"] == 3
    lines = (pipeline / "score" / "log2_bf.csv").read_text().splitlines()
    assert lines[0] == "image_id,scheme,selected_k,strongest_bf,log2_bf" and len(lines) == 10


def test_k_max_two(pipeline, tmp_path):
    ds = str(pipeline / "ingest" / "dataset.json")
    assert main(["score", "--input", ds, "--out-dir", str(tmp_path), "--k-max", "2", "--mc-samples", "50"]) == 0
    for path in (tmp_path / "reports").glob("*.json"):
        assert sorted(read_json(path)["per_k"]) == ["1", "2"]


def test_k_max_validation(pipeline, tmp_path, capsys):
    ds = str(pipeline / "ingest" / "dataset.json")
    assert main(["score", "--input", ds, "--out-dir", str(tmp_path), "--k-max", "1"]) == 1
    assert "k-max" in capsys.readouterr().err


def test_roc_separates(pipeline, tmp_path):
    assert main(["roc", "--input", str(pipeline / "score" / "reports"), "--out-dir", str(tmp_path)]) == 0
    payload = read_json(tmp_path / "roc.json")
    assert payload["auc"] == 1.0 and payload["n_coloured"] == 6 and payload["n_grayscale"] == 3
    rows = (tmp_path / "roc.csv").read_text().splitlines()
    assert rows[0] == "threshold,tpr,fpr" and rows[1].endswith(",0.0,0.0") and rows[-1].endswith(",1.0,1.0")


def test_saccades_shape(pipeline, tmp_path):
    assert main(["saccades", "--input", str(pipeline / "ingest" / "dataset.json"), "--out-dir", str(tmp_path)]) == 0
    payload = read_json(tmp_path / "saccades.json")
    for block in ("ks_raw", "ks_normalized"):
        assert list(payload[block]) == ["Norm - Abno", "Norm - Gray", "Abno - Gray"]
        assert all(0 <= v["p_value"] <= 1 for v in payload[block].values())
    assert "kruskal_wallis" in payload["fixation_counts"]
    assert (tmp_path / "saccade_kde.csv").read_text().startswith("scheme,length,density")


def test_duration(pipeline, tmp_path):
    assert main(["duration", "--input", str(pipeline / "ingest" / "dataset.json"), "--out-dir", str(tmp_path)]) == 0
    payload = read_json(tmp_path / "duration.json")
    assert set(payload["correlation"]) == {"normal", "abnormal", "grayscale"}
    lo, hi = payload["correlation"]["normal"]["ci"]
    assert lo < payload["correlation"]["normal"]["statistic"] < hi


def test_fit_and_grid(pipeline, tmp_path, capsys):
    ds = str(pipeline / "ingest" / "dataset.json")
    assert main(["fit", "--input", ds, "--out-dir", str(tmp_path), "--image", "1", "--scheme", "normal",
                 "--k", "3", "--grid", "8", "6"]) == 0
    assert capsys.readouterr().out.startswith("pi = (")
    grid = (tmp_path / "model_1_normal_k3_grid.csv").read_text().splitlines()
    assert grid[0] == "x,y,null,cluster_0,cluster_1,cluster_2" and len(grid) == 49


def test_report(pipeline, tmp_path):
    assert main(["report", "--input", str(pipeline / "score" / "reports"), "--out-dir", str(tmp_path)]) == 0
    text = (tmp_path / "report.txt").read_text()
    assert "pi = (" in text and "Norm - Abno: [" in text and "p-value = " in text
    ranking = read_json(tmp_path / "ranking.json")["ranking"]
    assert set(ranking) == {"normal", "abnormal", "grayscale"}


def snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_every_command_is_deterministic(pipeline, tmp_path):
    ds = str(pipeline / "ingest" / "dataset.json")
    reports = str(pipeline / "score" / "reports")
    spec = str(pipeline / "spec.json")
    runs = []
    for attempt in ("a", "b"):
        d = tmp_path / attempt
        main(["simulate", "--spec", spec, "--out", str(d / "data.csv")])
        main(["ingest", "--input", str(d / "data.csv"), "--out-dir", str(d)])
        main(["fit", "--input", ds, "--out-dir", str(d), "--image", "2", "--scheme", "abnormal", "--k", "2",
              "--grid", "4", "4"])
        main(["score", "--input", ds, "--out-dir", str(d / "score"), *FAST])
        main(["roc", "--input", reports, "--out-dir", str(d)])
        main(["saccades", "--input", ds, "--out-dir", str(d)])
        main(["duration", "--input", ds, "--out-dir", str(d)])
        main(["report", "--input", reports, "--out-dir", str(d)])
        runs.append(snapshot(d))
    assert runs[0].keys() == runs[1].keys() and len(runs[0]) > 15
    for name in runs[0]:
        assert runs[0][name] == runs[1][name], name


def test_outputs_self_round_trip(pipeline):
    for path in (pipeline / "score" / "reports").glob("*.json"):
        report = BayesFactorReport.from_json(read_json(path))
        assert report.to_json() == read_json(path)


def test_config_precedence(pipeline, tmp_path):
    ds = str(pipeline / "ingest" / "dataset.json")
    (tmp_path / "cfg.json").write_text(json.dumps({"k_max": 2, "mc_samples": 50, "seed": 7}))
    assert main(["score", "--input", ds, "--out-dir", str(tmp_path / "o"), "--config", str(tmp_path / "cfg.json"),
                 "--seed", "8"]) == 0
    cfg = read_json(tmp_path / "o" / "score_summary.json")["config"]
    assert (cfg["k_max"], cfg["mc_samples"], cfg["seed"], cfg["restarts"]) == (2, 50, 8, 10)


def test_unknown_config_key(pipeline, tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"kmax": 2}))
    assert main(["score", "--input", str(pipeline / "ingest" / "dataset.json"), "--out-dir", str(tmp_path),
                 "--config", str(tmp_path / "cfg.json")]) == 1
    assert "kmax" in capsys.readouterr().err


def test_score_partial_failure(tmp_path):
    # a single-subject image cannot be scored; the others still are
    (tmp_path / "spec.json").write_text(json.dumps(spec_list(images=(1,), subjects=3) +
                                                   [{**spec_list(images=(2,), subjects=1)[0]}]))
    main(["simulate", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "d.csv")])
    main(["ingest", "--input", str(tmp_path / "d.csv"), "--out-dir", str(tmp_path)])
    code = main(["score", "--input", str(tmp_path / "dataset.json"), "--out-dir", str(tmp_path / "s"), *FAST])
    summary = read_json(tmp_path / "s" / "score_summary.json")
    assert code == 1 and summary["images_scored"] == 3 and len(summary["failures"]) == 1
