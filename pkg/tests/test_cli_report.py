import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from tadiag import __version__
from tadiag.cli import main
from tadiag.io import ground_truth_document
from tadiag.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    generate_synthetic(SyntheticSpec(seed=9, n_videos=60, n_predictions=100)).write(out)
    return out


def diagnose_args(data, out, *extra, chars=True):
    args = ["diagnose", "-g", str(data / "ground_truth.json"), "-p", str(data / "predictions.json"), "-o", str(out)]
    if chars:
        args += ["-c", str(data / "characteristics.json")]
    return args + list(extra)


def resolve(doc, path):
    node = doc
    for part in path.split("/"):
        node = node[int(part)] if isinstance(node, list) else node[part]
    return node


def check_svg_marks(svg_path, doc):
    marks = [el for el in ET.parse(svg_path).iter() if "data-path" in el.attrib]
    assert marks, svg_path.name
    for el in marks:
        assert el.attrib["data-value"] == json.dumps(resolve(doc, el.attrib["data-path"])), el.attrib["data-path"]
    return len(marks)


def test_version_flag():
    proc = subprocess.run([sys.executable, "-m", "tadiag", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout


def test_diagnose_writes_all_formats(data_dir, tmp_path, capsys):
    assert main(diagnose_args(data_dir, tmp_path)) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"report.json", "metrics.csv", "verdicts.csv", "fp_profile.svg", "sensitivity.svg", "fn_rates.svg"} <= names
    assert "average-mAP_N" in capsys.readouterr().out
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["units"] == "percent"
    assert report["provenance"]["inputs"]["predictions"]["file"] == "predictions.json"
    assert len(report["provenance"]["inputs"]["ground_truth"]["sha256"]) == 64


def test_svg_values_match_report(data_dir, tmp_path):
    assert main(diagnose_args(data_dir, tmp_path)) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    total = sum(check_svg_marks(p, report) for p in tmp_path.glob("*.svg"))
    assert total > 100


def test_report_is_reproducible(data_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    assert main(diagnose_args(data_dir, tmp_path / "a")) == 0
    assert main(diagnose_args(data_dir, tmp_path / "b")) == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    assert a == (tmp_path / "b" / "report.json").read_bytes()
    assert json.loads(a)["provenance"]["timestamp"] == "2023-11-14T22:13:20Z"
    for name in ("verdicts.csv", "fp_profile.svg", "sensitivity.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_format_selection(data_dir, tmp_path):
    assert main(diagnose_args(data_dir, tmp_path, "--format", "csv")) == 0
    suffixes = {p.suffix for p in tmp_path.iterdir()}
    assert suffixes == {".csv"}


def test_several_methods_get_subdirectories(data_dir, tmp_path):
    pred = str(data_dir / "predictions.json")
    args = diagnose_args(data_dir, tmp_path) + ["-p", pred]
    assert main(args) == 0
    assert (tmp_path / "predictions" / "report.json").is_file()
    assert (tmp_path / "predictions_2" / "report.json").is_file()
    avg = json.loads((tmp_path / "fn_average.json").read_text())
    one = json.loads((tmp_path / "predictions" / "report.json").read_text())
    assert avg["methods"] == ["predictions", "predictions_2"]
    # Same file twice: the average equals either member.
    assert avg["false_negatives"]["characteristics"] == one["false_negatives"]["characteristics"]
    assert (tmp_path / "fn_average_rates.csv").is_file()
    for svg in tmp_path.glob("fn_average*.svg"):
        check_svg_marks(svg, avg)


def test_exact_copies_give_error_free_report(data_dir, tmp_path):
    gt = json.loads((data_dir / "ground_truth.json").read_text())
    results = {
        vid: [{"label": a["label"], "segment": a["segment"], "score": 1.0} for a in v["annotations"]]
        for vid, v in gt["database"].items()
    }
    pred = tmp_path / "perfect.json"
    pred.write_text(json.dumps({"results": results}))
    out = tmp_path / "out"
    args = ["diagnose", "-g", str(data_dir / "ground_truth.json"), "-c", str(data_dir / "characteristics.json"),
            "-p", str(pred), "-o", str(out), "--format", "json", "--format", "csv"]
    assert main(args) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["metrics"]["average_map"]["all"] == 100.0
    assert all(row[0] == 100.0 and not any(row[1:]) for row in report["fp_profile"]["mean"] if row[0] is not None)
    assert all(c["delta"] == 0.0 for c in report["error_impact"]["categories"].values())
    assert report["false_negatives"]["overall"]["mean"] == 0.0
    with open(out / "verdicts.csv", newline="") as fh:
        assert {row["category"] for row in csv.DictReader(fh)} == {"TP"}


def test_missing_characteristics_still_reports_metrics(tmp_path, capsys):
    ds, _ = generate_synthetic(SyntheticSpec(seed=3, n_videos=30)).load()
    bare = ground_truth_document(ds)
    data = tmp_path / "d"
    generate_synthetic(SyntheticSpec(seed=3, n_videos=30)).write(data)
    (data / "ground_truth.json").write_text(json.dumps(bare))
    assert main(diagnose_args(data, tmp_path / "o", chars=False)) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["metrics"]["average_map"]["all"] is not None
    notices = report["sensitivity"]["notices"]
    assert any("agreement" in n for n in notices) and any("context_size" in n for n in notices)
    assert "note:" in capsys.readouterr().out


def test_evaluate_command(data_dir, tmp_path, capsys):
    args = ["evaluate", "-g", str(data_dir / "ground_truth.json"), "-p", str(data_dir / "predictions.json"),
            "-o", str(tmp_path), "--tiou-thresholds", "0.5:0.25:1.0"]
    assert main(args) == 0
    doc = json.loads((tmp_path / "metrics.json").read_text())
    assert doc["tiou_thresholds"] == [0.5, 0.75, 1.0]
    assert "predictions.json" in doc["methods"]
    assert "avg-mAP" in capsys.readouterr().out


def test_validate_command(data_dir, capsys):
    args = ["validate", "-g", str(data_dir / "ground_truth.json"), "-c", str(data_dir / "characteristics.json"),
            "-p", str(data_dir / "predictions.json")]
    assert main(args) == 0
    out = capsys.readouterr().out
    assert "60 videos" in out and "100 predictions" in out


def test_synth_command(tmp_path):
    assert main(["synth", "-o", str(tmp_path), "--seed", "2", "--videos", "20", "--mixture", "TP=0.8,BG=0.2"]) == 0
    assert {p.name for p in tmp_path.iterdir()} == {
        "ground_truth.json", "characteristics.json", "predictions.json", "planted_verdicts.csv"
    }


def test_exit_codes(data_dir, tmp_path, capsys):
    gt = str(data_dir / "ground_truth.json")
    # Unreadable or malformed input: 2.
    assert main(["validate", "-g", str(tmp_path / "missing.json")]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text('{"database": ')
    assert main(["validate", "-g", str(broken)]) == 2
    assert "byte offset" in capsys.readouterr().err
    # Schema violation: 1, with every issue listed.
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"results": {"v_000000": [{"segment": [3, 1], "score": 1}]}}))
    assert main(["validate", "-g", gt, "-p", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "label" in err and "segment" in err
    # Invalid option values: 1.
    assert main(diagnose_args(data_dir, tmp_path / "o", "--tiou-thresholds", "0.5,1.5")) == 1
    assert main(["synth", "-o", str(tmp_path / "s"), "--mixture", "TP=0.5"]) == 1
    # Usage errors come from argparse and exit with 2.
    with pytest.raises(SystemExit) as exc:
        main(["diagnose", "-g", gt])
    assert exc.value.code == 2
