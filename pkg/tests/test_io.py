import json

import pytest

from tadiag.dataset import ValidationError
from tadiag.io import (
    InputError,
    attach_characteristics,
    ground_truth_document,
    load_ground_truth,
    load_predictions,
    parse_predictions,
    predictions_document,
    read_json,
)

GT = {
    "database": {
        "v1": {
            "duration": 100.0,
            "subset": "validation",
            "annotations": [{"label": "x", "segment": [0, 10]}, {"label": "x", "segment": [40, 60]}],
        },
        "v2": {"duration": 50.0, "subset": "training", "annotations": [{"label": "y", "segment": [5, 25]}]},
    }
}


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


@pytest.fixture
def dataset(tmp_path):
    return load_ground_truth(write(tmp_path, "gt.json", json.dumps(GT)))


def test_malformed_json_reports_byte_offset(tmp_path):
    # Multi-byte characters before the error must be counted as bytes.
    text = '{"database": {"vé": {"duration": 10,, }}}'
    p = write(tmp_path, "bad.json", text)
    with pytest.raises(InputError) as err:
        read_json(p)
    expected = len(text[: text.index(",,") + 1].encode("utf-8"))
    assert f"byte offset {expected}" in str(err.value)
    assert "bad.json" in str(err.value)


def test_non_utf8_reports_offset(tmp_path):
    p = tmp_path / "latin.json"
    p.write_bytes(b'{"a": "\xff"}')
    with pytest.raises(InputError, match="byte offset 7"):
        read_json(p)


def test_missing_file(tmp_path):
    with pytest.raises(InputError, match="cannot read"):
        read_json(tmp_path / "nope.json")


def test_subset_restriction(tmp_path):
    ds = load_ground_truth(write(tmp_path, "gt.json", json.dumps(GT)), subset="validation")
    assert set(ds.videos) == {"v1"}
    assert len(ds.instances) == 2


def test_prediction_issues_carry_field_paths(dataset):
    raw = {
        "results": {
            "v1": [
                {"label": "x", "segment": [5, 2], "score": 0.5},
                {"segment": [0, 1], "score": 0.5},
                {"label": "x", "segment": [0, 1], "score": "high"},
            ],
            "v2": {"label": "y"},
        }
    }
    with pytest.raises(ValidationError) as err:
        parse_predictions(raw, dataset)
    text = "\n".join(err.value.issues)
    assert "results.v1[0].segment" in text
    assert "results.v1[1].label" in text
    assert "results.v1[2]" in text
    assert "results.v2" in text


def test_predictions_unknown_video_dropped_and_negative_start_clamped(dataset):
    raw = {
        "results": {
            "v1": [{"label": "x", "segment": [-2.0, 9.0], "score": 0.9}],
            "ghost": [{"label": "x", "segment": [0, 1], "score": 0.3}],
            "v2": [{"label": "y", "segment": [5, 25], "score": 0.4}],
        }
    }
    preds = parse_predictions(raw, dataset)
    assert len(preds) == 2
    assert preds.start[0] == 0.0
    assert list(preds.prediction_id) == [0, 2]
    joined = " ".join(preds.warnings)
    assert "ghost" in joined and "clamp" in joined


def test_missing_results_object(dataset):
    with pytest.raises(ValidationError, match="results"):
        parse_predictions({"predictions": []}, dataset)


def test_characteristics_attach_and_check(dataset):
    chars = {
        "v1:0": {"context-size": 2, "context-distance": "Near", "agreement": "H"},
        "v1:1": {"context-size": 0, "context-distance": "Inf", "agreement": 0.35, "coverage": "XS"},
        "v2:0": {"context-size": 6, "context-distance": "F", "agreement": [[5, 25], [6, 24], [0, 20]]},
    }
    ds = attach_characteristics(dataset, chars)
    assert list(ds.bucket_array("agreement")) == ["H", "W", "H"]
    assert list(ds.bucket_array("context_distance")) == ["N", "Inf", "F"]
    # Original [5, 25] joins the three re-annotations: median of
    # {1, 0.9, 0.6, 0.9, 0.6, 14/24} is (0.6 + 0.9) / 2.
    assert ds.characteristics[2].agreement_score == pytest.approx(0.75)


def test_characteristics_inconsistencies_reported(dataset):
    chars = {
        "v1:0": {"context-size": 0, "context-distance": "Far"},
        "v1:1": {"context-size": 9},
        "v1:7": {"context-size": 1, "context-distance": "N"},
        "v2:0": {"coverage": "XL", "agreement": "??"},
    }
    with pytest.raises(ValidationError) as err:
        attach_characteristics(dataset, chars)
    text = "\n".join(err.value.issues)
    assert "characteristics.v1:0" in text
    assert "characteristics.v1:1.context-size" in text
    assert "v1:7" in text and "no ground-truth instance" in text
    assert "characteristics.v2:0" in text and "coverage" in text
    assert "agreement" in text


def test_embedded_characteristics_are_read(tmp_path):
    gt = json.loads(json.dumps(GT))
    gt["database"]["v1"]["annotations"][0].update({"context-size": 3, "context-distance": "M", "agreement": "XH"})
    ds = load_ground_truth(write(tmp_path, "gt.json", json.dumps(gt)))
    assert ds.bucket_array("context_size")[0] == "3"
    assert ds.bucket_array("agreement")[0] == "XH"
    assert ds.bucket_array("agreement")[1] is None


def test_documents_round_trip(tmp_path, dataset):
    again = load_ground_truth(write(tmp_path, "gt2.json", json.dumps(ground_truth_document(dataset))))
    assert again.instances == dataset.instances
    raw = {"results": {"v1": [{"label": "x", "segment": [1, 5], "score": 0.25}]}}
    preds = load_predictions(write(tmp_path, "p.json", json.dumps(raw)), dataset)
    assert predictions_document(preds) == raw
