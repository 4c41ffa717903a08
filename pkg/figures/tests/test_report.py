import json
import os

import numpy as np
import pytest

from turbfigs.report import ReportParseError, fields_dir, load_report

DATA = os.path.join(os.path.dirname(__file__), "data")


def minimal_report(dim=2, qder=0.0, thresholds=None, values=None):
    values = values if values is not None else np.eye(dim).tolist()
    return {
        "version": "0.1.0",
        "config": {"ao_enabled": False},
        "config_hash": "0" * 64,
        "results": [
            {
                "dim": dim,
                "label": f"d{dim}:OAM",
                "kind": "mub",
                "crosstalk": {
                    "dim": dim,
                    "kind": "mub",
                    "realizations": 1,
                    "values": values,
                    "stddev": np.zeros((dim, dim)).tolist(),
                },
                "qder": {
                    "label": f"d{dim}:OAM",
                    "qder": qder,
                    "stddev": 0.0,
                    "thresholds": thresholds or {},
                },
            }
        ],
    }


def write_report(tmp_path, payload, name="report.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestLoadReport:
    def test_golden_report_parses(self):
        report = load_report(os.path.join(DATA, "golden_off"))
        assert report.labels() == ["d2:OAM", "d2:ANG", "d4:OAM", "d4:ANG"]
        assert not report.ao_enabled
        d2 = report.result("d2:OAM")
        assert d2.values.shape == (2, 2)
        np.testing.assert_allclose(d2.values.sum(axis=1), 1.0, atol=1e-9)
        assert "bb84" in d2.thresholds

    def test_directory_or_file_path(self, tmp_path):
        path = write_report(tmp_path, minimal_report())
        assert load_report(path).config_hash == "0" * 64
        assert load_report(tmp_path).config_hash == "0" * 64

    def test_default_result_is_first(self):
        report = load_report(os.path.join(DATA, "golden_on"))
        assert report.result(None).label == "d2:OAM"
        assert report.panel_title == "AO on"

    def test_unknown_label(self):
        report = load_report(os.path.join(DATA, "golden_off"))
        with pytest.raises(ReportParseError, match="d9:OAM"):
            report.result("d9:OAM")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ReportParseError, match="no such report"):
            load_report(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text("{not json")
        with pytest.raises(ReportParseError, match="invalid JSON"):
            load_report(path)

    def test_missing_key_names_path(self, tmp_path):
        payload = minimal_report()
        del payload["results"][0]["crosstalk"]["values"]
        path = write_report(tmp_path, payload)
        with pytest.raises(ReportParseError, match="values"):
            load_report(path)

    def test_wrong_crosstalk_shape(self, tmp_path):
        payload = minimal_report(values=np.eye(3).tolist())
        path = write_report(tmp_path, payload)
        with pytest.raises(ReportParseError, match="expected"):
            load_report(path)

    def test_qder_out_of_range(self, tmp_path):
        path = write_report(tmp_path, minimal_report(qder=1.7))
        with pytest.raises(ReportParseError, match="outside"):
            load_report(path)

    def test_empty_results(self, tmp_path):
        payload = minimal_report()
        payload["results"] = []
        path = write_report(tmp_path, payload)
        with pytest.raises(ReportParseError, match="no results"):
            load_report(path)

    def test_fields_dir_is_sibling(self):
        report = load_report(os.path.join(DATA, "golden_off"))
        assert os.path.isdir(fields_dir(report))
