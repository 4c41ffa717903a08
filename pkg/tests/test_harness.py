import json
import os

import numpy as np
import pytest

from turbmodes.cli import cli_main
from turbmodes.harness import (
    CalibrationError,
    SimConfig,
    calibrate_cn2,
    config_from_json,
    report_from_json,
    run_experiment,
    write_outputs,
)


def small_config(**overrides):
    base = dict(
        dimensions=(2,),
        bases=("logical",),
        cn2=10 ** (-12.5),
        grid_n=128,
        realizations=4,
    )
    base.update(overrides)
    return SimConfig(**base)


class TestSimConfig:
    def test_defaults_resolve(self):
        c = SimConfig(dimensions=(2, 4))
        assert c.resolved_aperture() == pytest.approx(8 * c.w0)
        assert c.resolved_window() == pytest.approx(8 * c.w0 * 2.0)
        assert c.grid().n == 512

    def test_explicit_values_win(self):
        c = SimConfig(aperture=5e-3, window=20e-3)
        assert c.resolved_aperture() == 5e-3
        assert c.resolved_window() == 20e-3

    def test_rejects_unknown_basis(self):
        with pytest.raises(ValueError, match="basis"):
            SimConfig(bases=("fourier",))

    def test_echo_resolves_every_default(self):
        c = small_config()
        echo = c.echo()
        assert echo["aperture"] is not None
        assert echo["window"] is not None
        # echo must round-trip into an equivalent config
        assert config_from_json(echo) == SimConfig(
            **{**echo, "aperture": c.resolved_aperture(), "window": c.resolved_window(),
               "dimensions": tuple(echo["dimensions"]), "bases": tuple(echo["bases"])}
        )

    def test_hash_sensitive_to_parameters(self):
        a = small_config()
        b = small_config(cn2=1e-13)
        assert a.config_hash() != b.config_hash()
        assert a.config_hash() == small_config().config_hash()

    def test_singapore_keys_coerced(self):
        c = SimConfig(singapore_thresholds={"2": "33.33"})
        assert c.singapore_thresholds == {2: 33.33}


class TestRunExperiment:
    def test_zero_turbulence_floor(self):
        report = run_experiment(small_config(cn2=1e-30))
        assert report.results[0].report.qder < 1e-6

    def test_labels_cover_bases_and_dims(self):
        config = small_config(dimensions=(2, 3), bases=("logical", "angular"))
        report = run_experiment(config)
        labels = [r.label for r in report.results]
        assert labels == ["d2:OAM", "d2:ANG", "d3:OAM", "d3:ANG"]

    def test_mub_choice_skips_logical_member(self):
        report = run_experiment(small_config(bases=("logical", "mub"), realizations=2))
        labels = [r.label for r in report.results]
        assert labels[0] == "d2:OAM"
        assert all(lbl.startswith("d2:MUB") for lbl in labels[1:])
        assert len(labels) == 3  # OAM + 2 non-logical family members for d=2

    def test_sic_uses_singapore_thresholds(self):
        config = small_config(
            bases=("sic",), realizations=2, singapore_thresholds={2: 38.93}
        )
        report = run_experiment(config)
        run = report.results[0]
        assert run.kind == "sic"
        assert run.crosstalk.values.shape == (4, 4)
        assert "singapore" in run.report.thresholds

    def test_repeat_runs_identical(self):
        config = small_config()
        a = run_experiment(config).to_json()
        b = run_experiment(config).to_json()
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_serial_equals_parallel(self):
        config = small_config(realizations=6)
        serial = run_experiment(config, workers=1)
        parallel = run_experiment(config, workers=4)
        for s, p in zip(serial.results, parallel.results):
            np.testing.assert_array_equal(s.crosstalk.values, p.crosstalk.values)
            np.testing.assert_array_equal(s.crosstalk.stddev, p.crosstalk.stddev)
            assert s.report.qder == p.report.qder

    def test_ao_reduces_error_on_shared_screens(self):
        config = small_config(realizations=6)
        off = run_experiment(config)
        on = run_experiment(SimConfig(**{**config.echo(), "ao_enabled": True,
                                         "dimensions": (2,), "bases": ("logical",)}))
        assert on.results[0].report.qder < off.results[0].report.qder

    def test_timings_present_but_not_in_report_json(self):
        report = run_experiment(small_config(realizations=2))
        assert report.timings["total_s"] > 0
        assert "timings" not in report.to_json()

    def test_report_json_round_trip(self):
        report = run_experiment(small_config(realizations=2))
        payload = json.loads(json.dumps(report.to_json(), sort_keys=True))
        restored = report_from_json(payload)
        # echo resolves defaults, so equality holds at the hash level
        assert restored.config.config_hash() == report.config.config_hash()
        assert restored.results[0].report.qder == report.results[0].report.qder
        np.testing.assert_array_equal(
            restored.results[0].crosstalk.values, report.results[0].crosstalk.values
        )


class TestWriteOutputs:
    def test_files_written(self, tmp_path):
        report = run_experiment(small_config(realizations=2))
        write_outputs(report, tmp_path)
        names = sorted(os.listdir(tmp_path))
        assert names == [
            "crosstalk_d2_OAM.csv",
            "qder_summary.csv",
            "report.json",
            "timing.json",
        ]

    def test_report_json_byte_identical_across_runs(self, tmp_path):
        config = small_config(realizations=2)
        write_outputs(run_experiment(config), tmp_path / "a")
        write_outputs(run_experiment(config, workers=3), tmp_path / "b")
        a = (tmp_path / "a" / "report.json").read_bytes()
        b = (tmp_path / "b" / "report.json").read_bytes()
        assert a == b

    def test_field_dumps(self, tmp_path):
        report = run_experiment(small_config(realizations=1))
        write_outputs(report, tmp_path, dump_fields=True)
        dumped = sorted(os.listdir(tmp_path / "fields"))
        assert dumped == ["d2_OAM_00.npz", "d2_OAM_01.npz"]


class TestCalibrate:
    def test_reaches_target(self):
        config = small_config(realizations=8)
        result = calibrate_cn2(0.10, probe_dim=2, config=config,
                               bracket=(1e-16, 1e-11))
        assert abs(result.qder - 0.10) <= max(3 * result.stderr, 0.02)
        assert 1e-16 < result.cn2 < 1e-11

    def test_unreachable_target_raises(self):
        config = small_config(realizations=4)
        with pytest.raises(CalibrationError, match="outside achievable"):
            calibrate_cn2(0.9, probe_dim=2, config=config, bracket=(1e-17, 1e-15))

    def test_zero_target_returns_bracket_floor(self):
        config = small_config(realizations=4)
        result = calibrate_cn2(0.0, probe_dim=2, config=config, bracket=(1e-18, 1e-12))
        assert result.zero_target
        assert result.cn2 == 1e-18
        assert result.qder < 1e-6

    def test_rejects_bad_target(self):
        with pytest.raises(ValueError):
            calibrate_cn2(1.5, probe_dim=2, config=small_config())


class TestCli:
    def test_bases_certify(self, capsys):
        assert cli_main(["bases", "--dim", "3", "--certify"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "4 bases" in out

    def test_thresholds(self, capsys):
        assert cli_main(["thresholds", "--dim", "2"]) == 0
        assert "BB84 11.00%" in capsys.readouterr().out

    def test_simulate_round_trip(self, tmp_path, capsys):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(small_config(realizations=2).echo()))
        out_dir = tmp_path / "out"
        assert cli_main(["simulate", "--config", str(config_path), "--out", str(out_dir)]) == 0
        assert (out_dir / "report.json").exists()
        assert "QDER" in capsys.readouterr().out

    def test_screen_outputs_json(self, tmp_path):
        out = tmp_path / "screens.json"
        rc = cli_main([
            "screen", "--cn2", "1e-14", "--n", "64", "--count", "2", "--out", str(out)
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert len(payload["screens"]) == 2
        assert payload["fried_parameter_m"] > 0

    def test_missing_config_reports_json_error(self, tmp_path, capsys):
        rc = cli_main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", "x"])
        assert rc == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "FileNotFoundError"

    def test_unknown_dim_fails_cleanly(self, capsys):
        rc = cli_main(["bases", "--dim", "10"])
        assert rc == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "DimensionError"
