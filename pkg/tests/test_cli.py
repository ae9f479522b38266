"""Configuration, batch runner, output files and the command-line entry point."""

import json
import pytest

from nsinflation.experiments import (CSV_COLUMNS, ConfigError, ExperimentConfig, emit_plots,
                                     load_config, parse_config, run)
from nsinflation.experiments.cli import main
from nsinflation.experiments.runner import ExperimentResult
from nsinflation.field_rep import GridField


def test_config_echo_round_trip():
    cfg = parse_config("experiment = picard\nN = 3..5  # inclusive range\ndelta = [0.25]\n"
                       "eps0 = 0.05\nmemory_cap = 1000000\n")
    assert cfg.N == (3, 4, 5) and cfg.experiment == "picard"
    assert parse_config(cfg.echo()) == cfg
    assert parse_config(ExperimentConfig().echo()) == ExperimentConfig()


@pytest.mark.parametrize("text,field", [("N = [1]", "N"), ("delta = [0.6]", "delta"),
                                        ("d = 4", "d"), ("K = 0", "K"),
                                        ("tail_tol = 2", "tail_tol")])
def test_invalid_values_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text).validate()
    assert exc.value.field == field


def test_unknown_key_and_uncertified_regime():
    with pytest.raises(ConfigError, match="unknown"):
        parse_config("colour = red")
    cfg = parse_config("delta = [0.5]")
    with pytest.raises(ConfigError, match="uncertified"):
        cfg.validate()
    assert cfg.validate(uncertified=True) is cfg


def test_run_records_error_codes():
    res = run(parse_config("experiment = data\ndelta = [0.6]"))
    assert not res.ok and res.exit_code == 1
    assert res.errors[0]["code"] == "invalid_config" and res.errors[0]["field"] == "delta"
    capped = run(parse_config("experiment = picard\nN = [3]\nK = 2\nmemory_cap = 1000"))
    assert capped.errors[0]["code"] == "memory_cap"


def test_frame_check_passes():
    res = run(ExperimentConfig(experiment="frame-check"))
    assert res.ok and res.checks == {"partition_of_unity": True, "dilation_identity": True}


def test_data_run_is_deterministic_and_thread_independent(tmp_path):
    cfg = parse_config("experiment = data\nN = [3, 4]\ndelta = [0.25]")
    a, b = run(cfg), run(cfg, threads=2)
    assert a.ok and a.csv_text() == b.csv_text()
    assert a.to_json(include_timings=False) == b.to_json(include_timings=False)
    header = a.csv_text().splitlines()[0].split(",")
    assert tuple(header) == CSV_COLUMNS


def test_picard_run_and_plots(tmp_path):
    cfg = parse_config("experiment = picard\nN = [3]\nK = 3")
    res = run(cfg, dump_fields=tmp_path / "fields")
    assert res.ok, res.errors
    assert res.records[0]["support_defect"] < 1e-10
    assert any((tmp_path / "fields").rglob("*.json"))
    files = emit_plots(res, tmp_path / "plots")
    names = sorted(p.name for p in files)
    assert names == ["margins.dat", "margins.svg", "theta_lower.dat", "theta_lower.svg"]


def test_empty_result_warns(tmp_path):
    with pytest.warns(UserWarning, match="empty"):
        assert emit_plots(ExperimentResult(ExperimentConfig()), tmp_path) == []


def test_cli_main(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("N = [3]\ndelta = [0.25]\n")
    out = tmp_path / "out"
    assert main(["data", "--config", str(conf), "--out", str(out), "--dump-fields"]) == 0
    assert (out / "results.csv").exists()
    assert (out / "plots" / "norm_u0.svg").exists()
    dumped = sorted((out / "fields").glob("u0_*patch0"))
    assert dumped and GridField.load(dumped[0]).values.shape[0] == 2
    payload = json.loads((out / "result.json").read_text())
    assert payload["ok"] and load_config(conf, experiment="data", out=str(out)) == \
        parse_config(payload["config_echo"])
    assert "data: ok" in capsys.readouterr().out
    bad = tmp_path / "bad.conf"
    bad.write_text("delta = [2]\n")
    assert main(["data", "--config", str(bad), "--out", str(out)]) == 1
    assert main(["data", "--config", str(tmp_path / "missing.conf")]) == 2
    assert main(["data", "--threads", "0", "--out", str(out)]) == 2
    with pytest.raises(SystemExit):
        main(["no-such-experiment"])


def test_memory_cap_environment(monkeypatch):
    from nsinflation.field_rep import memory_cap_bytes

    monkeypatch.setenv("NSINFLATION_MEMORY_CAP", "2M")
    assert memory_cap_bytes() == 2 * 1024 ** 2
