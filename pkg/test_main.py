# test_main.py
import json

import pandas as pd
import pytest

import main
from config_presets import PRESETS, preset_config
from power_optimizer import cell_rate_for_share


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("ALOHA_LOGS_DIR", str(tmp_path / "logs"))
    return tmp_path


def write_config(directory, config, name="network.json"):
    path = directory / name
    path.write_text(json.dumps(config.to_dict(), indent=2))
    return str(path)


def run(*argv):
    return main.main([str(a) for a in argv])


def test_parse_floats():
    assert main.parse_floats("0.1, 0.2,0.3") == [0.1, 0.2, 0.3]
    assert main.parse_floats("0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(main.UsageError):
        main.parse_floats("a,b")


# --- analyze ------------------------------------------------------------------

def test_analyze_symmetric_pair(workspace, symmetric_pair, capsys):
    config = write_config(workspace, symmetric_pair)
    assert run("analyze", "--config", config) == main.EXIT_OK
    frame = pd.read_csv(workspace / "results" / "analyze.csv")
    assert list(frame.columns) == ["class", "success_prob", "mean_delay", "load", "channel_share", "single_class_bound"]
    assert frame["mean_delay"].tolist() == pytest.approx([10 / 3, 10 / 3], rel=1e-12)
    summary = json.loads((workspace / "results" / "analyze_summary.json").read_text())
    assert summary["mode"] == "multi-class"
    assert summary["sum_residual"] < 1e-10
    assert "mean_delay" in capsys.readouterr().out


def test_analyze_json_format(workspace, symmetric_pair, capsys):
    config = write_config(workspace, symmetric_pair)
    assert run("analyze", "--config", config, "--format", "json", "--out", workspace / "json_out") == main.EXIT_OK
    records = json.loads((workspace / "json_out" / "analyze.json").read_text())
    assert [r["class"] for r in records] == [0, 1]
    assert json.loads(capsys.readouterr().out)[0]["class"] == 0


def test_analyze_single_class_with_partial_access(workspace, single_class):
    config = write_config(workspace, single_class(arrival_rate=0.1, access_prob=0.5))
    assert run("analyze", "--config", config) == main.EXIT_OK
    summary = json.loads((workspace / "results" / "analyze_summary.json").read_text())
    assert summary["mode"] == "single-class"


def test_analyze_unstable_exit_code(workspace, single_class, capsys):
    config = write_config(workspace, single_class(arrival_rate=0.6))
    assert run("analyze", "--config", config) == main.EXIT_UNSTABLE
    assert "unstable" in capsys.readouterr().err


# --- stability -----------------------------------------------------------------

def test_stability_methods(workspace, symmetric_pair, capsys):
    config = write_config(workspace, symmetric_pair)
    assert run("stability", "--config", config) == main.EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "stable"
    assert run("stability", "--config", config, "--method", "permutation") == main.EXIT_OK
    out = capsys.readouterr().out
    assert "witness permutation:" in out
    verdict = json.loads((workspace / "results" / "stability.json").read_text())
    assert verdict["stable"] is True


def test_stability_unstable_and_infeasible(workspace, capsys):
    config = write_config(workspace, preset_config([0.5, 0.5], [0.6, 0.6]))
    assert run("stability", "--config", config) == main.EXIT_UNSTABLE
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "unstable"
    assert "violated class:" in out
    assert run("stability", "--config", config, "--method", "corollary") == main.EXIT_INFEASIBLE
    assert capsys.readouterr().out.splitlines()[0] == "infeasible"


def test_stability_corollary_reports_feasibility(workspace, symmetric_pair, capsys):
    config = write_config(workspace, symmetric_pair)
    assert run("stability", "--config", config, "--method", "corollary") == main.EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "feasible"


def test_permutation_cap_is_an_error(workspace, symmetric_pair, capsys):
    config = write_config(workspace, symmetric_pair)
    assert run("stability", "--config", config, "--method", "permutation", "--cap", 1) == main.EXIT_ERROR
    assert "check_region" in capsys.readouterr().err


# --- optimize / max-rate --------------------------------------------------------------

def test_optimize_with_verification(workspace, symmetric_pair):
    config = write_config(workspace, symmetric_pair)
    assert run("optimize", "--config", config, "--weights", "1,0.1", "--verify", "--starts", 8) == main.EXIT_OK
    frame = pd.read_csv(workspace / "results" / "optimize.csv")
    assert frame["power"].iloc[-1] == 1.0
    assert frame["mean_delay"].iloc[0] < frame["mean_delay"].iloc[1]
    summary = json.loads((workspace / "results" / "optimize_summary.json").read_text())
    assert summary["weights"] == [1.0, 0.1]
    assert summary["max_power_deviation"] < 1e-3


def test_optimize_infeasible_exit_code(workspace):
    config = write_config(workspace, preset_config([0.5, 0.5], [0.6, 0.6]))
    assert run("optimize", "--config", config) == main.EXIT_INFEASIBLE


def test_max_rate(workspace):
    base = PRESETS["fig4-envelope"].config
    config = write_config(workspace, base.with_class(1, arrival_rate=cell_rate_for_share(base, 0.5, 3.0)))
    assert run("max-rate", "--config", config, "--d1-max", 1e12) == main.EXIT_OK
    summary = json.loads((workspace / "results" / "max_rate.json").read_text())
    assert summary["max_a1"] == pytest.approx(1 / 3, rel=1e-9)


def test_max_rate_saturated_cell(workspace):
    config = write_config(workspace, PRESETS["fig4-envelope"].config.with_class(1, arrival_rate=0.45))
    assert run("max-rate", "--config", config) == main.EXIT_INFEASIBLE


# --- simulate / sweep / preset --------------------------------------------------------

def test_simulate_outputs_are_reproducible(workspace, single_class):
    config = write_config(workspace, single_class(arrival_rate=0.25))
    flags = ["--mode", "mean-field", "--slots", 1000, "--replications", 2, "--seed", 42, "--compare-analytic"]
    assert run("simulate", "--config", config, "--out", workspace / "first", *flags) == main.EXIT_OK
    assert run("simulate", "--config", config, "--out", workspace / "second", *flags) == main.EXIT_OK
    for name in ("simulation.csv", "trajectory_rep0.csv", "trajectory_rep1.csv", "simulation_summary.json"):
        assert (workspace / "first" / name).read_bytes() == (workspace / "second" / name).read_bytes()
    table = pd.read_csv(workspace / "first" / "simulation.csv")
    assert table.loc[0, "analytic_mean_delay"] == pytest.approx(1.5)


def test_simulate_seed_from_environment(workspace, single_class, monkeypatch):
    config = write_config(workspace, single_class(arrival_rate=0.25))
    flags = ["--mode", "mean-field", "--slots", 1000, "--replications", 1]
    monkeypatch.setenv("ALOHA_SEED", "42")
    assert run("simulate", "--config", config, "--out", workspace / "env", *flags) == main.EXIT_OK
    monkeypatch.delenv("ALOHA_SEED")
    assert run("simulate", "--config", config, "--out", workspace / "flag", "--seed", 42, *flags) == main.EXIT_OK
    assert (workspace / "env" / "simulation.csv").read_bytes() == (workspace / "flag" / "simulation.csv").read_bytes()


def test_simulate_grows_small_queue_buffer(workspace, single_class):
    config = write_config(workspace, single_class(arrival_rate=0.55))
    flags = ["--mode", "mean-field", "--slots", 3000, "--replications", 3, "--queue-capacity", 4]
    assert run("simulate", "--config", config, *flags) == main.EXIT_OK
    summary = json.loads((workspace / "results" / "simulation_summary.json").read_text())
    assert summary["growing_classes"] == [0]


@pytest.mark.parametrize("variable", ["ALOHA_SEED", "ALOHA_WORKERS", "ALOHA_PERMUTATION_CAP"])
def test_non_integer_environment_is_an_error(workspace, symmetric_pair, monkeypatch, capsys, variable):
    config = write_config(workspace, symmetric_pair)
    monkeypatch.setenv(variable, "abc")
    assert run("stability", "--config", config) == main.EXIT_ERROR
    assert variable in capsys.readouterr().err


def test_simulate_rejects_short_runs(workspace, single_class):
    config = write_config(workspace, single_class(arrival_rate=0.25))
    assert run("simulate", "--config", config, "--slots", 10) == main.EXIT_ERROR


def test_sweep_command(workspace, symmetric_pair):
    config = write_config(workspace, symmetric_pair)
    argv = ["sweep", "--config", config, "--param", "classes[0].arrival_rate", "--grid", "0.1:0.7:4"]
    assert run(*argv, "--outputs", "mean_delay,stable") == main.EXIT_OK
    frame = pd.read_csv(workspace / "results" / "sweep.csv")
    assert len(frame) == 4
    assert frame["stable"].all()


def test_preset_with_gnuplot(workspace):
    assert run("preset", "fig2", "--skip-simulation", "--gnuplot") == main.EXIT_OK
    assert (workspace / "results" / "fig2-weights.csv").exists()
    assert "fig2-weights.csv" in (workspace / "results" / "fig2-weights.gp").read_text()


# --- errors -------------------------------------------------------------------

def test_unknown_preset(workspace, capsys):
    assert run("preset", "fig9", "--skip-simulation") == main.EXIT_ERROR
    assert "available presets" in capsys.readouterr().err


def test_malformed_config(workspace, capsys):
    path = workspace / "broken.json"
    path.write_text('{"alpha": 4.0,\n  "classes": [}\n')
    assert run("analyze", "--config", path) == main.EXIT_ERROR
    assert f"{path}:2:" in capsys.readouterr().err


def test_missing_config_flag(workspace):
    assert run("analyze") == main.EXIT_ERROR


def test_usage_errors(workspace, capsys):
    assert run("frobnicate") == main.EXIT_ERROR
    assert run("stability", "--method", "guess") == main.EXIT_ERROR
    assert "aloha-network" in capsys.readouterr().err
