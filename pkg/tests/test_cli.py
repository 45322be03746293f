"""Command-line interface: subcommands, artifacts, exit codes."""

from __future__ import annotations

import csv
import json

import pytest

from singreg import (
    ExperimentConfig,
    GridConfig,
    McmcConfig,
    PriorVolumeConfig,
    save_config,
)
from singreg.cli import main

# --- fixtures -----------------------------------------------------------------


def _tiny_config(**overrides) -> ExperimentConfig:
    base = dict(
        model="linear-1",
        sigma=0.2,
        beta=(1.0,),
        n=(20, 40),
        replications=3,
        master_seed=314,
        backend="grid",
        xq_size=300,
        grid=GridConfig(points_per_axis=24, levels=2),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    save_config(_tiny_config(), path)
    return path


@pytest.fixture
def sweep_dir(tmp_path, config_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", str(config_path), "--out", str(out)]) == 0
    return out


# --- parser behaviour -----------------------------------------------------------


def test_version_exits_zero(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert "singreg" in capsys.readouterr().out


def test_missing_command_is_a_user_error(capsys):
    assert main([]) == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_command_is_a_user_error(capsys):
    assert main(["frobnicate"]) == 1
    assert "error:" in capsys.readouterr().err


def test_unexpected_exception_exits_two(monkeypatch, tmp_path, capsys):
    import singreg.cli as cli

    def boom(*args, **kwargs):
        raise RuntimeError("wiring fault")

    monkeypatch.setattr(cli, "generate", boom)
    code = main(
        ["generate", "--model", "linear-1", "--sigma", "0.1", "--n", "10",
         "--seed", "1", "--out", str(tmp_path / "d.csv")]
    )
    assert code == 2
    assert "wiring fault" in capsys.readouterr().err


# --- generate -------------------------------------------------------------------


def test_generate_writes_csv_and_sidecar(tmp_path, capsys):
    out = tmp_path / "data.csv"
    code = main(
        ["generate", "--model", "linear-2", "--sigma", "0.1", "--n", "25",
         "--seed", "99", "--out", str(out)]
    )
    assert code == 0
    assert "wrote" in capsys.readouterr().out
    with out.open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x_1", "x_2", "y_1"]
    assert len(rows) == 26
    sidecar = json.loads(out.with_suffix(".csv.json").read_text())
    assert sidecar["model"] == "linear-2"
    assert sidecar["n"] == 25


def test_generate_rejects_unknown_model(tmp_path, capsys):
    code = main(
        ["generate", "--model", "mystery", "--sigma", "0.1", "--n", "5",
         "--seed", "1", "--out", str(tmp_path / "d.csv")]
    )
    assert code == 1
    assert "error:" in capsys.readouterr().err


# --- sample ---------------------------------------------------------------------


def test_sample_grid_backend_writes_draws(tmp_path, config_path, capsys):
    out = tmp_path / "draws.csv"
    code = main(
        ["sample", "--config", str(config_path), "--n", "20", "--beta", "1.0",
         "--out", str(out)]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "method=grid" in text
    with out.open(newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["w_1", "chain", "iteration"]


def test_sample_mcmc_backend_reports_acceptance(tmp_path, capsys):
    path = tmp_path / "config.json"
    save_config(
        _tiny_config(
            backend="mcmc",
            mcmc=McmcConfig(n_chains=2, burn_in=200, draws_per_chain=300),
        ),
        path,
    )
    out = tmp_path / "draws.csv"
    code = main(["sample", "--config", str(path), "--n", "20", "--beta", "1.0", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "method=mcmc" in text
    assert "acceptance per chain:" in text


def test_sample_off_grid_cell_is_a_user_error(tmp_path, config_path, capsys):
    code = main(
        ["sample", "--config", str(config_path), "--n", "999", "--beta", "1.0",
         "--out", str(tmp_path / "draws.csv")]
    )
    assert code == 1
    assert "not a cell" in capsys.readouterr().err


# --- estimate -------------------------------------------------------------------


def test_estimate_prints_the_report_columns(config_path, capsys):
    code = main(["estimate", "--config", str(config_path), "--n", "20", "--beta", "1.0"])
    assert code == 0
    text = capsys.readouterr().out
    for label in ("G", "T", "V", "G_hat", "stein_lhs"):
        assert label in text


def test_estimate_json_is_parseable(config_path, capsys):
    code = main(
        ["estimate", "--config", str(config_path), "--n", "20", "--beta", "1.0", "--json"]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n"] == 20
    assert payload["v"] >= 0.0
    assert payload["g"] >= payload["s"]


# --- sweep and report ------------------------------------------------------------


def test_sweep_cli_writes_artifacts(sweep_dir, capsys):
    assert (sweep_dir / "raw.csv").exists()
    assert (sweep_dir / "summary.json").exists()
    assert (sweep_dir / "config.json").exists()


def test_report_prints_table_and_checks(sweep_dir, capsys):
    code = main(["report", "--dir", str(sweep_dir)])
    assert code == 0
    text = capsys.readouterr().out
    assert "n(G-S)" in text
    assert "[PASS]" in text or "[FAIL]" in text


def test_report_writes_plot_csv(sweep_dir, tmp_path, capsys):
    plots = tmp_path / "plots.csv"
    code = main(["report", "--dir", str(sweep_dir), "--plots", str(plots)])
    assert code == 0
    with plots.open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["model", "beta", "n", "metric", "value", "se"]
    assert len(rows) > 1


def test_report_check_exits_three_when_a_check_fails(sweep_dir, capsys):
    summary_path = sweep_dir / "summary.json"
    summary = json.loads(summary_path.read_text())
    for cell in summary["cells"]:
        cell["derived"]["ghat_gap"] = 9.9
        cell["derived"]["ghat_gap_se"] = 1e-9
    summary_path.write_text(json.dumps(summary))
    code = main(["report", "--dir", str(sweep_dir), "--check"])
    assert code == 3
    text = capsys.readouterr().out
    assert "[FAIL] ghat-identity" in text


def test_report_missing_dir_is_a_user_error(tmp_path, capsys):
    assert main(["report", "--dir", str(tmp_path / "nowhere")]) == 1
    assert "error:" in capsys.readouterr().err


# --- rlct -----------------------------------------------------------------------


def test_rlct_charts_single(tmp_path, capsys):
    path = tmp_path / "charts.json"
    path.write_text(json.dumps({"charts": [{"k": [1, 0], "h": [0, 0]}]}))
    assert main(["rlct", "--charts", str(path)]) == 0
    text = capsys.readouterr().out
    assert "lam = 1/2 = 0.500000" in text
    assert "multiplicity = 1" in text


def test_rlct_charts_min_over_charts(tmp_path, capsys):
    path = tmp_path / "charts.json"
    path.write_text(
        json.dumps({"charts": [{"k": [2], "h": [3]}, {"k": [1], "h": [0]}]})
    )
    assert main(["rlct", "--charts", str(path)]) == 0
    text = capsys.readouterr().out
    assert "lam = 1/2" in text
    assert "multiplicity = 1" in text
    assert "2 charts" in text


def test_rlct_requires_exactly_one_mode(tmp_path, config_path, capsys):
    assert main(["rlct"]) == 1
    charts = tmp_path / "charts.json"
    charts.write_text(json.dumps({"charts": [{"k": [1], "h": [0]}]}))
    assert main(["rlct", "--charts", str(charts), "--volume"]) == 1


def test_rlct_volume_needs_config_block(tmp_path, config_path, capsys):
    assert main(["rlct", "--volume"]) == 1
    assert main(["rlct", "--volume", "--config", str(config_path)]) == 1
    assert "prior_volume" in capsys.readouterr().err


def test_rlct_volume_fit_recovers_the_linear_exponent(tmp_path, capsys):
    path = tmp_path / "config.json"
    save_config(
        _tiny_config(prior_volume=PriorVolumeConfig(n_samples=100_000)), path
    )
    out = tmp_path / "rlct"
    code = main(["rlct", "--volume", "--config", str(path), "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "volume fit: lam =" in text
    payload = json.loads((out / "volume.json").read_text())
    assert len(payload["profile"]) == 12
    assert 0.4 < payload["lam"] < 0.6
    assert payload["method"] == "volume-fit"


def test_rlct_from_sweep_inverts_at_largest_n(sweep_dir, capsys):
    code = main(
        ["rlct", "--from-sweep", str(sweep_dir), "--config", str(sweep_dir / "config.json")]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "n=40" in text
    assert "lam =" in text and "nu =" in text


def test_rlct_from_sweep_rejects_mismatched_config(sweep_dir, tmp_path, capsys):
    other = tmp_path / "other.json"
    save_config(_tiny_config(master_seed=999), other)
    code = main(["rlct", "--from-sweep", str(sweep_dir), "--config", str(other)])
    assert code == 1
    assert "does not match" in capsys.readouterr().err
