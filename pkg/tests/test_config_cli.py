import csv
import hashlib
import json

import pytest

from taxflow.cli import main
from taxflow.config import ConfigError, parse_config

GOOD = """\
experiment = "simulate"
seed = 3
alpha = 0.3

[market]
model = "gbm"
steps = 40

[batch]
paths = 4
"""


def test_defaults_and_document():
    cfg = parse_config(GOOD)
    assert cfg.seed == 3 and cfg.alpha == 0.3 and cfg.market.model == "gbm"
    assert cfg.market.steps == 40 and cfg.batch.paths == 4
    assert parse_config("").alpha == 0.25


def test_overrides_merge_into_sections():
    cfg = parse_config(GOOD, {"seed": 9, "market": {"model": "crr"}})
    assert cfg.seed == 9 and cfg.market.model == "crr" and cfg.market.steps == 40


def test_errors_carry_line_numbers():
    text = GOOD.replace("alpha = 0.3", "alpha = 1.5").replace("steps = 40", "steps = 40\nvolatility = 2")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    problems = info.value.problems
    assert len(problems) == 2
    assert any(p.startswith("line 3: alpha") for p in problems)
    assert any(p.startswith("line 8: market.volatility") for p in problems)


@pytest.mark.parametrize("text", [
    "seed = -1",
    "[strategy]\nfixture = \"figure9\"",
    "[strategy]\nprices = [1.0, 2.0]",
    "[strategy]\nrule = \"tabulated\"",
    "[strategy]\nprices = [1.0, 2.0]\npositions = [0.0, -1.0]",
    "alpha = ",
])
def test_invalid_documents(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def _read(path):
    return path.read_bytes()


def test_ledger_fixture_exit_and_values(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["ledger", "--fixture", "figure2", "--alpha", "0.25", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "taxflow.csv").open()))
    assert [float(r["Pi_right"]) for r in rows] == [0, 0, 0, 1.0, 0.75]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "ledger" and manifest["violations"] == []
    for name, digest in manifest["files"].items():
        assert hashlib.sha256(_read(out / name)).hexdigest() == digest
    assert "wrote 3 files" in capsys.readouterr().out


def test_reruns_are_byte_identical(tmp_path):
    cfg = tmp_path / "sim.toml"
    cfg.write_text(GOOD)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["manifest.json", "simulate.csv", "taxflow.csv"]
    assert all(_read(a / n) == _read(b / n) for n in names)
    c = tmp_path / "c"
    assert main(["simulate", "--config", str(cfg), "--seed", "4", "--out", str(c)]) == 0
    assert _read(a / "simulate.csv") != _read(c / "simulate.csv")


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TAXFLOW_OUT", str(tmp_path / "env"))
    assert main(["ledger", "--fixture", "figure3"]) == 0
    assert (tmp_path / "env" / "ledger.csv").exists()


def test_config_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("alpha = 2.0\n")
    assert main(["ledger", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "line 1: alpha" in capsys.readouterr().err
    assert main(["ledger", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 1
    other = tmp_path / "other.toml"
    other.write_text('experiment = "converge"\n')
    assert main(["ledger", "--config", str(other), "--out", str(tmp_path)]) == 1


def test_runtime_errors_exit_three(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[strategy]\npositions = [0.0, 1.0]\nfixture = \"figure2\"\n[batch]\npaths = 1\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "simulate failed" in capsys.readouterr().err


def test_violations_exit_two(tmp_path, monkeypatch):
    from taxflow import runner

    def broken(cfg):
        rep = runner.Report()
        rep.add("x.csv", "a\n")
        rep.violations.append("synthetic")
        return rep

    monkeypatch.setitem(runner.EXPERIMENT_RUNNERS, "verify", broken)
    assert main(["verify", "--out", str(tmp_path)]) == 2
    assert json.loads((tmp_path / "manifest.json").read_text())["violations"] == ["synthetic"]


@pytest.mark.parametrize("argv, files", [
    (["efficient", "--steps", "30"], {"efficient.csv"}),
    (["compare-dividends", "--batch", "3"], {"comparison.csv", "comparison_batch.csv", "summary.json"}),
    (["converge", "--levels", "2", "--batch", "2"], {"convergence.csv", "convergence_paths.csv", "cauchy.csv"}),
    (["verify"], {"verify.json"}),
    (["simulate", "--model", "jump", "--batch", "2", "--steps", "20"], {"simulate.csv", "taxflow.csv"}),
])
def test_every_experiment_runs(tmp_path, argv, files):
    assert main(argv + ["--out", str(tmp_path)]) == 0
    assert {p.name for p in tmp_path.iterdir()} == files | {"manifest.json"}


def test_dividend_summary_reports_deferral(tmp_path):
    assert main(["compare-dividends", "--batch", "3", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["violations"] == 0 and summary["min_gap"] >= -1e-9
    d = summary["deferral"]
    assert d["deferred_closed_form"] > d["taxed_closed_form"]
