import csv
import json

import pytest

from psifactor import harness
from psifactor.harness import ConfigError, ExperimentConfig, apply_env, config_from_dict, load_config, main, run


def test_config_json_and_toml(tmp_path):
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"seed": 7, "orders": [1, 2], "demo": {"tau": 0.25}}))
    cfg = load_config(j)
    assert cfg.seed == 7 and cfg.orders == [1, 2] and cfg.demo_tau == 0.25
    t = tmp_path / "c.toml"
    t.write_text('eps_max = 0.25\nexperiments = ["classify"]\n[wf]\nn = 256\n')
    cfg = load_config(t)
    assert cfg.eps_max == 0.25 and cfg.experiments == ["classify"] and cfg.wf_n == 256


def test_config_errors_name_the_field(tmp_path):
    with pytest.raises(ConfigError) as info:
        config_from_dict({"nope": 1})
    assert info.value.path == "nope"
    with pytest.raises(ConfigError) as info:
        config_from_dict({"seed": "abc"})
    assert info.value.path == "seed"
    cfg = ExperimentConfig(eps_min=0.5, eps_max=0.25)
    with pytest.raises(ConfigError):
        harness.validate(cfg)
    with pytest.raises(ConfigError):
        harness.validate(ExperimentConfig(experiments=["missing"]))


def test_env_overrides():
    cfg = apply_env(ExperimentConfig(), {"PSIFACTOR_SEED": "11", "PSIFACTOR_ORDERS": "2,3", "PSIFACTOR_FIGURES": "yes", "HOME": "/x"})
    assert cfg.seed == 11 and cfg.orders == [2, 3] and cfg.figures
    with pytest.raises(ConfigError):
        apply_env(ExperimentConfig(), {"PSIFACTOR_BOGUS": "1"})


def test_empty_experiment_list(tmp_path, capsys):
    assert main(["suite", "--experiments", "", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and summary["experiments"] == {}


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"eps_max": 3.0}))
    assert main(["suite", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_constant_compose_all_pass(tmp_path):
    cfg = ExperimentConfig(constant_c=2.0, eps_min=2.0 ** -6, experiments=["compose-residual"])
    report = run(cfg, tmp_path)
    assert report.passed
    rows = list(csv.DictReader(open(tmp_path / "compose.csv", newline="")))
    assert all(float(r["value"]) <= 1e-12 for r in rows if r["order"] == "a#b")


def test_csv_is_deterministic_and_crlf(tmp_path):
    cfg = dict(experiments=["classify"], seed=3)
    run(ExperimentConfig(**cfg), tmp_path / "a")
    run(ExperimentConfig(**cfg), tmp_path / "b")
    a = (tmp_path / "a" / "classify.csv").read_bytes()
    assert a == (tmp_path / "b" / "classify.csv").read_bytes()
    assert b"\r\n" in a


def test_cli_subcommand_flags(tmp_path, capsys):
    code = main(["compose", "--out", str(tmp_path), "--eps-min", str(2.0 ** -6), "--order", "1", "--seed", "5"])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS  compose: compose a#b N=1" in out
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["orders"] == [1] and summary["config"]["seed"] == 5


def test_suite_honours_config_experiment_list(tmp_path):
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"experiments": ["classify"]}))
    assert main(["suite", "--config", str(c), "--out", str(tmp_path / "r")]) == 0
    assert sorted(p.name for p in (tmp_path / "r").iterdir()) == ["classify.csv", "summary.json"]


def test_figures(tmp_path):
    pytest.importorskip("matplotlib")
    run(ExperimentConfig(experiments=["compose-residual"], constant_c=2.0, eps_min=2.0 ** -6, figures=True), tmp_path)
    assert (tmp_path / "compose.png").stat().st_size > 0
