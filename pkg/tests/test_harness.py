import json

import numpy as np
import pytest
import yaml

from capslab.envs import Trajectory, Transition
from capslab.errors import ConfigError, ParseError
from capslab.harness import (
    ComparisonReport,
    EvalNumbers,
    RunResult,
    ablation_sweep,
    build_report,
    collect_results,
    config_schema,
    load_config,
    parse_config,
    report_render,
    run_experiment,
    spectrum_export,
    write_report,
)

TINY = {
    "name": "tiny",
    "env": {"kind": "toy", "params": {"horizon": 60}},
    "algo": {"kind": "td3", "params": {"hidden": [8, 8], "start_steps": 60, "update_after": 60, "batch_size": 16}},
    "caps": {"lambda_t": 1.0, "lambda_s": 1.0, "sigma": 0.05},
    "steps": 150,
    "seeds": [0, 1],
    "eval": {"episodes": 2, "curve_episodes": 1, "interval": 75},
}


def tiny(**over):
    return parse_config({**TINY, **over})


def test_load_config_from_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(TINY))
    cfg = load_config(path)
    assert cfg.caps.build().lambda_t == 1.0 and cfg.seeds == [0, 1]
    assert parse_config(yaml.safe_load(cfg.to_yaml())) == cfg


@pytest.mark.parametrize(
    "change",
    [
        {"caps": {"lambda_t": -1.0}},
        {"seeds": [1, 1]},
        {"seeds": []},
        {"env": {"kind": "mars"}},
        {"algo": {"kind": "td3"}, "surprise": 1},
        {"filter": {"type": "ema", "alpha": 2.0}},
        {"steps": -5},
    ],
)
def test_invalid_configs_are_rejected(change):
    with pytest.raises(ConfigError):
        parse_config({**TINY, **change})


def test_unreadable_config_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_schema_is_published():
    schema = json.loads(config_schema())
    assert {"env", "algo", "caps", "steps", "seeds"} <= set(schema["properties"])


def test_output_root_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("CAPSLAB_OUTPUT", str(tmp_path))
    assert tiny().output_root() == tmp_path
    assert tiny(output_dir="elsewhere").output_root().name == "elsewhere"


def test_modes_mask_weights():
    cfg = tiny()
    assert cfg.with_mode("vanilla").caps.build().is_vanilla
    t = cfg.with_mode("temporal").caps
    s = cfg.with_mode("spatial").caps
    assert (t.lambda_t, t.lambda_s) == (1.0, 0.0)
    assert (s.lambda_t, s.lambda_s) == (0.0, 1.0)
    assert cfg.with_mode("caps").caps == cfg.caps


def test_run_writes_per_seed_artifacts(tmp_path):
    results = run_experiment(tiny(name="exp/caps"), tmp_path)
    assert [r.seed for r in results] == [0, 1]
    for r in results:
        d = tmp_path / f"seed_{r.seed}"
        assert {p.name for p in d.iterdir()} == {"result.json", "curve.csv", "actions.csv", "policy.json"}
        assert RunResult.from_dict(json.loads((d / "result.json").read_text())) == r
        assert (d / "curve.csv").read_text().splitlines()[0] == "step,eval_reward,eval_sm"
        assert r.label == "caps" and not r.failed and r.f_s == 1.0


def test_vanilla_and_caps_rows_pair_up():
    cfg = tiny()
    groups = {"vanilla": run_experiment(cfg.with_mode("vanilla")), "caps": run_experiment(cfg.with_mode("caps"))}
    report = build_report(groups)
    assert [r.label for r in report.rows] == ["vanilla", "caps"]
    assert [r.seed for r in report.results["vanilla"]] == [r.seed for r in report.results["caps"]]
    assert set(report.deltas) == {"caps"}


def test_parallel_workers_match_serial():
    serial = run_experiment(tiny())
    parallel = run_experiment(tiny(workers=2))
    assert [r.to_dict() for r in serial] == [r.to_dict() for r in parallel]


def test_failed_seed_is_reported_not_dropped():
    cfg = tiny(algo={"kind": "td3", "params": {**TINY["algo"]["params"], "critic_lr": 1e300, "max_grad_norm": None}})
    results = run_experiment(cfg)
    assert all(r.failed and r.eval is None and r.error for r in results)
    report = build_report({"broken": results})
    row = report.row("broken")
    assert row.seeds == 2 and row.failed == 2 and row.sm.mean is None
    assert "broken" in report_render(report)


def test_ablation_rejects_unknown_mode():
    with pytest.raises(ConfigError):
        ablation_sweep(tiny(), ["vanilla", "gentle"])


def test_shift_and_filter_evaluations_are_recorded():
    cfg = parse_config({
        **TINY,
        "env": {"kind": "quad", "params": {"horizon": 80}},
        "algo": {"kind": "td3", "params": {"hidden": [8], "start_steps": 40, "update_after": 40, "batch_size": 16}},
        "steps": 100,
        "seeds": [0],
        "shift": {},
        "filter": {"type": "ema", "alpha": 0.5},
    })
    (r,) = run_experiment(cfg)
    assert r.shift is not None and r.filtered is not None
    assert r.shift.sm != r.eval.sm
    assert r.f_s == 1000.0


def _result(label, seed, reward, sm, mae=None):
    return RunResult(label, seed, False, None, 1.0, EvalNumbers(reward, 0.0, sm, 0.0, mae))


def test_report_aggregates_and_deltas_by_hand():
    groups = {
        "vanilla": [_result("vanilla", 0, -10.0, 0.004), _result("vanilla", 1, -12.0, 0.006)],
        "caps": [_result("caps", 0, -11.0, 0.002), _result("caps", 1, -13.0, 0.002)],
    }
    report = build_report(groups)
    assert report.row("vanilla").reward.mean == -11.0
    assert report.row("vanilla").sm.std == pytest.approx(0.001)
    assert report.deltas["caps"]["sm_pct"] == pytest.approx(-60.0)
    assert report.deltas["caps"]["reward_pct"] == pytest.approx(-100 / 11)
    table = report_render(report)
    assert "5.00 ± 1.00" in table  # Sm shown x1e3
    assert "-60.0%" in table


def test_single_config_report_has_one_row():
    report = build_report({"only": [_result("only", 0, -1.0, 0.01)]})
    lines = report_render(report).splitlines()
    assert len([ln for ln in lines if ln.startswith("only")]) == 1
    assert report.baseline is None and report.deltas == {}


def test_report_json_round_trip():
    report = build_report({
        "vanilla": [_result("vanilla", 0, -1.0, 0.01, 0.5)],
        "caps": [_result("caps", 0, -2.0, 0.005, 0.25), RunResult("caps", 1, True, "boom", None, None)],
    })
    again = ComparisonReport.from_json(report.to_json())
    assert again == report
    assert again.to_json() == report.to_json()


def test_persisted_results_reproduce_report(tmp_path):
    groups = ablation_sweep(tiny(seeds=[1, 0]), ["vanilla", "caps"], tmp_path)
    report = build_report(groups)
    write_report(report, tmp_path)
    again = build_report(collect_results(tmp_path))
    assert again.to_json() == (tmp_path / "report.json").read_text()


def test_same_config_gives_identical_report_bytes(tmp_path):
    texts = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        groups = ablation_sweep(tiny(), ["vanilla", "caps"], d)
        write_report(build_report(groups), d)
        texts.append((d / "report.json").read_bytes())
    assert texts[0] == texts[1]


def test_collect_results_needs_results(tmp_path):
    with pytest.raises(ParseError):
        collect_results(tmp_path)


def _tone_log(path, freq_bin, n=256, f_s=100.0):
    t = np.arange(n)
    traj = Trajectory()
    for k in t:
        a = np.array([np.sin(2 * np.pi * freq_bin * k / n), 0.5])
        traj.append(Transition(np.zeros(1), a, 0.0, np.zeros(1), False))
    path.write_text(traj.to_csv())


def test_spectrum_export_finds_tone(tmp_path):
    log = tmp_path / "actions.csv"
    _tone_log(log, 12)
    report = spectrum_export(log, 100.0, tmp_path / "spec")
    rows = (tmp_path / "spec" / "spectrum.csv").read_text().splitlines()
    assert rows[0] == "freq,action_0,action_1"
    peak = int(np.argmax(report.amplitudes[:, 0]))
    assert report.frequencies[peak] == pytest.approx(12 * 100.0 / 256)
    summary = json.loads((tmp_path / "spec" / "sm.json").read_text())
    assert summary["channels"]["action_1"] == 0.0
    assert summary["mean_sm"] == pytest.approx(report.sm)


def test_spectrum_export_rejects_malformed_log(tmp_path):
    log = tmp_path / "bad.csv"
    log.write_text("step,action_0\n0,1.0\n1,nan\n")
    with pytest.raises(ParseError) as info:
        spectrum_export(log, 10.0)
    assert info.value.line == 3
