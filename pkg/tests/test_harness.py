import csv
import json
import os

import numpy as np
import pytest

from twrqcd.errors import ConfigError
from twrqcd.harness import (
    ablation_variants,
    attribute_alarms,
    config_from_dict,
    load_config,
    run_ablation,
    run_experiment,
    run_llr_trace,
    run_multi_change,
    run_sweep,
)
from twrqcd.harness.cli import main
from twrqcd.harness.svg import line_chart
from twrqcd.harness.trials import build_trial, derive_seed

IID = {"kind": "iid-gaussian-mean", "obs_dim": 1, "param_dim": 1}


def small(**kw):
    doc = {"family": IID, "trials": 3, "horizon": 60, "lambda": 30, "no_change_horizon": 60,
           "target_kl": 1.0, "thresholds": [2.0, 8.0], "master_seed": 5, "emit_plots": False,
           "detectors": [{"type": "oracle"}, {"type": "twr"}]}
    doc.update(kw)
    return config_from_dict(doc)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestConfig:
    def test_defaults_resolve(self):
        cfg = config_from_dict({})
        assert cfg.family["kind"] == "mlp-gaussian" and cfg.lam == 200
        assert config_from_dict(json.loads(cfg.to_json())) == cfg

    def test_log_spaced_grid(self):
        cfg = config_from_dict({"thresholds": {"min": 1, "max": 100, "num": 3}})
        np.testing.assert_allclose(cfg.thresholds, [1, 10, 100])

    @pytest.mark.parametrize("doc", [
        {"trials": 0}, {"horizon": 10, "lambda": 10}, {"bogus": 1}, {"thresholds": [-1]},
        {"detectors": [{"type": "cusum"}]}, {"detectors": [{"type": "twr", "stepsize": 1}]},
        {"detectors": [{"type": "twr"}, {"type": "twr"}]}, {"no_change_horizon": None},
        {"family": {"kind": "mlp-gaussian", "obs_dim": 2, "param_dim": 2, "widths": []}},
        {"detectors": [{"type": "twr", "alpha": 2.0}]}, {"sweep": {"key": "trials"}},
    ])
    def test_invalid(self, doc):
        with pytest.raises(ConfigError):
            config_from_dict(doc)

    def test_seed_override(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"master_seed": 1}))
        assert load_config(p, seed=9).master_seed == 9

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(p)


class TestTrials:
    def test_seed_derivation_is_per_trial(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3) != derive_seed(1, 3, 3)

    def test_trial_independent_of_others(self):
        a = build_trial(small(trials=3), 2)
        b = build_trial(small(trials=10), 2)
        np.testing.assert_array_equal(a.change.stream.obs, b.change.stream.obs)

    def test_random_lambda_inside_horizon(self):
        cfg = small(**{"lambda": None, "prior": {"rho": 0.05}})
        lams = [build_trial(cfg, t).lam for t in range(20)]
        assert all(0 < lam < 60 for lam in lams) and len(set(lams)) > 1


class TestRunExperiment:
    def test_single_record(self, tmp_path):
        cfg = small(trials=1, thresholds=[5.0], detectors=[{"type": "oracle"}], no_change=False)
        res = run_experiment(cfg, tmp_path / "a")
        assert len(res.records) == 1
        run_experiment(cfg, tmp_path / "b")
        for f in ("records.jsonl", "aggregate.csv", "resolved_config.json"):
            assert read(tmp_path / "a" / f) == read(tmp_path / "b" / f)

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        cfg = small(emit_traces=True)
        run_experiment(cfg, tmp_path / "w1", workers=1)
        run_experiment(cfg, tmp_path / "w2", workers=2)
        for f in ("records.jsonl", "aggregate.csv", "traces/llr_mean.csv", "traces/steps.csv"):
            assert read(tmp_path / "w1" / f) == read(tmp_path / "w2" / f)

    def test_resume_skips_finished_trials(self, tmp_path):
        cfg = small()
        full = run_experiment(cfg, tmp_path / "full")
        out = tmp_path / "part"
        run_experiment(cfg, out)
        lines = read(out / "records.jsonl").splitlines(keepends=True)
        per_trial = len(lines) // 3
        # keep one trial plus a torn line, as after a crash
        with open(out / "records.jsonl", "wb") as fh:
            fh.writelines(lines[:per_trial])
            fh.write(lines[per_trial][:10])
        res = run_experiment(cfg, out)
        assert read(out / "records.jsonl") == read(tmp_path / "full" / "records.jsonl")
        assert res.rows == full.rows or all(
            (a[k] == b[k]) or (a[k] != a[k] and b[k] != b[k]) for a, b in zip(res.rows, full.rows) for k in a)

    def test_different_config_refused(self, tmp_path):
        run_experiment(small(), tmp_path)
        with pytest.raises(ConfigError):
            run_experiment(small(master_seed=6), tmp_path)

    def test_aggregate_layout_and_plots(self, tmp_path):
        run_experiment(small(emit_plots=True), tmp_path)
        rows = list(csv.DictReader(open(tmp_path / "aggregate.csv")))
        assert len(rows) == 4 and rows[0]["detector"] == "oracle"
        oracle_regret = [float(r["regret"]) for r in rows if r["detector"] == "oracle"]
        assert all(v == 0.0 or v != v for v in oracle_regret) and 0.0 in oracle_regret
        assert os.path.exists(tmp_path / "plots" / "add.svg")


class TestDrivers:
    def test_llr_trace(self, tmp_path):
        cfg = small(trials=20, horizon=400, **{"lambda": 200}, emit_traces=True, target_kl=0.5,
                    detectors=[{"type": "twr"}, {"type": "adaptive"}])
        res = run_llr_trace(cfg, tmp_path)
        rows = list(csv.DictReader(open(tmp_path / "traces" / "llr_mean.csv")))
        assert len(rows) == 400
        oracle = res.llr_mean["oracle"][0]
        # with equal variances both KL directions equal 0.5
        assert oracle[:199].mean() == pytest.approx(-0.5, abs=0.06)
        assert oracle[200:].mean() == pytest.approx(0.5, abs=0.06)
        assert {"twr", "adaptive"} <= set(res.llr_mean)

    def test_llr_trace_needs_traces(self, tmp_path):
        with pytest.raises(ConfigError):
            run_llr_trace(small(), tmp_path)

    def test_ablation_variants(self):
        names = [v["name"] for v in ablation_variants({"type": "twr", "step_size": 0.1})]
        assert names == ["twr", "twr-no-penalty", "twr-no-anneal", "twr-no-penalty-no-anneal"]
        v = ablation_variants({"type": "twr", "penalty": 0.0})
        assert v[0]["penalty"] == v[1]["penalty"] == 0.0

    def test_ablation_table(self, tmp_path):
        _, rows = run_ablation(small(trials=2), tmp_path)
        assert len(rows) == 8
        assert os.path.exists(tmp_path / "ablation.csv")

    def test_attribute_alarms(self):
        delays, fa = attribute_alarms([5, 12, 14, 33], [10, 20, 30], 40)
        assert delays == [2, None, 3] and fa == 2

    def test_multi_change(self, tmp_path):
        cfg = small(trials=4, target_kl=4.5, multi={"n_changes": 3, "gap_factor": 10, "threshold": 10,
                                                    "pilot_trials": 10})
        res = run_multi_change(cfg, tmp_path)
        assert res.gap >= 10
        assert [len(d) for d in res.delays] == [3] * 4
        assert res.all_detected_fraction == 1.0
        rows = list(csv.DictReader(open(tmp_path / "multi.csv")))
        assert [r["change"] for r in rows[:3]] == ["1", "2", "3"]

    def test_multi_single_change_matches_experiment(self, tmp_path):
        cfg = small(trials=1, multi={"n_changes": 1, "gap": 30, "threshold": 8.0})
        res = run_multi_change(cfg, tmp_path / "m")
        # the single-change multi stream is the experiment's change stream (same seeds, lambda = gap)
        exp = run_experiment(cfg, tmp_path / "e")
        twr_rec = [r for r in exp.records if r.detector == "twr" and r.threshold == 8.0 and r.stream == "change"][0]
        expected = None if twr_rec.nu is None or twr_rec.nu < 30 else twr_rec.nu - 30
        if twr_rec.nu is None or twr_rec.nu >= 30:
            assert res.delays[0][0] == expected

    def test_sweep(self, tmp_path):
        rows = run_sweep(small(trials=1, sweep={"key": "target_kl", "values": [0.5, 2.0]}), tmp_path)
        assert [r["target_kl"] for r in rows][::4] == [0.5, 2.0]
        assert os.path.exists(tmp_path / "sweep.csv")


class TestCli:
    def test_run_and_exit_codes(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"family": IID, "trials": 1, "horizon": 40, "lambda": 20,
                                   "no_change_horizon": 40, "thresholds": [3.0], "target_kl": 1.0,
                                   "detectors": [{"type": "oracle"}]}))
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--workers", "1", "--no-plots"]) == 0
        assert os.path.exists(tmp_path / "o" / "aggregate.csv")
        assert not os.listdir(tmp_path / "o" / "plots")
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"trials": 0}))
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
        assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "x")]) == 3
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["run", "--config", str(cfg), "--out", str(blocker / "sub"), "--workers", "1"]) == 3


def test_svg_chart_is_well_formed():
    import xml.etree.ElementTree as ET

    svg = line_chart({"a": ([1, 10, 100], [1.0, float("nan"), 3.0]), "b": ([], [])}, title="t<1>", logx=True)
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
