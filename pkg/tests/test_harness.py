import csv
import io
from dataclasses import replace

import numpy as np
import pytest

from emphatic_rl.harness.experiments import (
    ConfigError,
    ExperimentConfig,
    run_control_experiment,
    run_emphasis_experiment,
    run_generators,
    run_policy_eval_experiment,
    run_tracking,
    variance_profile,
)
from emphatic_rl.harness.records import (
    CSV_HEADER,
    Curve,
    format_value,
    log_steps,
    records_to_csv_text,
    summarize_run,
    trailing_mean,
)
from emphatic_rl.harness.verify import Check, run_oracle_verify, verify_oracle
from emphatic_rl.mdp import FeatureMap

from .conftest import random_setup


def small(experiment, **kw):
    base = dict(steps=300, runs=3, master_seed=5)
    base.update(kw)
    return ExperimentConfig(experiment, **base)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestRecords:
    def test_format(self):
        assert format_value(0.1) == "0.1"
        assert format_value(np.float64(1 / 3)) == repr(1 / 3)
        assert format_value(None) == "" and format_value(4) == "4"
        assert float(format_value(np.float64(2.0) / 7)) == 2.0 / 7

    def test_trailing_mean(self):
        v = np.arange(6.0)
        assert np.allclose(trailing_mean(v, 3), [0, 0.5, 1, 2, 3, 4])

    def test_log_steps(self):
        assert np.array_equal(log_steps(10, 4), [0, 4, 8, 9])
        assert log_steps(5, None).size == 5

    def test_summarize_divergence(self):
        run = summarize_run(0, {"error": np.ones(5)}, "error", np.arange(10), 10, 4)
        assert run.raw_sum == np.inf and run.metrics["error"].size == 5
        assert run.final["final_trailing"] == 1.0

    def test_curve_excludes_diverged(self):
        good = summarize_run(0, {"e": np.array([1.0, 3.0])}, "e", np.arange(2), 2, None)
        other = summarize_run(1, {"e": np.array([3.0, 5.0])}, "e", np.arange(2), 2, None)
        bad = summarize_run(2, {"e": np.array([1e13])}, "e", np.arange(2), 2, 0)
        curve = Curve("GEM", 0.1, None, [good, other, bad])
        assert curve.n_diverged == 1
        assert curve.auc == 6.0
        steps, mean, std = curve.aggregate("e")
        assert np.array_equal(mean, [2.0, 4.0]) and np.array_equal(std, [1.0, 1.0])
        recs = list(curve.records("emphasis", "onehot"))
        assert any(r.metric == "diverged" and r.run == 2 for r in recs)
        assert not any(r.run == "mean" and r.metric == "e" and r.value > 10 for r in recs)

    def test_header(self):
        text = records_to_csv_text([])
        assert text == ",".join(CSV_HEADER) + "\n"


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig("policy-eval").resolved()
        assert cfg.pi_solid == 0.05 and cfg.alpha == 0.025

    @pytest.mark.parametrize("kw", [
        dict(experiment="nope"), dict(experiment="emphasis", runs=0),
        dict(experiment="emphasis", features="tiles"), dict(experiment="emphasis", eta=-1.0),
        dict(experiment="emphasis", pi_solid=1.5),
        dict(experiment="emphasis", gamma=1.0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw).resolved()

    def test_generators_distinct(self):
        a, b = run_generators(0, 0)
        c, _ = run_generators(0, 1)
        draws = [g.random() for g in (a, b, c)]
        assert len(set(draws)) == 3
        assert run_generators(0, 0)[0].random() == draws[0]


class TestExperiments:
    def test_emphasis_deterministic(self):
        cfg = small("emphasis", sweep=(0.1, 0.05))
        a = records_to_csv_text(run_emphasis_experiment(cfg).records())
        b = records_to_csv_text(run_emphasis_experiment(cfg).records())
        assert a == b
        assert a.splitlines()[0] == ",".join(CSV_HEADER)

    def test_parallel_matches_serial(self):
        cfg = small("emphasis", sweep=(0.1,))
        serial = records_to_csv_text(run_emphasis_experiment(cfg).records())
        parallel = records_to_csv_text(run_emphasis_experiment(replace(cfg, n_jobs=2)).records())
        assert serial == parallel

    def test_mean_rows_consistent(self):
        result = run_emphasis_experiment(small("emphasis", sweep=(0.05,)))
        data = rows(records_to_csv_text(result.records()))
        for alg in ("followon", "GEM"):
            per_run = {}
            means = {}
            stds = {}
            for r in data:
                if r["algorithm"] != alg or r["metric"] != "error":
                    continue
                if r["run"] == "mean":
                    means[int(r["step"])] = float(r["value"])
                elif r["run"] == "std":
                    stds[int(r["step"])] = float(r["value"])
                else:
                    per_run.setdefault(int(r["step"]), []).append(float(r["value"]))
            for step, vals in per_run.items():
                assert abs(np.mean(vals) - means[step]) <= 1e-12 * max(1, abs(means[step]))
                assert abs(np.std(vals) - stds[step]) <= 1e-12 * max(1, abs(stds[step]))

    def test_shared_initial_weights(self):
        result = run_emphasis_experiment(small("emphasis", sweep=(0.1, 0.05), runs=1))
        firsts = [c.runs[0].metrics["error"][0] for c in result.curves_for("GEM")]
        assert firsts[0] == firsts[1]

    def test_policy_eval(self):
        result = run_policy_eval_experiment(small("policy-eval", sweep=(0.01,), runs=2))
        algs = {c.algorithm for c in result.curves}
        assert algs == {"ETD(0)", "GEM-ETD(0)"}
        etd = result.curves_for("ETD(0)")[0]
        assert etd.runs[0].metrics["rmsve"][0] == pytest.approx(95.0, abs=1e-9)

    def test_policy_eval_single_rate(self):
        result = run_policy_eval_experiment(small("policy-eval", sweep=(0.01, 0.005), alpha2=0.002,
                                                  runs=1))
        assert [c.lr2 for c in result.curves_for("GEM-ETD(0)")] == [0.002]
        assert len(result.curves_for("ETD(0)")) == 2

    def test_divergence_excluded(self):
        result = run_policy_eval_experiment(small("policy-eval", sweep=(50.0,), runs=2,
                                                  steps=3000))
        etd = result.curves_for("ETD(0)")[0]
        assert etd.n_diverged == 2 and etd.auc == np.inf
        assert result.summary["ETD(0)"]["diverged"] == 2

    def test_control(self):
        result = run_control_experiment(small("control", steps=400, runs=2, snapshot_every=100))
        cof = result.curves_for("COF-PAC")[0]
        final = cof.runs[0].final
        assert {"J0", "J_final", "gap_min", "grad_norm0", "update_norm_var"} <= set(final)
        assert final["J0"] == pytest.approx(cof.runs[1].final["J0"], rel=1e-12)
        assert cof.runs[0].steps[-1] == 400
        assert {c.algorithm for c in result.curves} == {"COF-PAC", "ACE", "Off-PAC"}

    def test_followon_actor_noisier(self):
        result = run_control_experiment(small("control", steps=10_000, runs=30),
                                        algorithms=("COF-PAC", "ACE"))
        var = {c.algorithm: np.array([r.final["update_norm_var"] for r in c.runs])
               for c in result.curves}
        assert np.median(var["ACE"]) > np.median(var["COF-PAC"])
        assert np.mean(var["ACE"] > var["COF-PAC"]) >= 0.8


class TestHelpers:
    def test_tracking_shapes(self):
        res = run_tracking(small("emphasis", eta=1e-3, runs=2, steps=500), 0.05)
        assert res.gem.shape == res.gq2.shape == (2,)
        assert np.all(res.gem > 0) and res.u_star.size == 14

    def test_tracking_reports_divergence(self):
        res = run_tracking(small("emphasis", eta=1e-3, runs=1, steps=5000), 5.0)
        assert np.isnan(res.gem[0])

    def test_variance_profile(self):
        cfg = small("emphasis", pi_solid=1.0, steps=101, runs=4)
        trace_var, gem_var = variance_profile(cfg, 0.01, [0, 100])
        assert trace_var[0] == 0.0 and gem_var.shape == (2,)
        with pytest.raises(ConfigError):
            variance_profile(cfg, 0.01, [101])

    def test_best_final(self):
        result = run_emphasis_experiment(small("emphasis", sweep=(0.1, 0.001)))
        best = result.best_final("GEM")
        assert best.final_stats("final_trailing")[0] == min(
            c.final_stats("final_trailing")[0] for c in result.curves_for("GEM"))


class TestVerify:
    def test_random_mdps_pass(self):
        for seed in range(3):
            mdp, mu, pi = random_setup(seed)
            X = np.random.default_rng(seed).standard_normal((5, 3))
            fm = FeatureMap(X, np.kron(np.eye(2), X))
            checks = verify_oracle(mdp, mu, pi, fm, np.random.default_rng(seed), n_theta=3)
            assert not [c for c in checks if c.failed], [c.line() for c in checks if c.failed]

    def test_baird_report(self):
        result = run_oracle_verify(ExperimentConfig("oracle-verify", eta=0.01))
        assert result.passed
        keys = dict(result.report)
        assert keys["config.eta"] == 0.01

    def test_singular_system_fails(self):
        result = run_oracle_verify(ExperimentConfig("oracle-verify", features="original", eta=0.0))
        assert not result.passed
        assert any(c.name.startswith("system_solvable") and c.failed for c in result.checks)

    def test_check_line(self):
        line = Check("x", "pass", 1e-12, 1e-9).line()
        assert line.startswith("PASS") and "x" in line
