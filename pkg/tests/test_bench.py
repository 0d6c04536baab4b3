"""Benchmark harness: seed splitting, scenario sharing across methods,
sweep bookkeeping, summaries, and report emission."""

import csv
import math
from pathlib import Path

import numpy as np
import pytest

from dmsbl import bench, config
from dmsbl.errors import ConfigError


def tiny_cfg(**overrides):
    pairs = {
        "scenario.m": "24",
        "scenario.l": "8",
        "scenario.n_paths": "3",
        "scenario.inter_arrival_ms": "0.5",
        "scenario.interference": "gaussian_process",
        "scenario.gp_corr_len": "4.0",
        "sampler.steps": "10",
        "sampler.n_samples": "8",
        "bench.snr_db": "20",
        "bench.sir_db": "10",
        "bench.trials": "2",
        "bench.methods": "dmsbl-dmps,mmse,omp,sbl",
        "bench.seed": "77",
    }
    pairs.update({k: str(v) for k, v in overrides.items()})
    return config.build(overrides=[f"{k}={v}" for k, v in pairs.items()])


class TestTrialSeed:
    def test_deterministic_and_distinct(self):
        a = bench.trial_seed(7, 1, 2).generate_state(4)
        b = bench.trial_seed(7, 1, 2).generate_state(4)
        np.testing.assert_array_equal(a, b)
        c = bench.trial_seed(7, 1, 3).generate_state(4)
        d = bench.trial_seed(7, 2, 2).generate_state(4)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)


class TestScenario:
    def test_same_seed_same_draw(self):
        cfg = tiny_cfg()
        s1 = bench.make_scenario(cfg, 20.0, 10.0, bench.trial_seed(77, 0, 0))
        s2 = bench.make_scenario(cfg, 20.0, 10.0, bench.trial_seed(77, 0, 0))
        np.testing.assert_array_equal(s1.model.y, s2.model.y)
        np.testing.assert_array_equal(s1.h_true, s2.h_true)
        assert s1.interference_scale2 == s2.interference_scale2

    def test_shapes_and_noise_level(self):
        cfg = tiny_cfg()
        s = bench.make_scenario(cfg, 20.0, 10.0, bench.trial_seed(77, 0, 1))
        assert s.model.y.shape == (24,)
        assert s.h_true.shape == (8,)
        assert s.interference_scale2 > 0.0
        clean = s.model.A.apply(s.h_true)
        p_clean = float(np.vdot(clean, clean).real)
        # snr definition fixes sigma_y2 exactly
        assert s.model.sigma_y2 == pytest.approx(p_clean / (24 * 100.0))


class TestRunTrial:
    def test_rows_and_determinism(self):
        cfg = tiny_cfg()
        methods = ["dmsbl-dmps", "mmse", "omp", "sbl"]
        rows1 = bench.run_trial(cfg, 20.0, 10.0, 0, 0, methods)
        rows2 = bench.run_trial(cfg, 20.0, 10.0, 0, 0, methods)
        assert [r["method"] for r in rows1] == methods
        for r1, r2 in zip(rows1, rows2):
            assert r1["nmse_db"] == r2["nmse_db"]
            assert set(r1) == set(bench.RESULT_COLUMNS)
            assert math.isfinite(r1["nmse_db"])

    def test_methods_share_the_scenario(self):
        # deterministic estimators must not care what ran before them
        cfg = tiny_cfg()
        alone = bench.run_trial(cfg, 20.0, 10.0, 0, 1, ["omp"])
        paired = bench.run_trial(cfg, 20.0, 10.0, 0, 1, ["mmse", "omp"])
        assert alone[0]["nmse_db"] == paired[1]["nmse_db"]

    def test_unknown_method_rejected(self):
        cfg = tiny_cfg()
        scenario = bench.make_scenario(cfg, 20.0, 10.0,
                                       bench.trial_seed(77, 0, 0))
        with pytest.raises(ConfigError, match="unknown method"):
            bench.run_method(cfg, "lasso", scenario)


class TestRunExperiment:
    def test_grid_shape_and_order(self):
        cfg = tiny_cfg(**{"bench.snr_db": "10,20", "bench.trials": "2",
                          "bench.methods": "mmse,omp"})
        rows = bench.run_experiment(cfg)
        assert len(rows) == 2 * 2 * 2  # snr x trial x method
        keys = [(r["snr_db"], r["sir_db"], r["trial"], r["method"])
                for r in rows]
        assert keys == sorted(keys)

    def test_progress_callback(self):
        cfg = tiny_cfg(**{"bench.methods": "mmse", "bench.trials": "3"})
        seen = []
        bench.run_experiment(cfg, progress=lambda d, n: seen.append((d, n)))
        assert seen == [(1, 3), (2, 3), (3, 3)]

    def test_validation(self):
        with pytest.raises(ConfigError, match="unknown method"):
            bench.run_experiment(tiny_cfg(**{"bench.methods": "mmse,nope"}))
        with pytest.raises(ConfigError, match="at least one"):
            bench.run_experiment(tiny_cfg(**{"bench.snr_db": ""}))
        with pytest.raises(ConfigError, match="trials"):
            bench.run_experiment(tiny_cfg(**{"bench.trials": "0"}))

    def test_worker_pool_matches_serial(self):
        cfg_s = tiny_cfg(**{"bench.methods": "mmse,omp"})
        cfg_p = tiny_cfg(**{"bench.methods": "mmse,omp",
                            "bench.workers": "2"})
        serial = bench.run_experiment(cfg_s)
        pooled = bench.run_experiment(cfg_p)
        strip = lambda rows: [(r["snr_db"], r["sir_db"], r["trial"],
                               r["method"], r["nmse_db"]) for r in rows]
        assert strip(serial) == strip(pooled)


class TestSummarize:
    def test_group_stats(self):
        rows = [
            {"snr_db": 10.0, "sir_db": 5.0, "trial": 0, "method": "omp",
             "nmse_db": -10.0, "seconds": 0.0},
            {"snr_db": 10.0, "sir_db": 5.0, "trial": 1, "method": "omp",
             "nmse_db": -14.0, "seconds": 0.0},
            {"snr_db": 10.0, "sir_db": 5.0, "trial": 0, "method": "mmse",
             "nmse_db": -3.0, "seconds": 0.0},
        ]
        out = bench.summarize(rows)
        assert [(r["method"], r["trials"]) for r in out] == [
            ("mmse", 1), ("omp", 2)]
        omp = out[1]
        assert omp["nmse_mean_db"] == -12.0
        assert omp["nmse_median_db"] == -12.0
        assert omp["nmse_std_db"] == pytest.approx(np.std([-10, -14], ddof=1))
        assert out[0]["nmse_std_db"] == 0.0


class TestEmitReports:
    def _rows(self):
        rows = []
        for snr in (10.0, 20.0):
            for sir in (0.0, 5.0):
                for trial in range(2):
                    for method, base in (("omp", -10.0), ("mmse", -4.0)):
                        rows.append({
                            "snr_db": snr, "sir_db": sir, "trial": trial,
                            "method": method,
                            "nmse_db": base - 0.1 * snr - trial,
                            "seconds": 0.01})
        return rows

    def test_files_and_round_trip(self, tmp_path):
        summary = bench.emit_reports(self._rows(), tmp_path)
        assert (tmp_path / "results.csv").is_file()
        assert (tmp_path / "summary.csv").is_file()
        for sir_tag in ("sir_0", "sir_5"):
            assert (tmp_path / "plotdata" / f"{sir_tag}.csv").is_file()
            fig = tmp_path / "figures" / f"nmse_vs_snr_{sir_tag}.png"
            assert fig.is_file() and fig.stat().st_size > 0

        with open(tmp_path / "results.csv", newline="") as f:
            back = list(csv.DictReader(f))
        assert len(back) == len(self._rows())
        # floats are written as repr, so they must round-trip exactly
        assert float(back[0]["nmse_db"]) == self._rows()[0]["nmse_db"]

        with open(tmp_path / "plotdata" / "sir_0.csv", newline="") as f:
            plot = list(csv.DictReader(f))
        assert [row["snr_db"] for row in plot] == ["10.0", "20.0"]
        mean_10_omp = np.mean([r["nmse_db"] for r in self._rows()
                               if r["snr_db"] == 10.0 and r["sir_db"] == 0.0
                               and r["method"] == "omp"])
        assert float(plot[0]["omp"]) == pytest.approx(mean_10_omp)
        assert summary == bench.summarize(self._rows())

    def test_figures_can_be_disabled(self, tmp_path):
        bench.emit_reports(self._rows(), tmp_path, render_figures=False)
        assert not (tmp_path / "figures").exists()
        assert (tmp_path / "plotdata" / "sir_0.csv").is_file()

    def test_negative_sir_filename_tag(self, tmp_path):
        rows = [{"snr_db": 10.0, "sir_db": -2.5, "trial": 0, "method": "omp",
                 "nmse_db": -8.0, "seconds": 0.0}]
        bench.emit_reports(rows, tmp_path, render_figures=False)
        assert (tmp_path / "plotdata" / "sir_m2p5.csv").is_file()
