"""Acceptance gate: one check per shipped guarantee, one result line each
(run with `-s -v`; the end-to-end benchmark is marked e2e and takes about
an hour: `pytest -m e2e -s`).
"""

import csv
from pathlib import Path

import numpy as np
import pytest

from score_trainer import (TrainingConfig, kernel_moments, load_segments,
                           model_from_layers, read_cbin, read_dmsc, train,
                           write_cbin)

WEIGHTS = Path(__file__).parents[1] / "weights" / "lfm_interference.dmsc"


def _report(line):
    print(f"\n{line}")


@pytest.fixture(scope="module")
def trained_gp(dmsbl_cli, tmp_path_factory):
    """Net fitted to CN(0, Sigma) draws from the estimator's exporter,
    plus everything needed to evaluate the analytic oracle."""
    root = tmp_path_factory.mktemp("gp")
    corr_len, m = 6.0, 64
    res = dmsbl_cli(["export-interference-dataset", "--out", str(root / "ds"),
                     "--count", "2048", "--scale", "1.0",
                     "--set", "scenario.interference=gaussian_process",
                     "--set", f"scenario.m={m}",
                     "--set", f"scenario.gp_corr_len={corr_len}"])
    assert res.returncode == 0, res.stderr
    data = load_segments(root / "ds")
    cfg = TrainingConfig(dataset="", out=str(root / "gp.dmsc"),
                         iterations=5000, batch_size=64, lr=2e-3,
                         width=24, blocks=5, emb_dim=16, seed=4, quiet=True)
    model, _ = train(cfg, data=data[:-64])
    idx = np.arange(m)
    cov = np.exp(-0.5 * ((idx[:, None] - idx[None, :]) / corr_len) ** 2)
    return model.double(), data[-64:], cov, cfg


def test_trained_score_fidelity(trained_gp):
    """Criterion: net trained on CN(0, Sigma) draws matches the analytic
    perturbed score, median relative error <= 0.2 at t in {0.1, 0.5, 0.9}."""
    model, held, cov, cfg = trained_gp
    rng = np.random.default_rng(3)
    eye = np.eye(cov.shape[0])
    medians = {}
    for t in (0.1, 0.5, 0.9):
        a, v = kernel_moments(t, cfg.beta_min, cfg.beta_max)
        x_t = a * held + np.sqrt(v / 2) * (
            rng.standard_normal(held.shape) + 1j * rng.standard_normal(held.shape))
        s_true = -np.linalg.solve(a * a * cov + v * eye, x_t.T).T
        rel = np.abs(model.score(x_t, t) - s_true) / np.abs(s_true)
        medians[t] = float(np.median(rel))
    worst = max(medians.values())
    ok = worst <= 0.2
    detail = ", ".join(f"t={t}: {medians[t]:.3f}" for t in sorted(medians))
    _report(f"[1/3] trained-score fidelity: {'PASS' if ok else 'FAIL'} "
            f"({detail}; bar 0.2)")
    assert ok, detail


def test_cross_component_parity(dmsbl_cli, tmp_path):
    """Criterion: exported .dmsc evaluated by the estimator matches the
    trainer-side network to 1e-5 relative on 100 random inputs."""
    assert WEIGHTS.exists(), f"shipped weights missing at {WEIGHTS}"
    model = model_from_layers(read_dmsc(WEIGHTS)).double()
    rng = np.random.default_rng(123)
    worst = 0.0
    for i in range(100):
        length = 200
        amp = rng.uniform(0.2, 2.0)
        x = amp * (rng.standard_normal(length) + 1j * rng.standard_normal(length))
        t = rng.uniform(0.01, 1.0)
        write_cbin(tmp_path / "x.cbin", x)
        res = dmsbl_cli(["score-eval", "--weights", str(WEIGHTS),
                         "--input", str(tmp_path / "x.cbin"),
                         "--t", repr(float(t)),
                         "--out", str(tmp_path / "s.cbin")])
        assert res.returncode == 0, res.stderr
        theirs = read_cbin(tmp_path / "s.cbin")
        ours = model.score(x, t)
        worst = max(worst, float(np.linalg.norm(ours - theirs)
                                 / np.linalg.norm(theirs)))
    ok = worst <= 1e-5
    _report(f"[2/3] cross-component parity: {'PASS' if ok else 'FAIL'} "
            f"(worst rel {worst:.2e} over 100 inputs; bar 1e-5)")
    assert ok


@pytest.mark.e2e
def test_end_to_end_lfm_benchmark(dmsbl_cli, tmp_path):
    """Criterion: with the shipped LFM-trained score, the diffusion
    estimator reaches mean NMSE <= -20 dB at SNR=30, SIR=5 over 10 trials."""
    assert WEIGHTS.exists(), f"shipped weights missing at {WEIGHTS}"
    res = dmsbl_cli(["bench", "--out", str(tmp_path / "rep"), "--quiet",
                     "--set", "scenario.interference=lfm",
                     "--set", f"scores.weights={WEIGHTS}",
                     "--set", "bench.methods=dmsbl-pgdm",
                     "--set", "bench.snr_db=30", "--set", "bench.sir_db=5",
                     "--set", "bench.trials=10",
                     "--set", "sampler.steps=250",
                     "--set", "sampler.n_samples=64"])
    assert res.returncode == 0, res.stderr
    with open(tmp_path / "rep" / "summary.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1 and int(rows[0]["trials"]) == 10
    mean_db = float(rows[0]["nmse_mean_db"])
    ok = mean_db <= -20.0
    _report(f"[3/3] end-to-end LFM benchmark: {'PASS' if ok else 'FAIL'} "
            f"(mean NMSE {mean_db:.2f} dB over 10 trials; bar -20 dB)")
    assert ok
