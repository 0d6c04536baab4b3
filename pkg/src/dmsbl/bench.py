"""Monte-Carlo benchmark harness: NMSE sweeps over SNR/SIR grids.

Every method sees the same scenario draws: the per-trial seed is a
counter-based split of the master seed over (cell, trial), so adding or
removing methods never changes the data they estimate from.  Reports
are a per-trial CSV, a summary CSV, per-SIR plot data, and rendered
NMSE-versus-SNR figures alongside.
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import baselines, sampler
from .config import float_list
from .errors import ConfigError
from .sampler import SamplerConfig, nmse_db
from .scores import GaussianInterferencePrior, load_interference_provider
from .signal_model import (ChannelSpec, InterferenceSpec, MeasurementModel,
                           PilotMatrix, generate_channel, generate_interference,
                           generate_pilot, scale_and_mix,
                           squared_exp_covariance)

KNOWN_METHODS = ("dmsbl-dmps", "dmsbl-pgdm", "mmse", "omp", "sbl")

RESULT_COLUMNS = ("snr_db", "sir_db", "trial", "method", "nmse_db", "seconds")


@dataclass
class Scenario:
    model: MeasurementModel
    h_true: np.ndarray
    interference_scale2: float


def trial_seed(master, cell, trial):
    """Counter-based split: independent stream per (cell, trial)."""
    return np.random.SeedSequence([int(master), int(cell), int(trial)])


def channel_spec_from(cfg):
    return ChannelSpec(
        length=cfg["scenario.l"],
        n_paths=cfg["scenario.n_paths"],
        symbol_rate_hz=cfg["scenario.symbol_rate_hz"],
        inter_arrival_ms=cfg["scenario.inter_arrival_ms"],
        decay_db=cfg["scenario.decay_db"],
        decay_span_ms=cfg["scenario.decay_span_ms"],
    )


def interference_spec_from(cfg):
    kind = cfg["scenario.interference"]
    m = cfg["scenario.m"]
    if kind == "lfm":
        return InterferenceSpec(
            kind="lfm", length=m,
            symbol_rate_hz=cfg["scenario.symbol_rate_hz"],
            lfm_bandwidth_hz=cfg["scenario.lfm_bandwidth_hz"],
            lfm_duration_s=cfg["scenario.lfm_duration_s"],
        )
    if kind == "gaussian_process":
        cov = squared_exp_covariance(m, cfg["scenario.gp_corr_len"])
        return InterferenceSpec(kind="gaussian_process", length=m,
                                covariance=cov)
    raise ConfigError(f"unknown scenario.interference {kind!r}")


def make_scenario(cfg, snr_db, sir_db, seed_seq, int_spec=None):
    """Draw one shared scenario for all methods of a trial."""
    rng = np.random.default_rng(seed_seq)
    m, length = cfg["scenario.m"], cfg["scenario.l"]
    pilot = generate_pilot(m + length - 1, rng)
    A = PilotMatrix(pilot, length)
    h = generate_channel(channel_spec_from(cfg), rng)
    if int_spec is None:
        int_spec = interference_spec_from(cfg)
    n = generate_interference(int_spec, rng)
    clean = A.apply(h)
    y, sigma_y2, n_scaled = scale_and_mix(clean, n, snr_db, sir_db, rng)
    p_n = float(np.vdot(n, n).real)
    scale2 = float(np.vdot(n_scaled, n_scaled).real) / p_n
    return Scenario(model=MeasurementModel(A, y, sigma_y2), h_true=h,
                    interference_scale2=scale2)


def _sampler_config(cfg, method, seed):
    return SamplerConfig(
        steps=cfg["sampler.steps"],
        n_samples=cfg["sampler.n_samples"],
        nu=cfg["sampler.nu"],
        rho=cfg["sampler.rho"],
        mu=cfg["sampler.mu"],
        kappa=cfg["sampler.kappa"],
        method=method.split("-", 1)[1],
        em_enabled=cfg["sampler.em"],
        em_start=cfg["sampler.em_start"],
        corrector_sweeps=cfg["sampler.corrector_sweeps"],
        seed=seed,
    )


def make_provider(cfg, scenario=None, base_gaussian=None):
    """Interference score provider for the configured scenario kind."""
    if cfg["scenario.interference"] == "gaussian_process":
        if base_gaussian is None:
            cov = squared_exp_covariance(cfg["scenario.m"],
                                         cfg["scenario.gp_corr_len"])
            base_gaussian = GaussianInterferencePrior(cov)
        if scenario is None:
            return base_gaussian
        return base_gaussian.scaled(scenario.interference_scale2)
    return load_interference_provider(cfg["scores.weights"],
                                      vjp_mode=cfg["scores.vjp"],
                                      vjp_gate=cfg["scores.vjp_gate"])


def run_method(cfg, method, scenario, sampler_seed=0, provider=None):
    """One estimate on an already-drawn scenario; returns (h_hat, seconds)."""
    if method not in KNOWN_METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from "
                          f"{', '.join(KNOWN_METHODS)}")
    model = scenario.model
    start = time.perf_counter()
    if method == "mmse":
        prior_var = cfg["bench.mmse_prior_var"] or 1.0 / model.A.L
        h_hat = baselines.mmse_estimate(model, prior_var,
                                        _total_disturbance_var(cfg, scenario))
    elif method == "omp":
        h_hat = baselines.omp_estimate(model, cfg["scenario.n_paths"]).h_hat
    elif method == "sbl":
        h_hat = baselines.sbl_estimate(
            model, max_iters=cfg["bench.sbl_max_iters"]).h_hat
    else:
        if provider is None:
            provider = make_provider(cfg, scenario)
        scfg = _sampler_config(cfg, method, sampler_seed)
        h_hat = sampler.run(model, scfg, provider).h_hat
    return h_hat, time.perf_counter() - start


def _total_disturbance_var(cfg, scenario):
    """Per-sample interference-plus-noise power, the white-noise level a
    structure-blind baseline would (at best) be calibrated with."""
    clean = scenario.model.A.apply(scenario.h_true)
    p_clean = float(np.vdot(clean, clean).real)
    m = scenario.model.A.M
    sir_lin = 10.0 ** (cfg["scenario.sir_db"] / 10.0)
    return p_clean / (m * sir_lin) + scenario.model.sigma_y2


def run_trial(cfg, snr_db, sir_db, cell, trial, methods, base_gaussian=None,
              int_spec=None):
    master = cfg["bench.seed"]
    local = dict(cfg, **{"scenario.snr_db": snr_db, "scenario.sir_db": sir_db})
    scenario = make_scenario(local, snr_db, sir_db,
                             trial_seed(master, cell, trial), int_spec=int_spec)
    rows = []
    for j, method in enumerate(methods):
        provider = None
        if method.startswith("dmsbl"):
            provider = make_provider(local, scenario, base_gaussian)
        seed = int(np.random.SeedSequence(
            [master, cell, trial, j]).generate_state(1)[0])
        h_hat, seconds = run_method(local, method, scenario,
                                    sampler_seed=seed, provider=provider)
        rows.append({
            "snr_db": snr_db, "sir_db": sir_db, "trial": trial,
            "method": method, "nmse_db": nmse_db(h_hat, scenario.h_true),
            "seconds": seconds,
        })
    return rows


def run_experiment(cfg, progress=None):
    """Full sweep; returns per-trial rows sorted for reproducible output."""
    methods = [m.strip() for m in str(cfg["bench.methods"]).split(",")
               if m.strip()]
    for m in methods:
        if m not in KNOWN_METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from "
                              f"{', '.join(KNOWN_METHODS)}")
    if not methods:
        raise ConfigError("bench.methods names no methods")
    snrs = float_list(cfg, "bench.snr_db")
    sirs = float_list(cfg, "bench.sir_db")
    trials = cfg["bench.trials"]
    if trials < 1:
        raise ConfigError(f"bench.trials must be >= 1, got {trials}")

    base_gaussian = None
    int_spec = interference_spec_from(cfg)
    if cfg["scenario.interference"] == "gaussian_process":
        base_gaussian = GaussianInterferencePrior(int_spec.covariance)

    cells = [(ci, snr, sir) for ci, (snr, sir) in enumerate(
        (s, r) for s in snrs for r in sirs)]
    jobs = [(cell, snr, sir, trial) for cell, snr, sir in cells
            for trial in range(trials)]

    rows = []
    workers = cfg["bench.workers"]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_trial, cfg, snr, sir, cell, trial,
                                   methods, None, int_spec)
                       for cell, snr, sir, trial in jobs]
            for done, fut in enumerate(futures):
                rows.extend(fut.result())
                if progress:
                    progress(done + 1, len(jobs))
    else:
        for done, (cell, snr, sir, trial) in enumerate(jobs):
            rows.extend(run_trial(cfg, snr, sir, cell, trial, methods,
                                  base_gaussian, int_spec))
            if progress:
                progress(done + 1, len(jobs))
    rows.sort(key=lambda r: (r["snr_db"], r["sir_db"], r["trial"],
                             r["method"]))
    return rows


def summarize(rows):
    """Per (snr, sir, method) mean/median/std of NMSE."""
    groups = {}
    for row in rows:
        groups.setdefault((row["snr_db"], row["sir_db"], row["method"]),
                          []).append(row["nmse_db"])
    out = []
    for (snr, sir, method), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        out.append({
            "snr_db": snr, "sir_db": sir, "method": method,
            "trials": arr.size,
            "nmse_mean_db": float(arr.mean()),
            "nmse_median_db": float(np.median(arr)),
            "nmse_std_db": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        })
    return out


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})


def emit_reports(rows, out_dir, render_figures=True):
    """results.csv, summary.csv, plotdata/*.csv and figures/*.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    summary = summarize(rows)
    _write_csv(out / "summary.csv",
               ("snr_db", "sir_db", "method", "trials", "nmse_mean_db",
                "nmse_median_db", "nmse_std_db"), summary)

    plotdir = out / "plotdata"
    plotdir.mkdir(exist_ok=True)
    figdir = out / "figures"
    if render_figures:
        figdir.mkdir(exist_ok=True)
    sirs = sorted({row["sir_db"] for row in summary})
    methods = sorted({row["method"] for row in summary})
    for sir in sirs:
        snrs = sorted({row["snr_db"] for row in summary
                       if row["sir_db"] == sir})
        table = {
            (row["snr_db"], row["method"]): row["nmse_mean_db"]
            for row in summary if row["sir_db"] == sir}
        data_rows = []
        for snr in snrs:
            entry = {"snr_db": snr}
            for method in methods:
                entry[method] = table.get((snr, method), float("nan"))
            data_rows.append(entry)
        name = f"sir_{_fmt_value(sir)}"
        _write_csv(plotdir / f"{name}.csv", ["snr_db"] + methods, data_rows)
        if render_figures:
            _render_figure(figdir / f"nmse_vs_snr_{name}.png", snrs, methods,
                           table, sir)
    return summary


def _fmt_value(v):
    return (f"{v:g}").replace("-", "m").replace(".", "p")


def _render_figure(path, snrs, methods, table, sir):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in methods:
        vals = [table.get((snr, method), float("nan")) for snr in snrs]
        ax.plot(snrs, vals, marker="o", label=method)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("NMSE [dB]")
    ax.set_title(f"Channel NMSE vs SNR (SIR = {sir:g} dB)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
