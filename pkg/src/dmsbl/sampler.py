"""Reverse-diffusion posterior sampler for joint channel/interference
estimation with EM learning of the channel prior variances.

The sampler runs K coupled reverse trajectories from t = 1 to t = 0.
Each of the T steps applies Langevin corrector sweeps, an
Euler-Maruyama predictor, and (optionally) an EM refresh of the
per-tap prior variances gamma from the current channel ensemble.  The
final step swaps the predictor for a posterior-mean denoise of the
ensemble, and the channel estimate is the ensemble mean at t = 0.

EM refreshes only begin once t <= em_start (default 0.5).  Near t = 1
the kernel noise swamps the signal and the update can only echo the
initialization back with extra Monte-Carlo noise; holding gamma at its
starting value (rho, or gamma_init) until the kernel retains signal
costs nothing and keeps early steps deterministic in gamma.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericError
from .guidance import GuidanceConfig, LikelihoodCache, assemble_posterior_scores
from .scores import channel_tweedie_gain
from .sde import ALPHA_FLOOR, VpSchedule, tweedie_denoise

GAMMA_FLOOR = 1e-6


@dataclass
class SamplerConfig:
    steps: int = 500
    n_samples: int = 256
    nu: float = 0.16
    rho: float = 1.0
    mu: float = 1.0
    kappa: float = 1.0
    method: str = "dmps"
    em_enabled: bool = True
    em_start: float = 0.5
    corrector_sweeps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.nu <= 0:
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if self.rho <= 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if not 0.0 <= self.em_start <= 1.0:
            raise ConfigError(
                f"em_start must lie in [0, 1], got {self.em_start}")
        if self.corrector_sweeps < 0:
            raise ConfigError(
                f"corrector_sweeps must be >= 0, got {self.corrector_sweeps}")

    def guidance(self):
        return GuidanceConfig(method=self.method, mu=self.mu, kappa=self.kappa)


@dataclass
class SampleEnsemble:
    """K coupled iterates of both latent variables at a common time."""

    h: np.ndarray      # (K, L)
    n: np.ndarray      # (K, M)
    gamma: np.ndarray  # (L,)
    t: float

    @property
    def k(self):
        return self.h.shape[0]


@dataclass
class RunResult:
    h_hat: np.ndarray
    n_hat: np.ndarray
    gamma: np.ndarray
    trace: list = field(default_factory=list)
    langevin_skips: int = 0


def nmse_db(estimate, truth, floor_db=-100.0):
    """10 log10(||estimate - truth||^2 / ||truth||^2), floored at -100 dB."""
    truth = np.asarray(truth)
    err = np.asarray(estimate) - truth
    denom = float(np.vdot(truth, truth).real)
    if denom == 0.0:
        raise ConfigError("NMSE is undefined for an all-zero reference")
    ratio = float(np.vdot(err, err).real) / denom
    if ratio <= 10.0 ** (floor_db / 10.0):
        return floor_db
    return float(10.0 * np.log10(ratio))


def initialize(model, cfg, schedule, rng):
    """Ensemble at t = 1: iid CN(0, 2(1 - alpha(1)^2)) entries, gamma = rho."""
    k, length, m = cfg.n_samples, model.A.L, model.A.M
    sd = np.sqrt(1.0 - schedule.alpha(1.0) ** 2)
    draw = lambda *shape: sd * (rng.standard_normal(shape)
                                + 1j * rng.standard_normal(shape))
    return SampleEnsemble(h=draw(k, length), n=draw(k, m),
                          gamma=np.full(length, float(cfg.rho)), t=1.0)


def em_update_gamma(h_samples, t, schedule, gamma_floor=GAMMA_FLOOR):
    """Refreshed prior variances from the channel ensemble's moments.

    Inverts the perturbation kernel per tap: gamma = (spread + |mean|^2
    - 2(1-alpha^2)) / alpha^2, clamped below at gamma_floor.  A single
    sample contributes zero spread.
    """
    h_samples = np.atleast_2d(h_samples)
    a = max(schedule.alpha(t), ALPHA_FLOOR)
    h_bar = h_samples.mean(axis=0)
    spread = np.mean(np.abs(h_samples - h_bar) ** 2, axis=0)
    gamma = (spread + np.abs(h_bar) ** 2 - 2.0 * (1.0 - a * a)) / (a * a)
    return np.maximum(gamma, gamma_floor)


def em_update_gamma_denoised(h_samples, t, gamma, schedule, scores=None,
                             gamma_floor=GAMMA_FLOOR):
    """Variance refresh with the moments taken through the posterior-mean
    denoiser: gamma_j = E_k |h0_hat_k,j|^2 + gamma_j * 2(1-alpha^2) /
    (alpha^2 gamma_j + 2(1-alpha^2)).

    With `scores` (the assembled per-sample posterior scores for the
    channel block) the denoised iterates h0_hat = (h_t + 2(1-alpha^2)
    scores) / alpha carry the measurement information, and the update is
    the ensemble form of the classical M-step |mean|^2 + posterior
    variance: the first term is the sample second moment of the
    conditional means, the second restores the variance each conditional
    mean integrates out.  Without `scores` the denoiser falls back to the
    prior-only gain alpha gamma / (alpha^2 gamma + 2(1-alpha^2)).

    Same fixed points as the raw kernel inversion on faithful ensembles
    (gamma on marginal ones, the posterior second moment as t -> 0), but
    non-negative regardless of the ensemble's spread.  That matters
    because guided ensembles are under-dispersed: the pseudo-likelihood
    curvature stays comparable to the prior's at every t, which squeezes
    the spread below the kernel noise floor 2(1-alpha^2) and turns the
    raw inversion negative, collapsing the whole prior to the floor.
    """
    h_samples = np.atleast_2d(h_samples)
    a = max(schedule.alpha(t), ALPHA_FLOOR)
    v = 2.0 * (1.0 - schedule.alpha(t) ** 2)
    gamma = np.asarray(gamma, dtype=np.float64)
    if scores is None:
        gain = channel_tweedie_gain(t, gamma, schedule)
        m0 = gain * gain * np.mean(np.abs(h_samples) ** 2, axis=0)
    else:
        h0 = (h_samples + v * np.atleast_2d(scores)) / a
        m0 = np.mean(np.abs(h0) ** 2, axis=0)
    per_sample = gamma * v / (a * a * gamma + v)
    return np.maximum(m0 + per_sample, gamma_floor)


def _langevin_move(x, grads, nu, rng):
    """Per-sample Langevin step with normalized size nu/||g||^2.

    `grads` are conjugate Wirtinger scores; the walk runs on the real
    coordinates, whose gradient is twice that, so the update is
    x + xi * 2*grads + sqrt(2 xi) * (complex unit noise).  Only
    exactly-zero gradients are skipped; non-finite ones poison the
    sample so the per-step finiteness check can report them.

    A sample sitting near score balance makes nu/||g||^2 arbitrarily
    large, so xi is capped where drift or noise would exceed half the
    sample's own norm in one sweep; the cap never binds at working step
    sizes."""
    g = 2.0 * grads
    sq = np.sum(g.real**2 + g.imag**2, axis=1, keepdims=True)
    dead = sq == 0.0
    safe_sq = np.where(dead, 1.0, sq)
    scale = 0.5 * np.linalg.norm(x, axis=1, keepdims=True)
    xi = np.minimum(nu / safe_sq,
                    np.minimum(scale / np.sqrt(safe_sq),
                               scale * scale / (4.0 * x.shape[1])))
    xi = np.where(dead, 0.0, xi)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    x_new = np.where(dead, x, x + xi * g + np.sqrt(2.0 * xi) * noise)
    return x_new, int(dead.sum())


def corrector_step(ensemble, model, cfg, schedule, n_provider, rng, cache=None):
    """One Langevin sweep at fixed t: channel samples first, then
    interference with the refreshed channel ensemble."""
    gcfg = cfg.guidance()
    if cache is None:
        cache = LikelihoodCache(model, ensemble.t, gcfg.method, schedule)
    skips = 0
    grads_h, _ = assemble_posterior_scores(
        ensemble.h, ensemble.n, model, ensemble.t, schedule, ensemble.gamma,
        gcfg, n_provider, cache=cache, which="h")
    ensemble.h, s = _langevin_move(ensemble.h, grads_h, cfg.nu, rng)
    skips += s
    _, grads_n = assemble_posterior_scores(
        ensemble.h, ensemble.n, model, ensemble.t, schedule, ensemble.gamma,
        gcfg, n_provider, cache=cache, which="n")
    ensemble.n, s = _langevin_move(ensemble.n, grads_n, cfg.nu, rng)
    return skips + s


def denoise_step(ensemble, model, cfg, schedule, n_provider, cache=None):
    """Replace the final predictor move with the posterior-mean map.

    Small posterior directions make the discrete reverse SDE nearly
    neutral near t = 0, which leaves each sample carrying excess spread
    there; conditioning on the current state instead of integrating the
    last increment contracts exactly those directions."""
    t = ensemble.t
    gcfg = cfg.guidance()
    if cache is None:
        cache = LikelihoodCache(model, t, gcfg.method, schedule)
    grads_h, grads_n = assemble_posterior_scores(
        ensemble.h, ensemble.n, model, t, schedule, ensemble.gamma,
        gcfg, n_provider, cache=cache, which="both")
    a = max(schedule.alpha(t), ALPHA_FLOOR)
    var = 2.0 * (1.0 - schedule.alpha(t) ** 2)
    ensemble.h = (ensemble.h + var * grads_h) / a
    ensemble.n = (ensemble.n + var * grads_n) / a
    ensemble.t = 0.0


def predictor_step(ensemble, model, cfg, schedule, n_provider, rng, cache=None):
    """Euler-Maruyama move from t to t - 1/steps; both gradient sets are
    evaluated at the incoming time-t states.

    The reverse-SDE drift runs on the real coordinates, so the
    conjugate Wirtinger scores enter doubled."""
    t = ensemble.t
    gcfg = cfg.guidance()
    if cache is None:
        cache = LikelihoodCache(model, t, gcfg.method, schedule)
    grads_h, grads_n = assemble_posterior_scores(
        ensemble.h, ensemble.n, model, t, schedule, ensemble.gamma,
        gcfg, n_provider, cache=cache, which="both")
    dt = 1.0 / schedule.steps
    bt = schedule.beta(t)
    sd = np.sqrt(bt * dt)
    for attr, grads in (("h", grads_h), ("n", grads_n)):
        x = getattr(ensemble, attr)
        noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        setattr(ensemble, attr,
                x + (0.5 * bt * x + bt * 2.0 * grads) * dt + sd * noise)
    ensemble.t = t - dt


def em_update_gamma_posterior(model, n0_bar, t, gamma, schedule,
                              gamma_floor=GAMMA_FLOOR):
    """Variance refresh from the exact per-tap channel posterior moments.

    Given the current denoised interference estimate, the channel block
    is linear-Gaussian, so the conditional mean and per-tap variance
    under the current prior are available in closed form:

        mu    = Gamma A^H S^{-1} (y - n0_bar)
        Sigma_jj = gamma_j - gamma_j^2 a_j^H S^{-1} a_j
        S     = A Gamma A^H + (2(1-alpha^2) + sigma_y^2) I

    and the refresh is the standard variance update |mu_j|^2 + Sigma_jj.
    Returns (gamma_new, c_est).

    The effective noise level c is learned the same way the variances
    are: a first pass at the annealed floor 2(1-alpha^2) + sigma_y^2
    yields the residual power c_est = (||y - n0_bar - A mu||^2 +
    tr(A Sigma A^H)) / M, and a second pass reruns the moments at the
    larger of the two.  Early calls are therefore heavily regularized by
    the schedule, while near t = 0 the floor drops to the true
    measurement noise but whatever interference the denoised estimate
    has not yet removed keeps inflating c instead of being chased as if
    it were signal.  c_est is also handed back to the caller so the
    guidance covariance can widen by the same amount.

    Ensemble-moment refreshes break down here because guided ensembles
    are under-dispersed (the pseudo-likelihood curvature never
    vanishes), which drives raw kernel inversions negative and makes
    denoised sample spreads echo amplified likelihood noise instead of
    posterior uncertainty."""
    a_t = schedule.alpha(t)
    floor = 2.0 * (1.0 - a_t * a_t) + model.sigma_y2
    A = model.A.matrix
    m = A.shape[0]
    gamma = np.asarray(gamma, dtype=np.float64)
    resid = np.asarray(model.y) - np.asarray(n0_bar)
    col_power = np.sum(np.abs(A) ** 2, axis=0).real

    def moments(c):
        S = (A * gamma) @ A.conj().T
        S[np.diag_indices(m)] += c
        cho = scipy.linalg.cho_factor(S, lower=True)
        mu = gamma * (A.conj().T @ scipy.linalg.cho_solve(cho, resid))
        quad = np.sum(A.conj() * scipy.linalg.cho_solve(cho, A), axis=0).real
        sigma_diag = np.maximum(gamma - gamma * gamma * quad, 0.0)
        return mu, sigma_diag

    mu, sigma_diag = moments(floor)
    c_est = (float(np.sum(np.abs(resid - A @ mu) ** 2))
             + float(np.dot(col_power, sigma_diag))) / m
    if c_est > floor:
        mu, sigma_diag = moments(c_est)
    gamma_new = np.maximum(np.abs(mu) ** 2 + sigma_diag, gamma_floor)
    return gamma_new, c_est


def _em_refresh(ensemble, model, schedule, n_provider):
    """Gamma update at the ensemble's time from the posterior moments,
    conditioning on the denoised mean of the interference ensemble.
    Returns (gamma_new, c_est)."""
    n_bar = ensemble.n.mean(axis=0)
    n0_bar = tweedie_denoise(
        n_bar, n_provider.score(n_bar, ensemble.t, schedule), ensemble.t,
        schedule)
    if not np.all(np.isfinite(n0_bar)):
        raise NumericError(
            f"non-finite interference estimate in EM refresh "
            f"(t={ensemble.t:.6f})")
    return em_update_gamma_posterior(model, n0_bar, ensemble.t,
                                     ensemble.gamma, schedule)


def _run_cache(model, t, cfg, schedule, ensemble, extra_var, em_live):
    """Likelihood cache for one step; once EM owns gamma, the pgdm
    covariance tracks the learned per-tap variances."""
    gamma = ensemble.gamma if (em_live and cfg.method == "pgdm") else None
    return LikelihoodCache(model, t, cfg.method, schedule,
                           extra_var=extra_var, gamma=gamma)


def _check_finite(ensemble, phase, step):
    for name, arr in (("h", ensemble.h), ("n", ensemble.n),
                      ("gamma", ensemble.gamma)):
        if not np.all(np.isfinite(arr)):
            raise NumericError(
                f"non-finite {name} ensemble after {phase} at step {step} "
                f"(t={ensemble.t:.6f})")


def run(model, cfg, n_provider, schedule=None, truth=None, gamma_init=None,
        rng=None):
    """Full reverse pass; returns a RunResult with the ensemble means.

    Args:
        model: MeasurementModel to condition on.
        cfg: SamplerConfig.
        n_provider: interference score provider.
        schedule: VpSchedule; defaults to the standard ramp with cfg.steps.
        truth: optional true channel, enables NMSE columns in the trace.
        gamma_init: optional starting prior variances (default rho per tap);
            with em_enabled=False they stay fixed for the whole run, and
            with EM they hold until t reaches cfg.em_start.
        rng: optional generator; defaults to default_rng(cfg.seed).
    """
    if schedule is None:
        schedule = VpSchedule(steps=cfg.steps)
    elif schedule.steps != cfg.steps:
        raise ConfigError(
            f"schedule has {schedule.steps} steps but config asks {cfg.steps}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if not np.all(np.isfinite(model.y)):
        raise NumericError("measurement vector contains non-finite entries")
    ensemble = initialize(model, cfg, schedule, rng)
    if gamma_init is not None:
        gamma_init = np.asarray(gamma_init, dtype=np.float64)
        if gamma_init.shape != (model.A.L,):
            raise ConfigError(
                f"gamma_init shape {gamma_init.shape} != ({model.A.L},)")
        if gamma_init.min() <= 0:
            raise ConfigError("gamma_init must be strictly positive")
        ensemble.gamma = gamma_init.copy()

    result = RunResult(h_hat=None, n_hat=None, gamma=None)
    extra_var = 0.0
    em_live = False   # becomes true at the first gamma refresh
    for i in range(cfg.steps - 1, -1, -1):
        t = (i + 1) / cfg.steps
        ensemble.t = t
        cache = _run_cache(model, t, cfg, schedule, ensemble, extra_var,
                           em_live)
        for _ in range(cfg.corrector_sweeps):
            result.langevin_skips += corrector_step(
                ensemble, model, cfg, schedule, n_provider, rng, cache=cache)
        _check_finite(ensemble, "corrector", i)
        if cfg.em_enabled and ensemble.t <= cfg.em_start:
            ensemble.gamma, c_est = _em_refresh(
                ensemble, model, schedule, n_provider)
            extra_var = max(c_est - model.sigma_y2, 0.0)
            em_live = True
            cache = _run_cache(model, t, cfg, schedule, ensemble, extra_var,
                               em_live)
        if i == 0:
            denoise_step(ensemble, model, cfg, schedule, n_provider,
                         cache=cache)
        else:
            predictor_step(ensemble, model, cfg, schedule, n_provider, rng,
                           cache=cache)
        _check_finite(ensemble, "predictor", i)
        if i > 0 and cfg.em_enabled and ensemble.t <= cfg.em_start:
            ensemble.gamma, c_est = _em_refresh(
                ensemble, model, schedule, n_provider)
            extra_var = max(c_est - model.sigma_y2, 0.0)
        result.trace.append(_trace_row(ensemble, i, t, schedule, truth))

    result.h_hat = ensemble.h.mean(axis=0)
    result.n_hat = ensemble.n.mean(axis=0)
    result.gamma = ensemble.gamma.copy()
    return result


def _trace_row(ensemble, step, t, schedule, truth):
    row = {
        "step": step,
        "t": t,
        "gamma_min": float(ensemble.gamma.min()),
        "gamma_max": float(ensemble.gamma.max()),
        "nmse_mean_db": float("nan"),
        "nmse_sample_median_db": float("nan"),
    }
    if truth is not None:
        # intermediate estimates are rescaled by alpha at the state's time
        a = max(schedule.alpha(ensemble.t), ALPHA_FLOOR)
        row["nmse_mean_db"] = nmse_db(ensemble.h.mean(axis=0) / a, truth)
        per_sample = [nmse_db(ensemble.h[j] / a, truth)
                      for j in range(ensemble.k)]
        row["nmse_sample_median_db"] = float(np.median(per_sample))
    return row


TRACE_COLUMNS = ("step", "t", "gamma_min", "gamma_max", "nmse_mean_db",
                 "nmse_sample_median_db")


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in trace:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float)
                             else row[k] for k in TRACE_COLUMNS})
