"""Classical channel estimators used as benchmark references.

All three treat interference-plus-noise as unstructured: linear MMSE
with a flat prior, orthogonal matching pursuit with known sparsity, and
EM sparse Bayesian learning with an in-loop noise variance update.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError

SBL_GAMMA_FLOOR = 1e-10
SBL_NOISE_FLOOR = 1e-12


def mmse_estimate(model, prior_var, noise_var):
    """Linear MMSE under h ~ CN(0, prior_var I) and white noise.

    h_hat = prior_var A^H (prior_var A A^H + noise_var I)^{-1} y.
    """
    if prior_var <= 0 or noise_var <= 0:
        raise ConfigError("prior_var and noise_var must be positive")
    m = model.A.M
    cov = prior_var * model.A.gram() + noise_var * np.eye(m)
    return prior_var * model.A.apply_adjoint(
        scipy.linalg.solve(cov, model.y, assume_a="her"))


@dataclass
class OmpResult:
    h_hat: np.ndarray
    support: list
    residual_norms: list
    converged: bool


def omp_estimate(model, sparsity):
    """Orthogonal matching pursuit with a known number of taps.

    Greedy correlation selection (ties break to the lowest index, which
    argmax already does), least-squares refit on the support each round.
    An atom that makes the support rank-deficient is discarded and
    barred; that run reports converged=False.
    """
    if not 1 <= sparsity <= model.A.L:
        raise ConfigError(
            f"sparsity must be in [1, L={model.A.L}], got {sparsity}")
    A = model.A.matrix
    y = model.y
    resid = y.copy()
    support = []
    barred = np.zeros(model.A.L, dtype=bool)
    norms = [float(np.linalg.norm(resid))]
    coef = None
    converged = True
    while len(support) < sparsity and not barred.all():
        corr = np.abs(A.conj().T @ resid)
        corr[barred] = -1.0
        idx = int(np.argmax(corr))
        if corr[idx] <= 0.0:
            converged = False
            break
        trial = support + [idx]
        sub = A[:, trial]
        sol, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(trial):
            barred[idx] = True
            converged = False
            continue
        support = trial
        barred[idx] = True
        coef = sol
        resid = y - sub @ coef
        norms.append(float(np.linalg.norm(resid)))
    h_hat = np.zeros(model.A.L, dtype=np.complex128)
    if support:
        h_hat[support] = coef
    if len(support) < sparsity:
        converged = False
    return OmpResult(h_hat=h_hat, support=support, residual_norms=norms,
                     converged=converged)


@dataclass
class SblResult:
    h_hat: np.ndarray
    gamma: np.ndarray
    noise_var: float
    evidence: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def sbl_estimate(model, max_iters=200, tol=1e-4, noise_var_init=None):
    """EM sparse Bayesian learning with per-tap prior variances.

    Each iteration computes the Gaussian posterior of h, then re-fits
    gamma (per-tap second moments) and the noise variance from the same
    posterior, so the log evidence never decreases.  Stops when the
    largest relative gamma change drops below tol.
    """
    if max_iters < 1:
        raise ConfigError(f"max_iters must be >= 1, got {max_iters}")
    A = model.A.matrix
    y = model.y
    m, length = A.shape
    gram = A.conj().T @ A
    aty = A.conj().T @ y
    p_y = float(np.vdot(y, y).real) / m
    noise_var = float(noise_var_init) if noise_var_init else max(
        0.1 * p_y, SBL_NOISE_FLOOR)
    gamma = np.full(length, max(p_y, SBL_NOISE_FLOOR))

    result = SblResult(h_hat=np.zeros(length, np.complex128), gamma=gamma,
                       noise_var=noise_var)
    for it in range(max_iters):
        # posterior of h given the current hyperparameters
        prec = gram / noise_var + np.diag(1.0 / gamma)
        cov = scipy.linalg.inv(prec)
        mean = cov @ aty / noise_var
        diag_cov = cov.diagonal().real

        result.evidence.append(_log_evidence(A, y, gamma, noise_var))
        gamma_new = np.maximum(diag_cov + np.abs(mean) ** 2, SBL_GAMMA_FLOOR)
        resid = y - A @ mean
        fit = float(np.vdot(resid, resid).real)
        smear = float(np.einsum("ij,ji->", A @ cov, A.conj().T).real)
        noise_var = max((fit + smear) / m, SBL_NOISE_FLOOR)

        delta = np.max(np.abs(gamma_new - gamma) / np.maximum(gamma, 1e-30))
        gamma = gamma_new
        result.h_hat = mean
        result.gamma = gamma
        result.noise_var = noise_var
        result.iterations = it + 1
        if delta < tol:
            result.converged = True
            break
    return result


def _log_evidence(A, y, gamma, noise_var):
    """ln p(y; gamma, noise_var) for y ~ CN(0, noise_var I + A G A^H)."""
    m = A.shape[0]
    cov = noise_var * np.eye(m) + (A * gamma) @ A.conj().T
    chol, low = scipy.linalg.cho_factor(cov, lower=True)
    logdet = 2.0 * np.sum(np.log(chol.diagonal().real))
    quad = float(np.vdot(y, scipy.linalg.cho_solve((chol, low), y)).real)
    return float(-m * np.log(np.pi) - logdet - quad)
