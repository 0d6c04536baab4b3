"""Score functions for the diffused channel and interference variables.

All scores are Wirtinger gradients with respect to the conjugate
variable, so for p(x) = CN(x; 0, S) the score of the time-t marginal is
-(alpha^2 S + 2(1-alpha^2) I)^{-1} x with no extra factor 1/2.  Every
entry point accepts a single vector or a batch with the vector axis
last.
"""

import numpy as np

from .errors import ConfigError, FormatError
from .score_net import ScoreNetwork
from .sde import ALPHA_FLOOR, tweedie_denoise


def channel_prior_score(h_t, t, gamma, schedule):
    """Score of the diffused sparse-channel marginal.

    The channel prior is CN(0, diag(gamma)), so the time-t marginal
    covariance is diagonal with entries 2(1-alpha^2) + alpha^2*gamma.
    """
    a = schedule.alpha(t)
    denom = 2.0 * (1.0 - a * a) + a * a * np.asarray(gamma)
    return -np.asarray(h_t) / denom


def channel_tweedie_gain(t, gamma, schedule):
    """Diagonal of d(h0_hat)/d(h_t) for the analytic channel denoiser.

    Real positive entries alpha*gamma / (2(1-alpha^2) + alpha^2*gamma);
    the Jacobian is Hermitian, so it serves vjps directly.
    """
    a = schedule.alpha(t)
    return a * np.asarray(gamma) / (2.0 * (1.0 - a * a) + a * a * np.asarray(gamma))


class GaussianInterferencePrior:
    """Analytic score provider for interference n ~ CN(0, covariance).

    Keeps the eigendecomposition so per-step work is two projections.
    Used both as the oracle provider in benchmarks and as the reference
    the learned provider is validated against.
    """

    def __init__(self, covariance, _eig=None):
        if _eig is not None:
            self.eigvals, self.eigvecs = _eig
            self.covariance = covariance
            return
        cov = np.asarray(covariance, dtype=np.complex128)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ConfigError(f"covariance must be square, got shape {cov.shape}")
        scale = max(1.0, float(abs(cov).max()))
        if not np.allclose(cov, cov.conj().T, atol=1e-10 * scale):
            raise ConfigError("covariance must be Hermitian")
        w, U = np.linalg.eigh(cov)
        if w.min() < -1e-10 * max(float(w.max()), 1.0):
            raise ConfigError("covariance has significantly negative eigenvalues")
        self.covariance = cov
        self.eigvals = np.clip(w, 0.0, None)
        self.eigvecs = U

    @property
    def dim(self):
        return self.eigvals.size

    def scaled(self, power_scale):
        """Provider for (power_scale * covariance); reuses the eigenbasis."""
        if power_scale < 0:
            raise ConfigError(f"power_scale must be >= 0, got {power_scale}")
        return GaussianInterferencePrior(
            power_scale * self.covariance,
            _eig=(power_scale * self.eigvals, self.eigvecs),
        )

    def _marginal_eigs(self, t, schedule):
        a = schedule.alpha(t)
        return a, a * a * self.eigvals + 2.0 * (1.0 - a * a)

    def score(self, x_t, t, schedule):
        """-(alpha^2 S + 2(1-alpha^2) I)^{-1} x_t, batched over rows."""
        _, d = self._marginal_eigs(t, schedule)
        U = self.eigvecs
        proj = np.asarray(x_t) @ U.conj()
        return -(proj / d) @ U.T

    def vjp(self, v, x_t, t, schedule):
        """Apply the (Hermitian) denoiser Jacobian alpha*S*(marginal)^-1 to v."""
        a, d = self._marginal_eigs(t, schedule)
        gain = a * self.eigvals / d
        U = self.eigvecs
        return ((np.asarray(v) @ U.conj()) * gain) @ U.T


class LearnedInterferenceScore:
    """Score provider backed by a trained network loaded from a .dmsc file.

    vjp_mode "fd" differentiates the denoiser by central finite
    differences along the requested direction in the real 2M-dim
    representation; exact score fields have symmetric real Jacobians,
    which lets a directional derivative stand in for the adjoint
    product.  vjp_mode "identity" returns v / alpha(t).

    Both modes return zero above t = vjp_gate.  Early in the schedule
    the exact denoiser Jacobian is O(alpha * lam / v) — vanishing — while
    anything probed from a trained network carries its Jacobian error
    divided by alpha; feeding that into the guidance destabilizes the
    sampler within a few steps.  Zero is the honest value there.
    """

    def __init__(self, network, vjp_mode="fd", vjp_gate=0.6):
        if not isinstance(network, ScoreNetwork):
            raise ConfigError("network must be a ScoreNetwork")
        if vjp_mode not in ("fd", "identity"):
            raise ConfigError(f"unknown vjp_mode {vjp_mode!r}")
        if not 0.0 <= vjp_gate <= 1.0:
            raise ConfigError(f"vjp_gate must lie in [0, 1], got {vjp_gate}")
        self.network = network
        self.vjp_mode = vjp_mode
        self.vjp_gate = float(vjp_gate)

    @classmethod
    def from_file(cls, path, vjp_mode="fd", vjp_gate=0.6):
        return cls(ScoreNetwork.load(path), vjp_mode=vjp_mode,
                   vjp_gate=vjp_gate)

    def score(self, x_t, t, schedule):
        del schedule  # the network carries its own time conditioning
        return self.network.score(x_t, t)

    def _denoise(self, x_t, t, schedule):
        return tweedie_denoise(x_t, self.network.score(x_t, t), t, schedule)

    def vjp(self, v, x_t, t, schedule):
        v = np.asarray(v, dtype=np.complex128)
        x_t = np.asarray(x_t, dtype=np.complex128)
        if t > self.vjp_gate:
            return np.zeros_like(v)
        if self.vjp_mode == "identity":
            a = max(schedule.alpha(t), ALPHA_FLOOR)
            return v / a
        m = x_t.shape[-1]
        # direction-normalized central difference through the denoiser
        norms = np.sqrt(
            np.sum(v.real**2 + v.imag**2, axis=-1, keepdims=True))
        safe = np.where(norms > 0, norms, 1.0)
        u = v / safe
        eps = 1e-3 * (
            1.0 + np.sqrt(np.sum(x_t.real**2 + x_t.imag**2, axis=-1, keepdims=True))
            / np.sqrt(m)
        )
        hi = self._denoise(x_t + eps * u, t, schedule)
        lo = self._denoise(x_t - eps * u, t, schedule)
        return (hi - lo) / (2.0 * eps) * norms


def load_interference_provider(path, vjp_mode="fd", vjp_gate=0.6):
    """Load a learned provider, with a descriptive error for a bad path."""
    try:
        return LearnedInterferenceScore.from_file(path, vjp_mode=vjp_mode,
                                                  vjp_gate=vjp_gate)
    except FileNotFoundError as exc:
        raise FormatError(
            f"interference score weights not found at {path!r}; expected a "
            ".dmsc file (train one with the score-trainer package)"
        ) from exc
