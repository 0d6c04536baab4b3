"""Variance-preserving diffusion schedule and complex perturbation kernel.

The forward SDE uses a linear noise ramp beta(t) = beta_min +
t*(beta_max - beta_min) on t in [0, 1] with signal decay
alpha(t) = exp(-t*(beta(t) - beta_min)/4).  A complex vector x0 diffuses
to x_t ~ CN(alpha(t)*x0, 2*(1 - alpha(t)^2) I), i.e. real and imaginary
parts independently pick up variance 1 - alpha(t)^2.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# guards divisions by alpha(t) near t = 1 where the signal has decayed away
ALPHA_FLOOR = 1e-5


@dataclass(frozen=True)
class VpSchedule:
    beta_min: float = 0.1
    beta_max: float = 20.0
    steps: int = 500

    def __post_init__(self):
        if not (0 < self.beta_min < self.beta_max):
            raise ConfigError(
                f"need 0 < beta_min < beta_max, got ({self.beta_min}, {self.beta_max})"
            )
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")

    def beta(self, t):
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def alpha(self, t):
        return np.exp(-0.25 * t * (self.beta(t) - self.beta_min))

    def kernel_var(self, t):
        """Per-complex-entry variance 2*(1 - alpha(t)^2) of the kernel."""
        a = self.alpha(t)
        return 2.0 * (1.0 - a * a)


def perturb(x0, t, schedule, rng):
    """Sample x_t ~ CN(alpha(t) x0, 2(1 - alpha(t)^2) I) given x0."""
    x0 = np.asarray(x0, dtype=np.complex128)
    a = schedule.alpha(t)
    sd = np.sqrt(1.0 - a * a)
    noise = rng.standard_normal(x0.shape) + 1j * rng.standard_normal(x0.shape)
    return a * x0 + sd * noise


def tweedie_denoise(x_t, score, t, schedule):
    """Posterior-mean estimate of x0 from x_t and the marginal score.

    x0_hat = (x_t + 2(1 - alpha^2) * score) / alpha.  With the exact
    score of a Gaussian marginal this is the exact conditional mean.
    """
    a = max(schedule.alpha(t), ALPHA_FLOOR)
    return (np.asarray(x_t) + schedule.kernel_var(t) * np.asarray(score)) / a
