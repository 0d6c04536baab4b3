"""Sparse channel estimation under structured interference.

Core pieces: a Toeplitz pilot measurement model, a variance-preserving
complex diffusion, analytic and learned interference score providers,
DMPS/PGDM measurement guidance, a predictor-corrector posterior sampler
with EM-learned per-tap prior variances, classical baselines, and a
Monte-Carlo benchmark harness.
"""

from .cbin import read_cbin, write_cbin
from .errors import ConfigError, FormatError, NumericError
from .guidance import (GuidanceConfig, LikelihoodCache,
                       assemble_posterior_scores, dmps_likelihood_scores,
                       pgdm_likelihood_scores)
from .sampler import (RunResult, SampleEnsemble, SamplerConfig,
                      em_update_gamma, initialize, nmse_db, run)
from .score_net import ScoreNetwork, build_residual_network
from .scores import (GaussianInterferencePrior, LearnedInterferenceScore,
                     channel_prior_score, channel_tweedie_gain)
from .sde import VpSchedule, perturb, tweedie_denoise
from .signal_model import (ChannelSpec, InterferenceSpec, MeasurementModel,
                           PilotMatrix, generate_channel,
                           generate_interference, generate_pilot,
                           scale_and_mix, squared_exp_covariance)

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec", "ConfigError", "FormatError", "GaussianInterferencePrior",
    "GuidanceConfig", "InterferenceSpec", "LearnedInterferenceScore",
    "LikelihoodCache", "MeasurementModel", "NumericError", "PilotMatrix",
    "RunResult", "SampleEnsemble", "SamplerConfig", "ScoreNetwork",
    "VpSchedule", "assemble_posterior_scores", "build_residual_network",
    "channel_prior_score", "channel_tweedie_gain", "dmps_likelihood_scores",
    "em_update_gamma", "generate_channel", "generate_interference",
    "generate_pilot", "initialize", "nmse_db", "perturb",
    "pgdm_likelihood_scores", "read_cbin", "run", "scale_and_mix",
    "squared_exp_covariance", "tweedie_denoise", "write_cbin",
]
