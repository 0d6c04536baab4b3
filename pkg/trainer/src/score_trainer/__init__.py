"""Score-matching trainer for interference priors used by dmsbl.

Trains a residual conv network on interference segments (exported by
`dmsbl export-interference-dataset`) and writes the weights in the
`.dmsc` format the estimator loads.
"""

from .errors import ConfigError, FormatError, NumericError
from .formats import (LayerRecord, read_cbin, read_dmsc, validate_layers,
                      write_cbin, write_dmsc)
from .network import (ScoreModel, export_layers, model_from_layers,
                      sinusoidal_embedding)
from .train import (TrainingConfig, TrainingLog, export_checkpoint,
                    kernel_moments, load_segments, train)

__all__ = [
    "ConfigError", "FormatError", "LayerRecord", "NumericError",
    "ScoreModel", "TrainingConfig", "TrainingLog", "export_checkpoint",
    "export_layers", "kernel_moments", "load_segments", "model_from_layers",
    "read_cbin", "read_dmsc", "sinusoidal_embedding", "train",
    "validate_layers", "write_cbin", "write_dmsc",
]
