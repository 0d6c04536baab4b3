"""Flat key=value configuration shared by the CLI entry points.

Config files are plain text: one `key=value` per line, `#` comments and
blank lines ignored.  Command-line --set overrides win over the file,
which wins over the defaults below.  Keys are namespaced with dots but
the table stays flat on purpose; there is no nesting.
"""

import numpy as np

from .errors import ConfigError

DEFAULTS = {
    # diffusion schedule
    "sde.beta_min": 0.1,
    "sde.beta_max": 20.0,
    # sampler
    "sampler.steps": 500,
    "sampler.n_samples": 256,
    "sampler.nu": 0.16,
    "sampler.rho": 1.0,
    "sampler.mu": 1.0,
    "sampler.kappa": 1.0,
    "sampler.em": True,
    "sampler.em_start": 0.5,
    "sampler.corrector_sweeps": 1,
    "sampler.seed": 0,
    # learned interference score
    "scores.weights": "",
    "scores.vjp": "fd",
    "scores.vjp_gate": 0.6,
    # scenario
    "scenario.m": 200,
    "scenario.l": 200,
    "scenario.n_paths": 10,
    "scenario.symbol_rate_hz": 4000.0,
    "scenario.inter_arrival_ms": 3.0,
    "scenario.decay_db": 20.0,
    "scenario.decay_span_ms": 30.0,
    "scenario.interference": "lfm",
    "scenario.lfm_bandwidth_hz": 1000.0,
    "scenario.lfm_duration_s": 2.0,
    "scenario.gp_corr_len": 8.0,
    "scenario.snr_db": 30.0,
    "scenario.sir_db": 5.0,
    # benchmark sweep
    "bench.snr_db": "30",
    "bench.sir_db": "5",
    "bench.trials": 50,
    "bench.methods": "dmsbl-dmps,mmse,omp,sbl",
    "bench.seed": 1234,
    "bench.workers": 1,
    "bench.mmse_prior_var": 0.0,   # 0 -> use 1/L
    "bench.sbl_max_iters": 200,
    "bench.figures": True,
}

_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "on": True,
                 "false": False, "0": False, "no": False, "off": False}


def _coerce(key, raw, like):
    if isinstance(like, bool):
        token = str(raw).strip().lower()
        if token not in _BOOL_STRINGS:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        return _BOOL_STRINGS[token]
    if isinstance(like, int):
        try:
            return int(str(raw).strip())
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if isinstance(like, float):
        try:
            value = float(str(raw).strip())
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
        if not np.isfinite(value):
            raise ConfigError(f"{key}: value must be finite, got {raw!r}")
        return value
    return str(raw).strip()


def parse_file(path):
    """Read key=value pairs from a file (no defaults applied)."""
    pairs = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected key=value, "
                                  f"got {body!r}")
            key, value = body.split("=", 1)
            pairs[key.strip()] = value.strip()
    return pairs


def apply_pairs(cfg, pairs, ignore_unknown=False):
    """Validate, coerce and install raw string pairs into cfg."""
    for key, raw in pairs.items():
        if key not in DEFAULTS:
            if ignore_unknown:
                continue
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, raw, DEFAULTS[key])
    return cfg


def override_pairs(overrides):
    pairs = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def build(file_path=None, overrides=()):
    """Defaults, then file pairs, then override pairs; all keys checked."""
    cfg = dict(DEFAULTS)
    if file_path:
        apply_pairs(cfg, parse_file(file_path))
    if overrides:
        apply_pairs(cfg, override_pairs(overrides))
    return cfg


def float_list(cfg, key):
    """Parse a comma-separated list of numbers from a string-valued key."""
    raw = str(cfg[key]).strip()
    if not raw:
        raise ConfigError(f"{key} must name at least one value")
    try:
        return [float(tok) for tok in raw.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers, "
                          f"got {raw!r}") from exc


def write_file(cfg, path):
    with open(path, "w") as f:
        for key in sorted(cfg):
            f.write(f"{key}={cfg[key]}\n")
