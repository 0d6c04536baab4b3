"""Measurement model and scenario generators.

The observation is y = A h + n + eps, where A is the M x L Toeplitz
matrix built from a known pilot sequence (valid-part linear
convolution), h is a sparse multipath channel, n is structured
interference and eps is circular white Gaussian noise.  Everything here
is deterministic given an explicit `rng`.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericError


class PilotMatrix:
    """Convolution with a pilot sequence, restricted to the valid part.

    For a pilot of length N and channel length L the operator maps C^L
    to C^M with M = N - L + 1 and entries A[m, l] = pilot[L-1+m-l], so
    A @ h equals np.convolve(pilot, h, mode="valid").
    """

    def __init__(self, pilot, channel_len):
        pilot = np.asarray(pilot, dtype=np.complex128)
        if pilot.ndim != 1:
            raise ConfigError(f"pilot must be 1-D, got shape {pilot.shape}")
        L = int(channel_len)
        if L < 1 or L > pilot.size:
            raise ConfigError(
                f"channel_len must be in [1, len(pilot)={pilot.size}], got {L}"
            )
        self.pilot = pilot
        self.L = L
        self.M = pilot.size - L + 1
        # first column runs down the pilot tail, first row back to pilot[0]
        self.matrix = scipy.linalg.toeplitz(pilot[L - 1:], pilot[L - 1::-1])
        self._gram = None

    @property
    def shape(self):
        return (self.M, self.L)

    def apply(self, h):
        """A @ h for a vector (L,) or a batch (..., L)."""
        return np.asarray(h) @ self.matrix.T

    def apply_adjoint(self, v):
        """A^H @ v for a vector (M,) or a batch (..., M)."""
        return np.asarray(v) @ self.matrix.conj()

    def gram(self):
        """A A^H, cached (M x M Hermitian)."""
        if self._gram is None:
            self._gram = self.matrix @ self.matrix.conj().T
        return self._gram


@dataclass
class MeasurementModel:
    """One observed estimation problem: operator, measurement, noise level."""

    A: PilotMatrix
    y: np.ndarray
    sigma_y2: float

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.complex128)
        if self.y.shape != (self.A.M,):
            raise ConfigError(
                f"y has shape {self.y.shape}, operator expects ({self.A.M},)"
            )
        if not self.sigma_y2 >= 0:
            raise ConfigError(f"sigma_y2 must be >= 0, got {self.sigma_y2}")


def generate_pilot(n_symbols, rng):
    """BPSK pilot: i.i.d. +-1 entries as a complex vector."""
    if n_symbols < 1:
        raise ConfigError(f"pilot length must be >= 1, got {n_symbols}")
    bits = rng.integers(0, 2, size=n_symbols)
    return (2.0 * bits - 1.0).astype(np.complex128)


@dataclass
class ChannelSpec:
    """Sparse multipath channel with exponential arrivals and power decay.

    Path delays accumulate exponential inter-arrival gaps (mean
    `inter_arrival_ms`, first path at delay zero) and are quantized to
    the symbol grid of `symbol_rate_hz`.  Tap moduli are Rayleigh with
    mean power decaying `decay_db` over `decay_span_ms`; phases are
    uniform.  Paths quantized to the same tap add up.
    """

    length: int = 200
    n_paths: int = 10
    symbol_rate_hz: float = 4000.0
    inter_arrival_ms: float = 3.0
    decay_db: float = 20.0
    decay_span_ms: float = 30.0
    normalize: bool = True

    def __post_init__(self):
        if self.length < 1:
            raise ConfigError(f"channel length must be >= 1, got {self.length}")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.symbol_rate_hz <= 0 or self.inter_arrival_ms <= 0:
            raise ConfigError("symbol_rate_hz and inter_arrival_ms must be positive")
        if self.decay_span_ms <= 0:
            raise ConfigError("decay_span_ms must be positive")


_REDRAW_LIMIT = 100


def generate_channel(spec, rng):
    """Draw one channel realization (complex vector of spec.length)."""
    span_sym = spec.decay_span_ms * 1e-3 * spec.symbol_rate_hz
    gap_sym = spec.inter_arrival_ms * 1e-3 * spec.symbol_rate_hz
    for attempt in range(_REDRAW_LIMIT):
        gaps = rng.exponential(scale=gap_sym, size=spec.n_paths - 1)
        delays = np.concatenate(([0.0], np.cumsum(gaps)))
        taps = np.rint(delays).astype(int)
        if taps.max() <= spec.length - 1:
            break
    else:
        warnings.warn(
            f"channel delays exceeded {spec.length} taps in {_REDRAW_LIMIT} draws; "
            "truncating to the last tap",
            RuntimeWarning,
        )
        taps = np.minimum(taps, spec.length - 1)

    # mean tap power decays decay_db over decay_span_ms
    mean_power = 10.0 ** (-(spec.decay_db / 10.0) * (taps / span_sym))
    moduli = rng.rayleigh(scale=np.sqrt(mean_power / 2.0))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=spec.n_paths)
    amps = moduli * np.exp(1j * phases)

    h = np.zeros(spec.length, dtype=np.complex128)
    np.add.at(h, taps, amps)
    if spec.normalize:
        norm = np.linalg.norm(h)
        if norm == 0.0:
            raise NumericError("all channel taps are zero; cannot normalize")
        h = h / norm
    return h


@dataclass
class InterferenceSpec:
    """Structured interference source.

    kind="lfm": a random contiguous window of a baseband linear FM chirp
    exp(j*pi*(bandwidth/duration)*t^2 + j*phi0), sampled at
    `symbol_rate_hz`, random start phase, unit modulus.

    kind="gaussian_process": a draw from CN(0, covariance); `covariance`
    must then be an (M, M) Hermitian PSD array.
    """

    kind: str = "lfm"
    length: int = 200
    symbol_rate_hz: float = 4000.0
    lfm_bandwidth_hz: float = 1000.0
    lfm_duration_s: float = 2.0
    covariance: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("lfm", "gaussian_process"):
            raise ConfigError(f"unknown interference kind {self.kind!r}")
        if self.length < 1:
            raise ConfigError(f"interference length must be >= 1, got {self.length}")
        if self.kind == "lfm":
            n_total = int(round(self.lfm_duration_s * self.symbol_rate_hz))
            if n_total < self.length:
                raise ConfigError(
                    f"LFM sweep holds {n_total} samples, shorter than the "
                    f"requested window of {self.length}"
                )
        if self.kind == "gaussian_process":
            if self.covariance is None:
                raise ConfigError("gaussian_process interference needs a covariance")
            cov = np.asarray(self.covariance, dtype=np.complex128)
            if cov.shape != (self.length, self.length):
                raise ConfigError(
                    f"covariance shape {cov.shape} does not match length {self.length}"
                )
            if not np.allclose(cov, cov.conj().T, atol=1e-10 * max(1.0, abs(cov).max())):
                raise ConfigError("covariance must be Hermitian")
            self.covariance = cov


def lfm_sweep(spec, phi0=0.0):
    """Full unit-modulus chirp for an lfm spec (helper for tests/export)."""
    n_total = int(round(spec.lfm_duration_s * spec.symbol_rate_hz))
    t = np.arange(n_total) / spec.symbol_rate_hz
    rate = spec.lfm_bandwidth_hz / spec.lfm_duration_s
    return np.exp(1j * (np.pi * rate * t**2 + phi0))


def generate_interference(spec, rng):
    """Draw one interference realization of spec.length samples."""
    if spec.kind == "lfm":
        phi0 = rng.uniform(0.0, 2.0 * np.pi)
        sweep = lfm_sweep(spec, phi0)
        start = rng.integers(0, sweep.size - spec.length + 1)
        return sweep[start:start + spec.length]
    # gaussian_process: factor once per call; specs are cheap to reuse
    cov = spec.covariance
    w, U = np.linalg.eigh(cov)
    if w.min() < -1e-10 * max(w.max(), 1.0):
        raise ConfigError("covariance is not positive semidefinite")
    root = U * np.sqrt(np.clip(w, 0.0, None))
    z = (rng.standard_normal(spec.length) + 1j * rng.standard_normal(spec.length))
    return root @ (z / np.sqrt(2.0))


def squared_exp_covariance(length, corr_len, power=1.0):
    """Stationary squared-exponential covariance, unit diagonal by default.

    A strongly correlated (effectively low-rank) structure that stands in
    for learnable interference when an analytic prior is wanted.
    """
    if corr_len <= 0:
        raise ConfigError(f"corr_len must be positive, got {corr_len}")
    idx = np.arange(length)
    gaps = idx[:, None] - idx[None, :]
    return (power * np.exp(-0.5 * (gaps / corr_len) ** 2)).astype(np.complex128)


def scale_and_mix(clean, interference, snr_db, sir_db, rng):
    """Scale interference to an exact SIR, add CN noise at the target SNR.

    SIR is enforced deterministically per realization:
    ||clean||^2 / ||n_scaled||^2 = 10^(sir_db/10).  SNR holds in
    expectation through sigma_y2 = ||clean||^2 / (M * 10^(snr_db/10)).

    Returns (y, sigma_y2, n_scaled).
    """
    clean = np.asarray(clean, dtype=np.complex128)
    interference = np.asarray(interference, dtype=np.complex128)
    if clean.shape != interference.shape or clean.ndim != 1:
        raise ConfigError(
            f"clean {clean.shape} and interference {interference.shape} must be "
            "1-D and equal length"
        )
    p_clean = float(np.vdot(clean, clean).real)
    if p_clean == 0.0:
        raise NumericError("clean signal has zero power; SNR/SIR are undefined")
    p_int = float(np.vdot(interference, interference).real)
    if p_int == 0.0:
        raise NumericError("interference has zero power; cannot hit target SIR")
    scale = np.sqrt(p_clean / (p_int * 10.0 ** (sir_db / 10.0)))
    n_scaled = scale * interference
    m = clean.size
    sigma_y2 = p_clean / (m * 10.0 ** (snr_db / 10.0))
    eps = np.sqrt(sigma_y2 / 2.0) * (
        rng.standard_normal(m) + 1j * rng.standard_normal(m)
    )
    return clean + n_scaled + eps, sigma_y2, n_scaled
