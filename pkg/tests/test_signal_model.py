"""Measurement operator and scenario generator checks.

The convolution oracle is a direct double loop written here,
independent of the library's Toeplitz construction.
"""

import numpy as np
import pytest

from dmsbl import (ChannelSpec, InterferenceSpec, MeasurementModel,
                   PilotMatrix, generate_channel, generate_interference,
                   generate_pilot, scale_and_mix, squared_exp_covariance)
from dmsbl.errors import ConfigError, NumericError
from dmsbl.signal_model import lfm_sweep


def valid_convolution_oracle(pilot, h):
    """Brute-force valid-part convolution, index arithmetic spelled out."""
    L = len(h)
    M = len(pilot) - L + 1
    out = np.zeros(M, dtype=complex)
    for m in range(M):
        for l in range(L):
            out[m] += pilot[L - 1 + m - l] * h[l]
    return out


class TestPilotMatrix:
    def test_entries_match_index_formula(self):
        rng = np.random.default_rng(0)
        pilot = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        L = 5
        A = PilotMatrix(pilot, L)
        assert A.shape == (8, 5)
        for m in range(A.M):
            for l in range(A.L):
                assert A.matrix[m, l] == pilot[L - 1 + m - l]

    def test_first_column_and_row(self):
        pilot = np.arange(1.0, 11.0).astype(complex)  # 1..10
        A = PilotMatrix(pilot, 4)
        np.testing.assert_array_equal(A.matrix[:, 0], pilot[3:])
        np.testing.assert_array_equal(A.matrix[0, :], pilot[3::-1])

    def test_apply_matches_convolution_oracle(self):
        rng = np.random.default_rng(1)
        pilot = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        h = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        A = PilotMatrix(pilot, 7)
        want = valid_convolution_oracle(pilot, h)
        np.testing.assert_allclose(A.apply(h), want, rtol=1e-12)
        np.testing.assert_allclose(A.apply(h),
                                   np.convolve(pilot, h, mode="valid"),
                                   rtol=1e-12)

    def test_apply_batched(self):
        rng = np.random.default_rng(2)
        pilot = generate_pilot(16, rng)
        A = PilotMatrix(pilot, 6)
        H = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        got = A.apply(H)
        assert got.shape == (4, A.M)
        for k in range(4):
            np.testing.assert_allclose(got[k], A.apply(H[k]), rtol=1e-12)

    def test_adjoint_identity(self):
        rng = np.random.default_rng(3)
        pilot = rng.standard_normal(15) + 1j * rng.standard_normal(15)
        A = PilotMatrix(pilot, 6)
        h = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        v = rng.standard_normal(A.M) + 1j * rng.standard_normal(A.M)
        lhs = np.vdot(v, A.apply(h))
        rhs = np.vdot(A.apply_adjoint(v), h)
        assert abs(lhs - rhs) < 1e-10

    def test_gram_hermitian_psd(self):
        rng = np.random.default_rng(4)
        A = PilotMatrix(generate_pilot(24, rng), 8)
        G = A.gram()
        np.testing.assert_allclose(G, G.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(G).min() > -1e-10

    def test_bad_channel_len(self):
        with pytest.raises(ConfigError):
            PilotMatrix(np.ones(4, dtype=complex), 5)
        with pytest.raises(ConfigError):
            PilotMatrix(np.ones(4, dtype=complex), 0)


class TestPilot:
    def test_bpsk_alphabet(self):
        pilot = generate_pilot(500, np.random.default_rng(5))
        assert pilot.dtype == np.complex128
        assert set(np.unique(pilot.real)) == {-1.0, 1.0}
        assert np.all(pilot.imag == 0)
        # both symbols actually occur
        assert 0 < np.sum(pilot.real > 0) < 500

    def test_deterministic(self):
        a = generate_pilot(64, np.random.default_rng(9))
        b = generate_pilot(64, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)


class TestChannel:
    def test_single_path_is_single_tap(self):
        spec = ChannelSpec(length=50, n_paths=1)
        h = generate_channel(spec, np.random.default_rng(6))
        assert np.count_nonzero(h) == 1
        assert h[0] != 0  # first path arrives at delay zero
        assert abs(np.linalg.norm(h) - 1.0) < 1e-12

    def test_unit_norm_and_support(self):
        rng = np.random.default_rng(7)
        spec = ChannelSpec(length=200, n_paths=10)
        for _ in range(20):
            h = generate_channel(spec, rng)
            assert abs(np.linalg.norm(h) - 1.0) < 1e-12
            assert 1 <= np.count_nonzero(h) <= 10

    def test_mean_inter_arrival_spacing(self):
        # 3 ms at 4 kHz puts the mean gap at 12 symbols; the span from
        # first to last tap sums n_paths-1 gaps, immune to collisions
        rng = np.random.default_rng(8)
        spec = ChannelSpec(length=4000, n_paths=10, normalize=False)
        spans = []
        for _ in range(400):
            idx = np.flatnonzero(generate_channel(spec, rng))
            spans.append(idx[-1] - idx[0])
        assert np.mean(spans) / 9.0 == pytest.approx(12.0, abs=0.7)

    def test_power_decay_20db_over_30ms(self):
        # Monte-Carlo regression of per-tap power against delay; 30 ms at
        # 4 kHz is 120 taps, where mean power must sit 20 dB under tap 0
        rng = np.random.default_rng(9)
        spec = ChannelSpec(length=200, n_paths=10, normalize=False)
        power = np.zeros(200)
        count = np.zeros(200)
        for _ in range(4000):
            h = generate_channel(spec, rng)
            idx = np.flatnonzero(h)
            power[idx] += np.abs(h[idx]) ** 2
            count[idx] += 1
        sel = count >= 50
        mean_db = 10 * np.log10(power[sel] / count[sel])
        delays = np.flatnonzero(sel)
        slope = np.polyfit(delays, mean_db, 1)[0]
        assert abs(slope - (-20.0 / 120.0)) < 0.015
        far = (delays >= 110) & (delays <= 130)
        drop = (np.mean(mean_db[far]) - mean_db[delays == 0][0])
        assert abs(drop - (-20.0)) < 1.5

    def test_truncation_warns(self):
        spec = ChannelSpec(length=4, n_paths=40)
        with pytest.warns(RuntimeWarning, match="truncating"):
            h = generate_channel(spec, np.random.default_rng(10))
        assert h.shape == (4,)

    def test_deterministic(self):
        spec = ChannelSpec()
        a = generate_channel(spec, np.random.default_rng(11))
        b = generate_channel(spec, np.random.default_rng(11))
        np.testing.assert_array_equal(a, b)


class TestInterference:
    def test_lfm_unit_modulus(self):
        spec = InterferenceSpec(kind="lfm", length=200)
        n = generate_interference(spec, np.random.default_rng(12))
        assert n.shape == (200,)
        np.testing.assert_allclose(np.abs(n), 1.0, atol=1e-12)

    def test_lfm_constant_chirp_rate(self):
        # second difference of the unwrapped phase of the full sweep is
        # 2*pi*(B/T)/fs^2 everywhere
        spec = InterferenceSpec(kind="lfm", length=100)
        sweep = lfm_sweep(spec, phi0=0.3)
        phase = np.unwrap(np.angle(sweep))
        dd = np.diff(phase, n=2)
        want = 2 * np.pi * (spec.lfm_bandwidth_hz / spec.lfm_duration_s) \
            / spec.symbol_rate_hz**2
        np.testing.assert_allclose(dd, want, atol=1e-9)

    def test_lfm_window_comes_from_sweep(self):
        spec = InterferenceSpec(kind="lfm", length=64)
        rng = np.random.default_rng(13)
        n = generate_interference(spec, rng)
        # same seed: reproduce the draw by hand
        rng2 = np.random.default_rng(13)
        phi0 = rng2.uniform(0.0, 2.0 * np.pi)
        sweep = lfm_sweep(spec, phi0)
        start = rng2.integers(0, sweep.size - 64 + 1)
        np.testing.assert_array_equal(n, sweep[start:start + 64])

    def test_lfm_too_short_sweep(self):
        with pytest.raises(ConfigError, match="shorter"):
            InterferenceSpec(kind="lfm", length=10_000)

    def test_gaussian_process_covariance(self):
        m = 12
        cov = squared_exp_covariance(m, 2.5)
        spec = InterferenceSpec(kind="gaussian_process", length=m,
                                covariance=cov)
        rng = np.random.default_rng(14)
        draws = np.stack([generate_interference(spec, rng)
                          for _ in range(20000)])
        emp = draws.T @ draws.conj() / draws.shape[0]
        assert abs(draws.mean()) < 0.02
        np.testing.assert_allclose(emp, cov.conj(), atol=0.05)

    def test_gaussian_process_needs_hermitian(self):
        bad = np.eye(4, dtype=complex)
        bad[0, 1] = 1.0
        with pytest.raises(ConfigError, match="Hermitian"):
            InterferenceSpec(kind="gaussian_process", length=4, covariance=bad)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            InterferenceSpec(kind="chirpzz", length=8)


class TestScaleAndMix:
    def test_exact_sir(self):
        rng = np.random.default_rng(15)
        clean = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        n = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        for sir in (-5.0, 0.0, 5.0, 10.0):
            _, _, n_s = scale_and_mix(clean, n, 30.0, sir, rng)
            got = 10 * np.log10(np.vdot(clean, clean).real
                                / np.vdot(n_s, n_s).real)
            assert abs(got - sir) < 1e-10

    def test_snr_in_expectation(self):
        rng = np.random.default_rng(16)
        clean = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        n = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        snr = 10.0
        p_eps = []
        for _ in range(4000):
            y, sigma_y2, n_s = scale_and_mix(clean, n, snr, 0.0, rng)
            eps = y - clean - n_s
            p_eps.append(np.vdot(eps, eps).real / 32)
        want = np.vdot(clean, clean).real / (32 * 10.0 ** (snr / 10.0))
        assert sigma_y2 == pytest.approx(want, rel=1e-12)
        assert np.mean(p_eps) == pytest.approx(sigma_y2, rel=0.03)

    def test_zero_clean_rejected(self):
        rng = np.random.default_rng(17)
        with pytest.raises(NumericError, match="zero power"):
            scale_and_mix(np.zeros(8, complex), np.ones(8, complex),
                          10.0, 0.0, rng)

    def test_zero_interference_rejected(self):
        rng = np.random.default_rng(18)
        with pytest.raises(NumericError, match="SIR"):
            scale_and_mix(np.ones(8, complex), np.zeros(8, complex),
                          10.0, 0.0, rng)


def test_measurement_model_dimension_check():
    A = PilotMatrix(np.ones(10, dtype=complex), 4)
    with pytest.raises(ConfigError, match="shape"):
        MeasurementModel(A, np.zeros(5, dtype=complex), 0.1)
    with pytest.raises(ConfigError, match="sigma_y2"):
        MeasurementModel(A, np.zeros(7, dtype=complex), -1.0)


def test_squared_exp_covariance_psd():
    cov = squared_exp_covariance(50, 8.0)
    np.testing.assert_allclose(cov, cov.conj().T)
    assert np.linalg.eigvalsh(cov).min() > -1e-10
    np.testing.assert_allclose(np.diag(cov).real, 1.0)
