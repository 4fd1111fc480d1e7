import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from weakqubit.correlation import estimate_correlator, estimate_xi_q
from weakqubit.model import DetectorParams, ParameterError
from weakqubit.oracles import (OracleConfig, OracleKind, generate_oracle, generate_q,
                               phase_walk, rectangular_q, telegraph)


@pytest.mark.parametrize("theta, want", [
    (np.pi / 2, 1.0), (3 * np.pi / 2, -1.0), (-np.pi / 2, -1.0),
    (0.0, 1.0), (np.pi, -1.0), (2 * np.pi, 1.0), (-np.pi, -1.0)])
def test_rectangular_examples(theta, want):
    assert rectangular_q(theta) == want


@given(theta=st.floats(-1e3, 1e3), n=st.integers(-20, 20))
def test_rectangular_periodic_and_antisymmetric(theta, n):
    a = rectangular_q(theta)
    assert abs(a) == 1.0
    # away from the jumps the wave is 2 pi periodic and flips under a half-period shift
    if abs(math.sin(theta)) > 1e-6:
        assert rectangular_q(theta + 2 * np.pi * n) == a
        assert rectangular_q(theta + np.pi) == -a


def test_square_wave_fundamental_fraction():
    # an exact period of 1000 samples; the discrete spectrum is checked with numpy's FFT
    m, periods = 1000, 20
    dt = 0.01
    omega = 2 * np.pi / (m * dt)
    cfg = OracleConfig(kind="rectangular", omega=omega, phase_diffusion=0.0, dt=dt,
                       n_steps=m * periods, seed=4)
    q = generate_q(cfg)
    power = np.abs(np.fft.fft(q)) ** 2
    fundamental = power[periods] + power[-periods]
    assert fundamental / power.sum() == pytest.approx(8 / np.pi ** 2, rel=1e-4)


def test_cosine_correlator_without_phase_noise():
    cfg = OracleConfig(kind="cosine", omega=1.0, phase_diffusion=0.0, dt=0.05,
                       n_steps=400_000, seed=2)
    det = DetectorParams(I0=0.0, deltaI=2.0, S0=10.0)
    q = generate_q(cfg)
    lags = np.arange(1, 200)
    qq = np.array([q[:-m] @ q[m:] / (q.size - m) for m in lags])
    np.testing.assert_allclose(qq, np.cos(lags * cfg.dt) / 2, atol=2e-4)
    est = estimate_correlator(generate_oracle(cfg, det), 10.0, decimate=2)
    z = (est.k_i - np.cos(est.tau) / 2) / est.k_i_stderr
    assert np.max(np.abs(z)) < 4.5


@pytest.mark.parametrize("kind", list(OracleKind))
def test_noise_does_not_correlate_with_q(kind):
    cfg = OracleConfig(kind=kind, dt=0.05, n_steps=400_000, seed=3)
    rec = generate_oracle(cfg, DetectorParams(I0=1.0, deltaI=2.0, S0=10.0))
    est = estimate_xi_q(rec, 10.0, decimate=2)
    z = est.k_xi_q / est.k_xi_q_stderr
    # 100 lags; a Gaussian maximum above 4.5 sigma is very unlikely
    assert np.max(np.abs(z)) < 4.5


@pytest.mark.parametrize("kind", list(OracleKind))
def test_record_fields(kind):
    det = DetectorParams(I0=1.5, deltaI=2.0, S0=10.0)
    cfg = OracleConfig(kind=kind, dt=0.05, n_steps=10_000, seed=9)
    rec = generate_oracle(cfg, det)
    assert np.all(np.abs(rec.q_truth) <= 1.0)
    np.testing.assert_allclose(rec.samples, 1.5 + rec.q_truth + rec.xi_truth, atol=1e-12)
    assert rec.xi_truth.var() == pytest.approx(10.0 / (2 * 0.05), rel=0.05)
    again = generate_oracle(cfg, det)
    assert again.samples.tobytes() == rec.samples.tobytes()


def test_phase_walk_increments():
    gen = np.random.default_rng(1)
    phi = phase_walk(200_001, 0.05, 0.02, gen)
    inc = np.diff(phi)
    assert inc.var() == pytest.approx(0.02 * 0.05, rel=0.02)
    assert 0 <= phi[0] < 2 * np.pi


def test_telegraph_correlation():
    gen = np.random.default_rng(5)
    rate, dt = 0.1, 0.05
    q = telegraph(2_000_000, dt, rate, gen)
    assert set(np.unique(q)) <= {-1.0, 1.0}
    for m in (20, 100, 200):
        c = q[:-m] @ q[m:] / (q.size - m)
        assert c == pytest.approx(math.exp(-2 * rate * m * dt), abs=0.03)


def test_config_validation():
    with pytest.raises(ParameterError):
        OracleConfig(kind="cosine", phase_diffusion=-1.0)
    with pytest.raises(ParameterError):
        OracleConfig(kind="telegraph", telegraph_rate=0.0)
    with pytest.raises(ValueError):
        OracleConfig(kind="sawtooth")
    with pytest.warns(UserWarning, match="slowly"):
        OracleConfig(kind="cosine", omega=1.0, phase_diffusion=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        OracleConfig(kind="cosine", omega=1.0, phase_diffusion=0.01)
