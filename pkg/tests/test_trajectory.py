import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weakqubit import rng as rngmod
from weakqubit.model import DensityMatrix, ParameterError, PhysicalConfig
from weakqubit.trajectory import (AccuracyWarning, Scheme, SimConfig, stratonovich_drift, final_states,
                                  sample_noise, simulate, step)


def bayes_rhs_general(rho, I, levels, S0, eta, H):
    """Direct transcription of the general-index Bayesian equation for a
    k-level system; used as an independent check of the qubit specialisation."""
    k = len(levels)
    out = np.zeros((k, k), dtype=complex)
    for i in range(k):
        for j in range(k):
            s = 0.0
            for m in range(k):
                s += rho[m, m].real * ((I - (levels[m] + levels[i]) / 2) * (levels[i] - levels[m])
                                       + (I - (levels[m] + levels[j]) / 2) * (levels[j] - levels[m]))
            gamma_ij = (1 / eta - 1) * (levels[i] - levels[j]) ** 2 / (4 * S0)
            out[i, j] = rho[i, j] * s / S0 - gamma_ij * rho[i, j]
    return out - 1j * (H @ rho - rho @ H)


def as_triplet(m):
    return np.array([m[0, 0].real, m[0, 1].real, m[0, 1].imag])


@given(r=st.floats(0.01, 0.99), th=st.floats(0, 2 * np.pi), s=st.floats(0, 1),
       I=st.floats(-50, 50), eta=st.floats(0.2, 1.0), omega=st.floats(0.1, 3.0))
def test_drift_matches_general_form(r, th, s, I, eta, omega):
    cfg = PhysicalConfig.from_values(omega=omega, deltaI=2.0, S0=10.0, eta=eta, I0=0.5)
    c = s * math.sqrt(r * (1 - r))
    rho = DensityMatrix(r, c * math.cos(th), c * math.sin(th))
    H = 0.5 * omega * np.array([[0, 1], [1, 0]], dtype=complex)
    levels = [0.5 + 1.0, 0.5 - 1.0]
    want = bayes_rhs_general(rho.matrix(), I, levels, 10.0, eta, H)
    got = stratonovich_drift(rho, I, cfg)
    np.testing.assert_allclose(got, as_triplet(want), atol=1e-12)
    # d(rho11 + rho22)/dt vanishes in the general form too
    assert abs(np.trace(want)) < 1e-12


def test_pointer_state_is_fixed_point():
    cfg = PhysicalConfig.from_values(omega=1e-300, deltaI=2.0, S0=10.0)
    for I in (-3.0, 0.0, 7.0):
        # only the (negligible) Rabi term survives, whatever the record says
        np.testing.assert_allclose(stratonovich_drift(DensityMatrix(1.0), I, cfg), 0.0, atol=1e-290)
        np.testing.assert_allclose(stratonovich_drift(DensityMatrix(0.0), I, cfg), 0.0, atol=1e-290)


def test_ito_form_is_stratonovich_plus_correction():
    """Ito drift = Stratonovich drift + (S0/4) (b . grad) b, where b = df/dI
    is the noise coefficient; evaluated with finite differences."""
    cfg = PhysicalConfig.from_values(omega=0.7, deltaI=2.0, S0=10.0, eta=0.6)
    d = cfg.detector
    x0 = np.array([0.3, 0.2, -0.25])

    def f(x, I):
        return stratonovich_drift(DensityMatrix(*x), I, cfg)

    def b(x):
        return f(x, 1.0) - f(x, 0.0)  # f is affine in I

    h = 1e-6
    jac = np.column_stack([(b(x0 + h * e) - b(x0 - h * e)) / (2 * h) for e in np.eye(3)])
    q = 2 * x0[0] - 1
    strat = f(x0, d.I0 + d.amplitude * q)
    ito = strat + 0.5 * (d.S0 / 2) * jac @ b(x0)
    k = d.deltaI / d.S0
    G, om = cfg.Gamma, cfg.omega
    expected = np.array([-om * x0[2], -G * x0[1], -G * x0[2] + 0.5 * om * q])
    np.testing.assert_allclose(ito, expected, atol=1e-8)
    assert k > 0


def test_noise_statistics():
    gen = rngmod.stream(3, rngmod.DETECTOR_NOISE)
    x = sample_noise(10.0, 0.01, gen, size=10 ** 6)
    assert x.var() == pytest.approx(500.0, rel=0.01)
    assert abs(x.mean()) < 3 * math.sqrt(500.0 / x.size)


def test_noise_determinism():
    a = sample_noise(10.0, 0.01, rngmod.stream(9, 0), size=1000)
    b = sample_noise(10.0, 0.01, rngmod.stream(9, 0), size=1000)
    assert a.tobytes() == b.tobytes()
    c = sample_noise(10.0, 0.01, rngmod.stream(9, 0, index=1), size=1000)
    assert not np.array_equal(a, c)


def test_single_step_keeps_pure_state_pure():
    """With an ideal detector a pure state is projected back onto the
    pure-state surface after every update."""
    cfg = PhysicalConfig.from_values(omega=1.0, deltaI=2.0, S0=10.0)
    rho0 = DensityMatrix(0.8, 0.0, math.sqrt(0.16))
    for s in range(50):
        r, _, _ = step(rho0, cfg, SimConfig(dt=0.004, n_steps=1), rngmod.stream(s, 0))
        assert abs(r.purity - 1) < 1e-12


def test_step_satisfies_signal_model():
    cfg = PhysicalConfig.from_values(omega=1.0, deltaI=2.0, S0=10.0, I0=3.0)
    rho = DensityMatrix(0.9, 0.1, 0.2)
    r, xi, I = step(rho, cfg, SimConfig(dt=0.005, n_steps=1), rngmod.stream(1, 0))
    assert I == pytest.approx(3.0 + 1.0 * q_of_rho(rho) + xi, abs=1e-12)


def q_of_rho(rho):
    return 2 * rho.rho11 - 1


def test_record_satisfies_signal_model_exactly(weak_cfg):
    rec = simulate(weak_cfg, SimConfig(dt=0.005, n_steps=5000, seed=2))
    assert len(rec) == 5001
    np.testing.assert_array_equal(rec.i, 0.0 + 1.0 * rec.q + rec.xi)


def test_zero_steps_gives_initial_sample(weak_cfg):
    rec = simulate(weak_cfg, SimConfig(dt=0.005, n_steps=0, initial_state=DensityMatrix(0.75)))
    assert len(rec) == 1
    assert rec.rho11[0] == 0.75 and rec.q[0] == 0.5


def test_determinism(weak_cfg):
    sim = SimConfig(dt=0.005, n_steps=20000, seed=5)
    a, b = simulate(weak_cfg, sim), simulate(weak_cfg, sim)
    assert a.data.tobytes() == b.data.tobytes()


def test_decoupled_detector_gives_rabi_rotation():
    cfg = PhysicalConfig.from_values(omega=1.0, deltaI=1e-9, S0=10.0)
    errs = []
    for dt in (0.01, 0.005):
        rec = simulate(cfg, SimConfig(dt=dt, n_steps=int(round(20 / dt)), seed=1))
        errs.append(np.max(np.abs(rec.q - np.cos(rec.t))))
    assert errs[1] < 1e-4
    # global error of the predictor-corrector is second order
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_block_averaged_rows(weak_cfg):
    full = simulate(weak_cfg, SimConfig(dt=0.005, n_steps=400, seed=4))
    binned = simulate(weak_cfg, SimConfig(dt=0.005, n_steps=400, seed=4, record_every=20))
    assert len(binned) == 20 and binned.dt == pytest.approx(0.1)
    np.testing.assert_allclose(binned.data, full.data[:400].reshape(20, 20, 6).mean(axis=1),
                               rtol=1e-12, atol=1e-12)


def test_collapse_follows_born_rule():
    cfg = PhysicalConfig.from_values(omega=1e-12, deltaI=2.0, S0=10.0)
    sim = SimConfig(dt=0.01, n_steps=20000, seed=21, initial_state=DensityMatrix(0.5))
    fin = final_states(cfg, sim, 10_000)
    r11 = fin[:, 0]
    assert np.all((r11 < 1e-6) | (r11 > 1 - 1e-6))
    frac = np.mean(r11 > 0.5)
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / r11.size)


def test_ideal_detector_keeps_purity(weak_cfg):
    rho0 = DensityMatrix(1.0)
    rec = simulate(weak_cfg, SimConfig(dt=0.005, n_steps=100_000, seed=3, initial_state=rho0))
    purity = (rec.rho11 ** 2 + (1 - rec.rho11) ** 2
              + 2 * (rec.re_rho12 ** 2 + rec.im_rho12 ** 2))
    # drift: the run average and the end point
    assert abs(np.mean(purity) - 1) < 1e-3
    assert abs(purity[-1] - 1) < 1e-3


def test_positivity_after_renormalisation():
    cfg = PhysicalConfig.from_values(omega=1.0, deltaI=2.0, S0=10.0, eta=0.7)
    for scheme in Scheme:
        rec = simulate(cfg, SimConfig(dt=0.005, n_steps=100_000, seed=8, scheme=scheme,
                                      renormalize_every=1))
        det = rec.rho11 * (1 - rec.rho11) - rec.re_rho12 ** 2 - rec.im_rho12 ** 2
        assert det.min() > -1e-6
        assert rec.rho11.min() >= 0 and rec.rho11.max() <= 1


def test_accuracy_guard(weak_cfg):
    with pytest.warns(AccuracyWarning):
        simulate(weak_cfg, SimConfig(dt=0.1, n_steps=10))
    with pytest.raises(ParameterError):
        simulate(weak_cfg, SimConfig(dt=0.1, n_steps=10, strict_accuracy=True))


def test_sim_config_validation():
    with pytest.raises(ParameterError):
        SimConfig(dt=0.01, n_steps=101, record_every=10)
    with pytest.raises(ValueError):
        SimConfig(dt=0.01, n_steps=10, scheme="rk4")


def test_weak_coupling_moments(short_quantum):
    m = short_quantum.moments(discard=100)
    assert m["q_squared_mean"] == pytest.approx(0.5, abs=0.03)
    assert abs(m["im_rho_q_mean"]) < 3 * 0.1
