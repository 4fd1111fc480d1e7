import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from weakqubit.correlation import MissingTruthError, RecordTooShortError, analytic_kI
from weakqubit.model import DetectorParams, PhysicalConfig, SignalRecord
from weakqubit.oracles import OracleConfig, generate_oracle
from weakqubit.spectral import (GENERAL_BOUND, RegimeWarning, analytic_spectrum,
                                estimate_spectrum, filtered_area_of,
                                filtered_peak_area_frequency, filtered_peak_area_time,
                                peak_bound_verdict, verify_lemma)
from weakqubit.trajectory import SimConfig, simulate

# Filtered area of the exact quantum peak at Omega=1, Gamma=0.05, Delta=0.3,
# in units of (deltaI/2)^2; frozen from adaptive quadrature of the closed form.
AREA_G005_D03 = 0.94149


def exact_filtered_area(cfg, center, delta):
    a = cfg.detector.amplitude ** 2
    f = lambda w: (analytic_spectrum(w, cfg) - cfg.detector.S0) * math.exp(
        -(w - center) ** 2 / (2 * delta ** 2))
    # the window kills everything beyond 12 delta, including the mirror peak
    lo, hi = center - 12 * delta, center + 12 * delta
    val = integrate.quad(f, lo, hi, points=[cfg.omega], limit=400, epsabs=1e-13)[0]
    return val / (2 * math.pi) / a


@pytest.fixture(scope="module")
def detector():
    return DetectorParams(I0=0.0, deltaI=2.0, S0=10.0)


@pytest.fixture(scope="module")
def full_quantum(weak_cfg):
    return simulate(weak_cfg, SimConfig(dt=0.005, n_steps=40_000_000, seed=17,
                                        record_every=20)).to_signal_record(discard=100.0)


def test_pure_noise_pedestal(rng):
    rec = SignalRecord(dt=0.1, i0=2.0, samples=2.0 + rng.normal(0, math.sqrt(10.0 / 0.2),
                                                                  size=1_000_000))
    spec = estimate_spectrum(rec, segment_length=2 ** 12)
    assert spec.n_segments >= 100
    assert spec.s0_estimate == pytest.approx(10.0, rel=0.02)
    assert np.mean(spec.s_i) == pytest.approx(10.0, rel=0.02)
    assert spec.resolution == pytest.approx(2 * np.pi / (2 ** 12 * 0.1))
    # flat spectrum carries no filtered area
    flat = filtered_area_of(spec.omega, np.zeros_like(spec.omega), 1.0, 0.3)
    assert flat == 0.0


def test_spectrum_errors(rng):
    rec = SignalRecord(dt=0.1, i0=0.0, samples=rng.normal(size=1000))
    with pytest.raises(RecordTooShortError):
        estimate_spectrum(rec, segment_length=512)
    with pytest.raises(MissingTruthError):
        filtered_peak_area_time(rec, 2.0, 1.0, 0.3)


def test_analytic_spectrum_examples(weak_cfg):
    assert float(analytic_spectrum(1.0, weak_cfg)) == pytest.approx(10.0 + 4.0 / 0.1, rel=1e-12)
    assert float(analytic_spectrum(1e6, weak_cfg)) == pytest.approx(10.0, abs=1e-12)
    peak = lambda w: float(analytic_spectrum(w, weak_cfg)) - 10.0
    # area under the peak at +Omega; the spectrum is even, so the whole
    # axis holds twice this (one peak at each of +-Omega)
    half = sum(integrate.quad(peak, a, b, limit=400)[0]
               for a, b in ((0, 0.9), (0.9, 1.1), (1.1, 10), (10, np.inf)))
    assert half / (2 * math.pi) == pytest.approx(1.0, rel=0.005)


def test_spectrum_is_transform_of_correlator(weak_cfg):
    # S(w) - S0 = 2 int K(tau) e^{i w tau} dtau = 4 int_0^inf K(tau) cos(w tau) dtau
    for w in np.linspace(0.0, 3.0, 13):
        # e^{-Gamma t / 2} is below 1e-8 past t = 400
        ft = integrate.quad(lambda t: float(analytic_kI(t, weak_cfg)) * math.cos(w * t),
                            0, 400, limit=5000, epsabs=1e-11)[0]
        want = float(analytic_spectrum(w, weak_cfg)) - 10.0
        assert 4 * ft == pytest.approx(want, rel=0.005, abs=1e-9)


def test_filtered_area_of_analytic_peak():
    cfg = PhysicalConfig.from_values(omega=1.0, deltaI=2.0, S0=20.0)  # Gamma = 0.05
    w = np.linspace(-4, 4, 400_001)
    area = filtered_area_of(w, analytic_spectrum(w, cfg) - 20.0, 1.0, 0.3)
    assert area == pytest.approx(exact_filtered_area(cfg, 1.0, 0.3), rel=1e-5)
    assert area == pytest.approx(AREA_G005_D03, abs=1e-5)


def test_narrow_peak_area_independent_of_window():
    cfg = PhysicalConfig.from_values(omega=1.0, deltaI=2.0, S0=1.0 / 0.002)  # Gamma = 0.002
    areas = [exact_filtered_area(cfg, 1.0, d) for d in (0.2, 0.25, 0.3, 0.35, 0.4)]
    assert max(areas) / min(areas) - 1 < 0.02
    assert np.all(np.diff(areas) > 0)  # wider window lets in more of the tails


def test_time_side_cosine_and_zero():
    dt, n = 0.05, 400_000
    t = np.arange(n) * dt
    cos = SignalRecord(dt=dt, i0=0.0, samples=np.cos(t), q_truth=np.cos(t))
    a = filtered_peak_area_time(cos, 2.0, 1.0, 0.3).area
    assert a == pytest.approx(0.5, rel=0.02)
    zero = SignalRecord(dt=dt, i0=0.0, samples=np.zeros(n), q_truth=np.zeros(n))
    assert filtered_peak_area_time(zero, 2.0, 1.0, 0.3).area == 0.0


def test_time_side_square_wave():
    cfg = OracleConfig(kind="rectangular", omega=1.0, phase_diffusion=0.0, dt=0.01,
                       n_steps=2_000_000, seed=3)
    rec = generate_oracle(cfg, DetectorParams(0.0, 2.0, 10.0))
    a = filtered_peak_area_time(rec, 2.0, 1.0, 0.3).area
    assert a == pytest.approx(GENERAL_BOUND, rel=0.02)


@pytest.mark.parametrize("kind", ["cosine", "rectangular"])
def test_lemma_on_oracles(kind, detector):
    cfg = OracleConfig(kind=kind, dt=0.05, n_steps=2_000_000, seed=6)
    rec = generate_oracle(cfg, detector)
    check = verify_lemma(rec, 2.0, 1.0, 0.3)
    assert check.in_regime and check.discrepancy <= 0.02


def test_lemma_out_of_regime_is_flagged(detector):
    rec = generate_oracle(OracleConfig(kind="cosine", dt=0.05, n_steps=400_000, seed=6),
                          detector)
    with pytest.warns(RegimeWarning):
        check = verify_lemma(rec, 2.0, 1.0, 0.8, segment_length=2 ** 12)
    assert not check.in_regime and check.notes
    assert math.isfinite(check.discrepancy)


@pytest.mark.parametrize("area, general, single", [
    (1.0, "exceeds", "exceeds"),
    (0.5, "below", "below"),
    (0.81, "below", "exceeds"),
])
def test_verdict_examples(area, general, single):
    v = peak_bound_verdict(area, 2.0, single_peak_claim=True)
    assert v.generalBound == pytest.approx(0.81057, abs=1e-5)
    assert v.singlePeakBound == pytest.approx(2 / 3)
    assert v.quantumReference == 1.0
    assert (v.exceedsGeneral, v.exceedsSinglePeak) == (general, single)


def test_verdict_ties_are_inconclusive():
    v = peak_bound_verdict(0.82, 2.0, uncertainty=0.01)
    assert v.exceedsGeneral == "inconclusive" and v.exceedsSinglePeak is None


@given(area=st.floats(0, 2), err=st.floats(0, 0.5))
def test_verdict_consistency(area, err):
    v = peak_bound_verdict(area, 2.0, single_peak_claim=True, uncertainty=err)
    order = ["below", "inconclusive", "exceeds"]
    # passing the larger bound implies passing the smaller one
    assert order.index(v.exceedsSinglePeak) >= order.index(v.exceedsGeneral)


@pytest.mark.parametrize("kind", ["rectangular", "cosine", "telegraph"])
def test_classical_area_never_above_general_bound(kind, detector):
    for k, d_phi in enumerate((0.005, 0.01, 0.02)):
        cfg = OracleConfig(kind=kind, phase_diffusion=d_phi, dt=0.05, n_steps=2_000_000,
                           seed=40 + k)
        spec = estimate_spectrum(generate_oracle(cfg, detector), center=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            fa = filtered_peak_area_frequency(spec, 1.0, 0.3)
        assert fa.area <= GENERAL_BOUND * (1 + 3 * fa.stderr / GENERAL_BOUND)


def test_quantum_peak_height(weak_cfg, full_quantum):
    spec = estimate_spectrum(full_quantum, center=1.0)
    near = np.abs(spec.omega - 1.0) <= 0.01
    height = np.mean(spec.s_i[near]) - spec.s0_estimate
    assert height == pytest.approx(4.0 / weak_cfg.Gamma, rel=0.10)
    assert spec.s0_estimate == pytest.approx(10.0, rel=0.02)
