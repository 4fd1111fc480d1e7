"""Power spectra, Gaussian-window peak areas and the classical area bounds.

Spectra follow the two-sided convention ``S_I(w) = 2 int K_I(tau) e^{i w tau} dtau``
so white noise with ``<xi xi> = (S0/2) delta`` sits on a flat pedestal ``S0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, signal

from .correlation import MissingTruthError, RecordTooShortError, block_average
from .model import PhysicalConfig, SignalRecord

GENERAL_BOUND = 8.0 / math.pi ** 2
SINGLE_PEAK_BOUND = 2.0 / 3.0
MAX_WINDOW_RATIO = 0.4
MAX_WIDTH_RATIO = 0.2
KERNEL_HALF_WIDTH = 5.0
# Variance inflation of a Hann-window Welch average at 50% overlap.
_HANN_OVERLAP_INFLATION = math.sqrt(1.0 + 2.0 * (1.0 / 6.0) ** 2)


class RegimeWarning(UserWarning):
    pass


@dataclass
class SpectrumEstimate:
    """Welch estimate on a symmetric angular-frequency grid.

    ``segments`` holds the individual segment periodograms so that any
    linear functional of the spectrum gets an honest error bar.
    """

    omega: np.ndarray
    s_i: np.ndarray
    s_i_stderr: np.ndarray
    s0_estimate: float
    segments: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def n_segments(self) -> int:
        return self.segments.shape[0]

    @property
    def resolution(self) -> float:
        return float(self.omega[1] - self.omega[0])

    def table(self) -> np.ndarray:
        return np.column_stack([self.omega, self.s_i, self.s_i_stderr])


def pedestal(omega, s_i, center=None, width=None, exclusion=10.0):
    """Median level away from the peaks at ``+-center`` (``exclusion`` widths
    on each side). Without a center the median of all bins is returned."""
    if center is None or width is None:
        return float(np.median(s_i))
    far = (np.abs(omega - center) > exclusion * width) & (np.abs(omega + center) > exclusion * width)
    if far.sum() < 16:
        return float(np.median(s_i))
    return float(np.median(s_i[far]))


def _periodograms(x, dt, segment_length, overlap):
    nov = int(round(segment_length * overlap))
    f, _, sxx = signal.spectrogram(x, fs=1.0 / dt, window="hann", nperseg=segment_length,
                                   noverlap=nov, detrend=False, return_onesided=False,
                                   scaling="density", mode="psd")
    order = np.argsort(f)
    # Welch density integrates to the variance over f in Hz; the factor 2
    # converts to the S_I convention.
    return 2.0 * np.pi * f[order], 2.0 * sxx[order].T


def estimate_spectrum(rec: SignalRecord, segment_length: int = 2 ** 14, overlap: float = 0.5,
                      *, center: Optional[float] = None, width: Optional[float] = None,
                      use_truth: bool = False, amplitude: float = 1.0,
                      decimate: int = 1, discard: float = 0.0) -> SpectrumEstimate:
    """Averaged Hann-window periodogram of ``I - I0``.

    With ``use_truth`` the noiseless pure signal ``amplitude * Q`` is used
    instead. The pedestal is estimated from the data, excluding ``10 width``
    around ``+-center``; when these are not given they are located from the
    spectrum itself (highest positive-frequency bin, width from the area to
    height ratio).
    """
    skip = int(round(discard / rec.dt))
    if use_truth:
        if rec.q_truth is None:
            raise MissingTruthError("record lacks q_truth")
        x = amplitude * rec.q_truth[skip:]
    else:
        x = rec.centered()[skip:]
    x = block_average(x, decimate)
    dt = rec.dt * decimate
    if x.size < 4 * segment_length:
        raise RecordTooShortError(
            f"{x.size} samples cannot hold 4 segments of {segment_length}")
    omega, segs = _periodograms(x, dt, segment_length, overlap)
    s = segs.mean(axis=0)
    err = segs.std(axis=0, ddof=1) / math.sqrt(segs.shape[0]) * _HANN_OVERLAP_INFLATION
    if center is None:
        pos = omega > 0
        smooth = np.convolve(s, np.ones(9) / 9, mode="same")
        center = float(omega[pos][np.argmax(smooth[pos])])
    if width is None:
        s0 = pedestal(omega, s)
        width = _width_from_moments(omega, s - s0, center)
    s0 = pedestal(omega, s, center, width)
    return SpectrumEstimate(omega=omega, s_i=s, s_i_stderr=err, s0_estimate=s0, segments=segs,
                            meta={"segment_length": segment_length, "overlap": overlap,
                                  "dt": dt, "pedestal_center": center,
                                  "pedestal_width": width, "use_truth": use_truth})


def _width_from_moments(omega, excess, center):
    """Full width of a Lorentzian with the same area and height as the peak."""
    near = np.abs(omega - center) < 0.5 * center
    area = integrate.trapezoid(excess[near], omega[near]) / (2.0 * np.pi)
    dw = omega[1] - omega[0]
    top = np.abs(omega - center) <= max(2 * dw, 1e-3 * center)
    height = float(np.mean(excess[top]))
    if height <= 0 or area <= 0:
        return float(dw)
    return max(float(4.0 * area / height), float(dw))


def estimate_peak_width(spec: SpectrumEstimate, center: float) -> float:
    return _width_from_moments(spec.omega, spec.s_i - spec.s0_estimate, center)


def analytic_spectrum(omega, cfg: PhysicalConfig):
    """Quantum spectrum: pedestal plus the Lorentzian-like peak at ``+-omega``."""
    w = np.asarray(omega, dtype=float)
    W, G = cfg.omega, cfg.Gamma
    peak = 4.0 * W ** 2 * G / ((w * w - W * W) ** 2 + G * G * w * w)
    return cfg.detector.S0 + cfg.detector.amplitude ** 2 * peak


def gaussian_window(omega, delta):
    return np.exp(-np.asarray(omega) ** 2 / (2.0 * delta ** 2))


@dataclass
class FilteredArea:
    area: float
    stderr: float
    center: float
    delta: float
    peak_width: Optional[float] = None
    reliable: bool = True
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _regime_notes(center, delta, width=None):
    notes = []
    if delta / center > MAX_WINDOW_RATIO:
        notes.append(f"window ratio delta/center = {delta / center:.3g} exceeds {MAX_WINDOW_RATIO}")
    if width is not None and width / delta > MAX_WIDTH_RATIO:
        notes.append(f"peak width/window = {width / delta:.3g} exceeds {MAX_WIDTH_RATIO}")
    for n in notes:
        warnings.warn(n, RegimeWarning, stacklevel=3)
    return notes


def filtered_area_of(omega, excess, center, delta):
    """``(1/2pi) int excess(center + w) exp(-w^2 / 2 delta^2) dw`` by the
    trapezoidal rule on the given grid."""
    win = gaussian_window(np.asarray(omega) - center, delta)
    return float(integrate.trapezoid(np.asarray(excess) * win, omega) / (2.0 * np.pi))


def filtered_peak_area_frequency(spec: SpectrumEstimate, center: float, delta: float,
                                 s0: Optional[float] = None) -> FilteredArea:
    """Gaussian-filtered, pedestal-subtracted area of the estimated spectrum."""
    s0 = spec.s0_estimate if s0 is None else s0
    width = estimate_peak_width(spec, center)
    notes = _regime_notes(center, delta, width)
    area = filtered_area_of(spec.omega, spec.s_i - s0, center, delta)
    per_seg = np.array([filtered_area_of(spec.omega, seg - s0, center, delta)
                        for seg in spec.segments])
    err = per_seg.std(ddof=1) / math.sqrt(per_seg.size) * _HANN_OVERLAP_INFLATION
    return FilteredArea(area=area, stderr=float(err), center=center, delta=delta,
                        peak_width=width, reliable=not notes, notes=notes)


def time_window_kernel(dt, center, delta):
    """Samples of ``exp(i center tau) g(tau) dt`` with the Gaussian time
    window ``g(tau) = sqrt(2) delta exp(-tau^2 delta^2)``, cut at ``|tau| <= 5/delta``."""
    k = int(math.ceil(KERNEL_HALF_WIDTH / (delta * dt)))
    tau = np.arange(-k, k + 1) * dt
    g = math.sqrt(2.0) * delta * np.exp(-(tau * delta) ** 2)
    return np.exp(1j * center * tau) * g * dt


def filtered_peak_area_time(rec: SignalRecord, deltaI: float, center: float, delta: float,
                            n_batches: int = 20, discard: float = 0.0) -> FilteredArea:
    """``(1/pi) <|J(center, t)|^2>`` for the pure signal ``J = (deltaI/2) Q``,
    with ``J(center, t) = int J(t + tau) e^{i center tau} g(tau) dtau``."""
    if rec.q_truth is None:
        raise MissingTruthError("record lacks q_truth")
    notes = _regime_notes(center, delta)
    skip = int(round(discard / rec.dt))
    j = 0.5 * deltaI * rec.q_truth[skip:]
    h = time_window_kernel(rec.dt, center, delta)
    if j.size < 2 * h.size:
        raise RecordTooShortError("record shorter than twice the time window")
    # J(t_n) = sum_k j[n + k] h[k]: a correlation, i.e. convolution with h reversed.
    jw = signal.fftconvolve(j, h[::-1], mode="valid")
    power = np.abs(jw) ** 2 / math.pi
    batches = np.array([b.mean() for b in np.array_split(power, n_batches)])
    err = batches.std(ddof=1) / math.sqrt(n_batches)
    return FilteredArea(area=float(power.mean()), stderr=float(err), center=center,
                        delta=delta, reliable=not notes, notes=notes)


@dataclass
class LemmaCheck:
    frequency_side: float
    time_side: float
    discrepancy: float
    in_regime: bool
    notes: list

    def to_dict(self) -> dict:
        return asdict(self)


def verify_lemma(rec: SignalRecord, deltaI: float, center: float, delta: float,
                 segment_length: int = 2 ** 14, overlap: float = 0.5,
                 discard: float = 0.0) -> LemmaCheck:
    """Compare the filtered area of the pure-signal spectrum with the time
    average of the windowed transform; returns the relative discrepancy."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        spec = estimate_spectrum(rec, segment_length, overlap, use_truth=True,
                                 amplitude=0.5 * deltaI, center=center, discard=discard)
        freq = filtered_area_of(spec.omega, spec.s_i, center, delta)
        tim = filtered_peak_area_time(rec, deltaI, center, delta, discard=discard).area
    notes = []
    if delta / center > MAX_WINDOW_RATIO:
        notes.append(f"window ratio delta/center = {delta / center:.3g} exceeds {MAX_WINDOW_RATIO}")
        warnings.warn(notes[-1], RegimeWarning, stacklevel=2)
    return LemmaCheck(frequency_side=freq, time_side=tim,
                      discrepancy=abs(freq - tim) / abs(tim) if tim else float("inf"),
                      in_regime=not notes, notes=notes)


@dataclass
class PeakAreaVerdict:
    centerOmega: float
    windowDelta: float
    area: float
    uncertainty: float
    generalBound: float
    singlePeakBound: Optional[float]
    quantumReference: float
    exceedsGeneral: str
    exceedsSinglePeak: Optional[str]
    regimeFlags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _compare(area, bound, err, k_sigma):
    margin = area - bound
    if margin > k_sigma * err:
        return "exceeds"
    if margin < -k_sigma * err:
        return "below"
    return "inconclusive"


def peak_bound_verdict(area: float, deltaI: float, single_peak_claim: bool = False,
                       uncertainty: float = 0.0, k_sigma: float = 3.0,
                       center: float = float("nan"), delta: float = float("nan"),
                       regime_flags=()) -> PeakAreaVerdict:
    """Classify a filtered peak area against ``8/pi^2 A`` (and ``2/3 A`` for
    a single narrow peak), where ``A = (deltaI/2)^2``. Results are
    ``"exceeds"``, ``"below"`` or ``"inconclusive"`` (within ``k_sigma``)."""
    a = (0.5 * deltaI) ** 2
    gen = GENERAL_BOUND * a
    single = SINGLE_PEAK_BOUND * a if single_peak_claim else None
    return PeakAreaVerdict(
        centerOmega=center, windowDelta=delta, area=float(area),
        uncertainty=float(uncertainty), generalBound=gen, singlePeakBound=single,
        quantumReference=a, exceedsGeneral=_compare(area, gen, uncertainty, k_sigma),
        exceedsSinglePeak=None if single is None else _compare(area, single, uncertainty, k_sigma),
        regimeFlags=list(regime_flags))
