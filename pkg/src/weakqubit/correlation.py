"""Time-averaged correlators, their analytic quantum forms, and the
weak-measurement Leggett-Garg test.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import signal

from .model import ParameterError, PhysicalConfig, SignalRecord

MIN_LENGTH_FACTOR = 50


class RecordTooShortError(ValueError):
    pass


class MissingTruthError(ValueError):
    pass


def block_average(x: np.ndarray, m: int) -> np.ndarray:
    if m == 1:
        return x
    n = (x.size // m) * m
    return x[:n].reshape(-1, m).mean(axis=1)


@dataclass
class CorrelatorEstimate:
    """Lagged correlator estimates on the grid ``tau = m * dt``, m >= 1.

    ``k_i_batches`` keeps the per-batch means so that linear combinations of
    lags get batch-means error bars with their correlations included.
    """

    tau: np.ndarray
    k_i: np.ndarray
    k_i_stderr: np.ndarray
    k_i_batches: np.ndarray
    dt: float
    k_xi_q: Optional[np.ndarray] = None
    k_xi_q_stderr: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def lag_index(self, tau: float) -> int:
        """Index of the grid lag nearest to ``tau``."""
        m = int(round(tau / self.dt))
        if m < 1 or m > self.tau.size:
            raise ParameterError(
                f"tau={tau} is outside the estimated lags ({self.dt}, {self.tau[-1]}]")
        return m - 1

    def table(self) -> np.ndarray:
        nan = np.full_like(self.k_i, np.nan)
        return np.column_stack([
            self.tau, self.k_i, self.k_i_stderr,
            nan if self.k_xi_q is None else self.k_xi_q,
            nan if self.k_xi_q_stderr is None else self.k_xi_q_stderr])


def _lagged_sums(a, b, max_lag, starts):
    """``sum_{n in batch} a[n] * b[n + m]`` for m = 1..max_lag and each batch."""
    out = np.empty((len(starts) - 1, max_lag))
    for j in range(len(starts) - 1):
        s, e = starts[j], starts[j + 1]
        seg = b[s + 1:e + max_lag]
        # correlate(seg, a[s:e], 'valid')[k] = sum_n a[s+n] * b[s+1+n+k]
        out[j] = signal.correlate(seg, a[s:e], mode="valid", method="fft")
    return out


def estimate_correlator(rec: SignalRecord, max_lag: float, *, decimate: int = 1,
                        n_batches: int = 20, discard: float = 0.0) -> CorrelatorEstimate:
    """Estimate ``K_I(tau) = <(I(t)-I0)(I(t+tau)-I0)>`` for ``0 < tau <= max_lag``.

    Parameters
    ----------
    rec : SignalRecord
        Detector record. When it carries ``q_truth`` and ``xi_truth`` the
        back-action correlator ``<xi(t) Q(t+tau)>`` is estimated as well.
    max_lag : float
        Largest lag. The record must be at least 50 times longer.
    decimate : int
        Block-average this many samples before correlating. This is the
        integrating detector's view of the record: it cuts the white-noise
        variance by ``decimate`` and leaves lags >= one block free of the
        noise spike.
    n_batches : int
        Number of disjoint segments for batch-means standard errors.
    discard : float
        Initial transient to drop, in time units.

    The lag-0 value is never returned since it is dominated by the white
    noise delta spike.
    """
    if n_batches < 2:
        raise ParameterError("n_batches must be >= 2")
    skip = int(round(discard / rec.dt))
    dt = rec.dt * decimate
    x = block_average(rec.centered()[skip:], decimate)
    n = x.size
    m_max = int(math.floor(max_lag / dt + 1e-9))
    if m_max < 1:
        raise ParameterError(f"max_lag={max_lag} is shorter than one lag step {dt}")
    if n * dt < MIN_LENGTH_FACTOR * max_lag:
        raise RecordTooShortError(
            f"record of duration {n * dt:g} is shorter than {MIN_LENGTH_FACTOR} x max_lag={max_lag:g}")

    lags = np.arange(1, m_max + 1)
    counts = (n - lags).astype(float)
    starts = np.linspace(0, n - m_max, n_batches + 1).astype(int)
    sizes = np.diff(starts).astype(float)

    def estimate(a, b):
        sums = _lagged_sums(a, b, m_max, starts)
        tail = np.array([a[starts[-1]:n - m] @ b[starts[-1] + m:] for m in lags])
        total = (sums.sum(axis=0) + tail) / counts
        batches = sums / sizes[:, None]
        err = batches.std(axis=0, ddof=1) / math.sqrt(n_batches)
        return total, err, batches

    k_i, k_i_err, k_i_b = estimate(x, x)
    est = CorrelatorEstimate(tau=lags * dt, k_i=k_i, k_i_stderr=k_i_err,
                             k_i_batches=k_i_b, dt=dt,
                             meta={"decimate": decimate, "n_batches": n_batches,
                                   "discarded_transient": skip * rec.dt,
                                   "duration": n * dt})
    if rec.q_truth is not None and rec.xi_truth is not None:
        xi = block_average(rec.xi_truth[skip:], decimate)
        q = block_average(rec.q_truth[skip:], decimate)
        est.k_xi_q, est.k_xi_q_stderr, _ = estimate(xi, q)
    return est


def estimate_xi_q(rec: SignalRecord, max_lag: float, **kw) -> CorrelatorEstimate:
    """Like :func:`estimate_correlator` but insists on the truth columns."""
    if rec.q_truth is None or rec.xi_truth is None:
        raise MissingTruthError("record lacks q_truth/xi_truth columns")
    return estimate_correlator(rec, max_lag, **kw)


def _damped(tau, cfg):
    wt = cfg.require_underdamped()
    G = cfg.Gamma
    t = np.abs(np.asarray(tau, dtype=float))
    env = np.exp(-0.5 * G * t)
    even = env * (np.cos(wt * t) + G / (2.0 * wt) * np.sin(wt * t))
    odd = env * (cfg.omega / wt) * np.sin(wt * t)
    return even, odd


def analytic_kI(tau, cfg: PhysicalConfig):
    """Quantum current correlator, even in ``tau``."""
    even, _ = _damped(tau, cfg)
    return cfg.detector.amplitude ** 2 * even


def analytic_qq(tau, cfg: PhysicalConfig, q_squared_mean=0.5, im_rho_q_mean=0.0):
    """``<Q(t) Q(t+tau)>`` given the stationary moments ``<Q^2>`` and
    ``<2 Im rho12 Q>``; evaluated at ``|tau|``."""
    even, odd = _damped(tau, cfg)
    return q_squared_mean * even - im_rho_q_mean * odd


def analytic_xiq(tau, cfg: PhysicalConfig, q_squared_mean=0.5, im_rho_q_mean=0.0):
    """Back-action correlator ``<xi(t) Q(t+tau)>`` for ``tau > 0``; zero for
    ``tau < 0`` since the state cannot anticipate future noise."""
    even, odd = _damped(tau, cfg)
    val = cfg.detector.amplitude * ((1.0 - q_squared_mean) * even + im_rho_q_mean * odd)
    return np.where(np.asarray(tau) < 0, 0.0, val)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def block_averaged(func, tau, width):
    """Expectation of a correlator between two block averages of ``width``
    whose starts are ``tau`` apart: ``func`` smoothed by a unit triangle of
    half-width ``width``. Valid for ``tau >= width``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    # Integrate over each half of the triangle separately (kinks at 0).
    u = 0.5 * (_GL_X + 1.0)  # nodes on [0, 1]
    w = 0.5 * _GL_W
    s = u * width
    tri = 1.0 - u
    left = func(tau[:, None] - s[None, :]) @ (w * tri)
    right = func(tau[:, None] + s[None, :]) @ (w * tri)
    return left + right


@dataclass
class LgVerdict:
    tau1: float
    tau2: float
    lhs: float
    bound: float
    margin: float
    violated: bool
    uncertainty: float
    k_sigma: float = 3.0

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v))
                for k, v in asdict(self).items()}


def lg_combination(k1, k2, k12, deltaI, uncertainty=0.0, k_sigma=3.0,
                   tau1=float("nan"), tau2=float("nan")) -> LgVerdict:
    """Left side ``K(tau1) + K(tau2) - K(tau1 + tau2)`` against ``(deltaI/2)^2``."""
    lhs = k1 + k2 - k12
    bound = (0.5 * deltaI) ** 2
    margin = lhs - bound
    return LgVerdict(tau1=tau1, tau2=tau2, lhs=float(lhs), bound=bound,
                     margin=float(margin),
                     violated=bool(margin > k_sigma * uncertainty),
                     uncertainty=float(uncertainty), k_sigma=k_sigma)


def lg_from_estimate(est: CorrelatorEstimate, tau1, tau2, deltaI, k_sigma=3.0) -> LgVerdict:
    """Leggett-Garg verdict from estimated correlators; lags snap to the grid.

    The uncertainty is the batch-means error of the combination itself.
    """
    i1, i2 = est.lag_index(tau1), est.lag_index(tau2)
    i12 = i1 + i2 + 1
    if i12 >= est.tau.size:
        raise ParameterError(f"tau1 + tau2 = {tau1 + tau2} exceeds the largest lag")
    b = est.k_i_batches
    per_batch = b[:, i1] + b[:, i2] - b[:, i12]
    err = per_batch.std(ddof=1) / math.sqrt(per_batch.size)
    return lg_combination(est.k_i[i1], est.k_i[i2], est.k_i[i12], deltaI, err, k_sigma,
                          tau1=est.tau[i1], tau2=est.tau[i2])


def lg_equal_tau_curve(tau, cfg: PhysicalConfig):
    """Weak-coupling left side for ``tau1 = tau2 = tau``."""
    c = np.cos(cfg.omega * np.asarray(tau, dtype=float))
    return cfg.detector.amplitude ** 2 * (1.0 + 2.0 * (c - c * c))


def three_time_lhs(q1, q2, q3):
    return q1 * q2 + q2 * q3 - q1 * q3


def brute_force_three_time_max(points: int = 201) -> float:
    """Maximum of ``q1 q2 + q2 q3 - q1 q3`` over a grid on ``[-1, 1]^3``
    (the grid always contains the corners)."""
    g = np.linspace(-1.0, 1.0, points)
    best = -np.inf
    q2 = g[:, None]
    q3 = g[None, :]
    for q1 in g:
        best = max(best, float(np.max(three_time_lhs(q1, q2, q3))))
    return best
