"""Bayesian evolution of a continuously measured qubit.

For the qubit with ``I_{1,2} = I0 +- deltaI/2`` and
``H = (omega/2)(|1><2| + |2><1|)`` the Stratonovich equations read, with
``x = I(t) - I0`` and ``Q = rho11 - rho22``::

    d rho11/dt    = (2 deltaI/S0) rho11 rho22 x - omega Im rho12
    d Re rho12/dt = -(deltaI/S0) x Q Re rho12 - gamma Re rho12
    d Im rho12/dt = -(deltaI/S0) x Q Im rho12 - gamma Im rho12 + (omega/2) Q

The commutator ``-i[H, rho]`` gives ``d rho11/dt = -omega Im rho12`` and
``d rho12/dt = i (omega/2) Q``, so that averaged over noise
``dQ/dt = -2 omega Im rho12`` and ``d Im rho12/dt = (omega/2) Q - Gamma Im rho12``.
Solving this pair reproduces the sign of the ``<2 Im rho12 Q>`` term in the
Q-Q correlator.

The equivalent Ito form (``xi dt`` is the Wiener increment) is::

    d rho11 = -omega Im rho12 dt + (2 deltaI/S0) rho11 rho22 xi dt
    d rho12 = (-Gamma rho12 + i (omega/2) Q) dt - (deltaI/S0) Q rho12 xi dt

The measurement drift of ``rho11`` cancels against its Ito correction, and
the coherence picks up the full ensemble decoherence rate ``Gamma``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Optional

import numba
import numpy as np

from . import rng as rngmod
from .model import DensityMatrix, ParameterError, PhysicalConfig, SignalRecord

ESCAPE_TOL = 1e-6
# Divergence guard between repairs.
_GROSS = 0.5
_CHUNK = 1 << 20


class Scheme(str, Enum):
    HEUN = "heun"
    ITO_EULER = "ito"


class StateEscapeError(RuntimeError):
    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"state left the physical region at step {step}{detail}")


class AccuracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float
    n_steps: int
    seed: int = 0
    scheme: Scheme = Scheme.HEUN
    initial_state: DensityMatrix = field(default_factory=lambda: DensityMatrix(1.0))
    renormalize_every: int = 100
    # Rows are block averages over this many steps; 1 keeps every sample.
    record_every: int = 1
    trajectory_index: int = 0
    strict_accuracy: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 0:
            raise ParameterError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.renormalize_every < 1 or self.record_every < 1:
            raise ParameterError("renormalize_every and record_every must be >= 1")
        if self.record_every > 1 and self.n_steps % self.record_every:
            raise ParameterError("n_steps must be a multiple of record_every")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    def check_accuracy(self, cfg: PhysicalConfig) -> None:
        problems = []
        if self.dt * cfg.omega > 0.05:
            problems.append(f"dt*omega = {self.dt * cfg.omega:.3g} > 0.05")
        if self.dt * cfg.Gamma > 0.01:
            problems.append(f"dt*Gamma = {self.dt * cfg.Gamma:.3g} > 0.01")
        if problems:
            msg = "integration step too coarse: " + ", ".join(problems)
            if self.strict_accuracy:
                raise ParameterError(msg)
            warnings.warn(msg, AccuracyWarning, stacklevel=3)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        d["initial_state"] = asdict(self.initial_state)
        return d


def sample_noise(S0: float, dt: float, rng: np.random.Generator, size=None):
    """Discretised white noise: Gaussian with variance ``S0 / (2 dt)``."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    return rng.normal(0.0, np.sqrt(S0 / (2.0 * dt)), size=size)


@numba.njit(cache=True, inline="always")
def _strat_rhs(r11, re, im, x, k_meas, gamma, omega):
    q = 2.0 * r11 - 1.0
    d11 = 2.0 * k_meas * r11 * (1.0 - r11) * x - omega * im
    damp = -k_meas * x * q - gamma
    return d11, damp * re, damp * im + 0.5 * omega * q


def stratonovich_drift(rho: DensityMatrix, i_value: float, cfg: PhysicalConfig) -> np.ndarray:
    """Stratonovich right-hand side ``(d rho11, d Re rho12, d Im rho12)/dt``
    for the instantaneous record value ``i_value``."""
    d = cfg.detector
    return np.array(_strat_rhs(rho.rho11, rho.reRho12, rho.imRho12,
                               i_value - d.I0, d.deltaI / d.S0,
                               cfg.rates.gamma, cfg.omega))


@numba.njit(cache=True)
def _repair(state, keep_pure):
    """Clamp rho11 into [0, 1] and shrink the coherence onto the positive
    region. With ``keep_pure`` the coherence is instead rescaled onto the
    pure-state surface ``|rho12|^2 = rho11 rho22`` (phase and Q kept)."""
    r11 = min(max(state[0], 0.0), 1.0)
    state[0] = r11
    c2 = state[1] * state[1] + state[2] * state[2]
    lim = r11 * (1.0 - r11)
    if c2 > lim or (keep_pure and c2 > 0.0):
        s = np.sqrt(lim / c2) if c2 > 0.0 else 0.0
        state[1] *= s
        state[2] *= s


@numba.njit(cache=True, nogil=True)
def _run(state, z, sigma, dt, half_di, k_meas, gamma, Gamma, omega, ito,
         renorm_every, keep_pure, step0, n_update, record_every, out, row0, acc):
    """Advance ``state`` through the noise samples ``z`` (unit normals).

    Samples with index below ``n_update`` advance the state; the rest only
    produce a record entry. Returns -1, or the global index of the step at
    which the state escaped.
    """
    n = z.shape[0]
    row = row0
    for j in range(n):
        r11 = state[0]
        re = state[1]
        im = state[2]
        q = 2.0 * r11 - 1.0
        xi = sigma * z[j]
        x = half_di * q + xi
        acc[0] += r11
        acc[1] += re
        acc[2] += im
        acc[3] += q
        acc[4] += xi
        acc[5] += x
        acc[6] += 1.0
        if acc[6] >= record_every:
            inv = 1.0 / acc[6]
            for c in range(6):
                out[row, c] = acc[c] * inv
                acc[c] = 0.0
            acc[6] = 0.0
            row += 1
        if j >= n_update:
            continue
        if ito:
            w = xi * dt
            r11n = r11 - omega * im * dt + 2.0 * k_meas * r11 * (1.0 - r11) * w
            damp = 1.0 - Gamma * dt - k_meas * q * w
            ren = re * damp
            imn = im * damp + 0.5 * omega * q * dt
        else:
            a11, are, aim = _strat_rhs(r11, re, im, x, k_meas, gamma, omega)
            p11 = r11 + a11 * dt
            pre = re + are * dt
            pim = im + aim * dt
            b11, bre, bim = _strat_rhs(p11, pre, pim, x, k_meas, gamma, omega)
            r11n = r11 + 0.5 * (a11 + b11) * dt
            ren = re + 0.5 * (are + bre) * dt
            imn = im + 0.5 * (aim + bim) * dt
        state[0] = r11n
        state[1] = ren
        state[2] = imn
        step = step0 + j + 1
        if not (r11n > -_GROSS and r11n < 1.0 + _GROSS
                and abs(ren) < _GROSS + 0.5 and abs(imn) < _GROSS + 0.5):
            return step
        if step % renorm_every == 0:
            _repair(state, keep_pure)
            r11n = state[0]
            det = r11n * (1.0 - r11n) - (state[1] * state[1] + state[2] * state[2])
            if not det > -ESCAPE_TOL:
                return step
    return -1


@dataclass
class TrajectoryRecord:
    """Sampled output of one trajectory; columns follow ``COLUMNS``."""

    COLUMNS = ("t", "rho11", "re_rho12", "im_rho12", "q", "xi", "i")

    physical: dict
    sim: dict
    dt: float
    I0: float
    deltaI: float
    data: np.ndarray  # shape (n, 6): rho11, re, im, q, xi, i

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.data.shape[0]) * self.dt

    rho11 = property(lambda self: self.data[:, 0])
    re_rho12 = property(lambda self: self.data[:, 1])
    im_rho12 = property(lambda self: self.data[:, 2])
    q = property(lambda self: self.data[:, 3])
    xi = property(lambda self: self.data[:, 4])
    i = property(lambda self: self.data[:, 5])

    def __len__(self):
        return self.data.shape[0]

    def table(self) -> np.ndarray:
        """All columns including ``t`` as an ``(n, 7)`` array."""
        return np.column_stack([self.t, self.data])

    def to_signal_record(self, discard: float = 0.0) -> SignalRecord:
        k = int(round(discard / self.dt))
        return SignalRecord(dt=self.dt, i0=self.I0, samples=self.i[k:],
                            q_truth=np.clip(self.q[k:], -1.0, 1.0),
                            xi_truth=self.xi[k:],
                            meta={"source": "quantum", "discarded_transient": k * self.dt,
                                  "physical": self.physical, "sim": self.sim})

    def moments(self, discard: float = 0.0) -> dict:
        """Time averages of ``Q^2`` and ``2 Im rho12 Q`` after a transient."""
        k = int(round(discard / self.dt))
        q, im = self.q[k:], self.im_rho12[k:]
        return {"q_squared_mean": float(np.mean(q * q)),
                "im_rho_q_mean": float(np.mean(2.0 * im * q)),
                "discarded_transient": k * self.dt}


def _keeps_purity(rho: DensityMatrix, cfg: PhysicalConfig) -> bool:
    # An ideal detector maps pure states to pure states exactly.
    return cfg.detector.eta == 1.0 and abs(rho.determinant) < 1e-12


def step(rho: DensityMatrix, cfg: PhysicalConfig, sim: SimConfig,
         rng: np.random.Generator):
    """One integration step. Returns ``(rho_next, xi, I)``."""
    d = cfg.detector
    state = rho.as_array().astype(float)
    z = np.array([rng.standard_normal()])
    out = np.zeros((1, 6))
    acc = np.zeros(7)
    bad = _run(state, z, np.sqrt(d.S0 / (2 * sim.dt)), sim.dt, d.amplitude,
               d.deltaI / d.S0, cfg.rates.gamma, cfg.Gamma, cfg.omega,
               sim.scheme is Scheme.ITO_EULER, 1, _keeps_purity(rho, cfg),
               0, 1, 1, out, 0, acc)
    if bad >= 0:
        raise StateEscapeError(bad)
    xi = out[0, 4]
    return DensityMatrix(*state), xi, d.I0 + out[0, 5]


def simulate(cfg: PhysicalConfig, sim: SimConfig) -> TrajectoryRecord:
    """Integrate one trajectory, recording every sample (or block averages).

    The same noise sample ``xi_n`` enters the record ``I_n`` and drives the
    state update from ``rho_n`` to ``rho_{n+1}``. With ``record_every == 1``
    the record holds ``n_steps + 1`` samples, the last one being the final
    state with its own noise draw; otherwise ``n_steps / record_every`` block
    averages.
    """
    sim.check_accuracy(cfg)
    d = cfg.detector
    gen = rngmod.stream(sim.seed, rngmod.DETECTOR_NOISE, sim.trajectory_index)
    n_samples = sim.n_steps + 1 if sim.record_every == 1 else sim.n_steps
    n_rows = n_samples // sim.record_every
    out = np.empty((n_rows, 6))
    acc = np.zeros(7)
    state = sim.initial_state.as_array().astype(float)
    sigma = np.sqrt(d.S0 / (2.0 * sim.dt))
    ito = sim.scheme is Scheme.ITO_EULER
    keep_pure = _keeps_purity(sim.initial_state, cfg)
    done = 0
    row = 0
    while done < n_samples:
        n = min(_CHUNK, n_samples - done)
        z = gen.standard_normal(n)
        n_update = min(n, sim.n_steps - done)
        bad = _run(state, z, sigma, sim.dt, d.amplitude, d.deltaI / d.S0,
                   cfg.rates.gamma, cfg.Gamma, cfg.omega, ito,
                   sim.renormalize_every, keep_pure, done, n_update, sim.record_every,
                   out, row, acc)
        if bad >= 0:
            raise StateEscapeError(bad)
        done += n
        row = done // sim.record_every
    return TrajectoryRecord(physical=cfg.to_dict(), sim=sim.to_dict(),
                            dt=sim.dt * sim.record_every, I0=d.I0,
                            deltaI=d.deltaI, data=out)


def final_states(cfg: PhysicalConfig, sim: SimConfig, n_trajectories: int,
                 threads: int = 1) -> np.ndarray:
    """Final ``(rho11, Re rho12, Im rho12)`` of an ensemble of independent
    trajectories; trajectory ``k`` uses noise substream ``k``."""
    def one(k):
        rec = simulate(cfg, replace(sim, trajectory_index=k, record_every=1))
        return rec.data[-1, :3].copy()  # a view would pin the whole record

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(one, range(n_trajectories)))
        else:
            rows = [one(k) for k in range(n_trajectories)]
    return np.array(rows)
