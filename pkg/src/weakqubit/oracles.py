"""Classical macrorealistic signals.

Each generator produces ``|Q(t)| <= 1`` and adds detector noise drawn from
a stream independent of the one driving ``Q``, so the noise can never be
correlated with the system. These records must respect every classical
bound and are used as controls.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from . import rng as rngmod
from .model import DetectorParams, ParameterError, SignalRecord


class OracleKind(str, Enum):
    RECTANGULAR = "rectangular"
    COSINE = "cosine"
    TELEGRAPH = "telegraph"


@dataclass(frozen=True)
class OracleConfig:
    kind: OracleKind
    omega: float = 1.0
    phase_diffusion: float = 0.01
    telegraph_rate: float = 0.1
    dt: float = 0.05
    n_steps: int = 4_000_000
    seed: int = 0
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", OracleKind(self.kind))
        if self.phase_diffusion < 0:
            raise ParameterError("phase_diffusion must be >= 0")
        if not self.dt > 0 or self.n_steps < 2:
            raise ParameterError("need dt > 0 and n_steps >= 2")
        if self.kind is OracleKind.TELEGRAPH and not self.telegraph_rate > 0:
            raise ParameterError("telegraph_rate must be > 0")
        if self.phase_diffusion > 0.1 * self.omega:
            warnings.warn(
                f"phase_diffusion={self.phase_diffusion} is not small against "
                f"omega={self.omega}; the phase is no longer slowly varying",
                UserWarning, stacklevel=3)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def rectangular_q(theta):
    """Unit square wave: +1 on (2n pi, (2n+1) pi), -1 on ((2n+1) pi, 2(n+1) pi).

    At the jumps the right limit is returned.
    """
    phase = np.mod(theta, 2.0 * np.pi)
    out = np.where(phase < np.pi, 1.0, -1.0)
    return out if np.ndim(out) else float(out)


def phase_walk(n, dt, diffusion, gen):
    """Wiener phase with increments of variance ``diffusion * dt`` and a
    uniformly random starting value."""
    phi = np.empty(n)
    phi[0] = gen.uniform(0.0, 2.0 * np.pi)
    if diffusion > 0:
        steps = gen.normal(0.0, np.sqrt(diffusion * dt), size=n - 1)
        np.cumsum(steps, out=phi[1:])
        phi[1:] += phi[0]
    else:
        phi[1:] = phi[0]
    return phi


def telegraph(n, dt, rate, gen):
    """Symmetric +-1 telegraph process with exponential holding times."""
    total = n * dt
    # Draw switch times in blocks until they cover the record.
    expected = int(rate * total * 1.1) + 16
    times = np.cumsum(gen.exponential(1.0 / rate, size=expected))
    while times[-1] < total:
        more = np.cumsum(gen.exponential(1.0 / rate, size=expected)) + times[-1]
        times = np.concatenate([times, more])
    start = 1.0 if gen.random() < 0.5 else -1.0
    flips = np.searchsorted(times, np.arange(n) * dt, side="right")
    return start * np.where(flips % 2 == 0, 1.0, -1.0)


def generate_q(cfg: OracleConfig) -> np.ndarray:
    gen = rngmod.stream(cfg.seed, rngmod.ORACLE_PROCESS, cfg.index)
    n = cfg.n_steps
    if cfg.kind is OracleKind.TELEGRAPH:
        return telegraph(n, cfg.dt, cfg.telegraph_rate, gen)
    theta = cfg.omega * cfg.dt * np.arange(n) + phase_walk(n, cfg.dt, cfg.phase_diffusion, gen)
    if cfg.kind is OracleKind.RECTANGULAR:
        return rectangular_q(theta)
    return np.cos(theta)


def generate_oracle(cfg: OracleConfig, det: DetectorParams) -> SignalRecord:
    """Classical record ``I = I0 + (deltaI/2) Q + xi`` with ``xi`` independent of ``Q``."""
    q = generate_q(cfg)
    noise = rngmod.stream(cfg.seed, rngmod.ORACLE_NOISE, cfg.index)
    xi = noise.normal(0.0, np.sqrt(det.S0 / (2.0 * cfg.dt)), size=q.size)
    samples = det.I0 + det.amplitude * q + xi
    return SignalRecord(dt=cfg.dt, i0=det.I0, samples=samples, q_truth=q, xi_truth=xi,
                        meta={"source": "oracle", "oracle": cfg.to_dict(),
                              "detector": asdict(det)})
