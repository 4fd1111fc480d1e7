"""Physical parameters, derived rates and the qubit state.

Units: hbar = 1 and every rate is an angular frequency. The detector
signal is ``I(t) = I0 + (deltaI/2) Q(t) + xi(t)`` with white noise of
two-sided spectral density ``S0`` (``<xi(t) xi(t+tau)> = (S0/2) delta(tau)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

POSITIVITY_TOL = 1e-9


class ParameterError(ValueError):
    """Raised for physically invalid parameter values."""


class OutsideValidityError(ValueError):
    """Raised when an analytic formula is used in the overdamped regime."""


@dataclass(frozen=True)
class DetectorParams:
    I0: float
    deltaI: float
    S0: float
    eta: float = 1.0

    def __post_init__(self):
        if not self.deltaI > 0:
            raise ParameterError(f"deltaI must be > 0, got {self.deltaI}")
        if not self.S0 > 0:
            raise ParameterError(f"S0 must be > 0, got {self.S0}")
        if not 0 < self.eta <= 1:
            raise ParameterError(f"eta must be in (0, 1], got {self.eta}")

    @property
    def amplitude(self) -> float:
        """Half the signal contrast, ``deltaI / 2``."""
        return 0.5 * self.deltaI


@dataclass(frozen=True)
class QubitParams:
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ParameterError(f"omega must be > 0, got {self.omega}")


@dataclass(frozen=True)
class DerivedRates:
    gamma: float
    GammaTotal: float
    omegaTilde: Optional[float]

    @property
    def underdamped(self) -> bool:
        return self.omegaTilde is not None


def derive_rates(d: DetectorParams, q: QubitParams) -> DerivedRates:
    """Excess dephasing ``gamma``, total decoherence ``Gamma`` and the
    shifted frequency ``sqrt(omega^2 - Gamma^2/4)``.

    ``omegaTilde`` is ``None`` in the overdamped regime ``omega <= Gamma/2``.
    """
    meas = d.deltaI ** 2 / (4.0 * d.S0)
    gamma = (1.0 / d.eta - 1.0) * meas
    Gamma = meas / d.eta
    disc = q.omega ** 2 - 0.25 * Gamma ** 2
    omega_t = math.sqrt(disc) if disc > 0 else None
    return DerivedRates(gamma=gamma, GammaTotal=Gamma, omegaTilde=omega_t)


@dataclass(frozen=True)
class PhysicalConfig:
    detector: DetectorParams
    qubit: QubitParams
    rates: DerivedRates = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rates", derive_rates(self.detector, self.qubit))

    @classmethod
    def from_values(cls, omega, deltaI, S0, eta=1.0, I0=0.0) -> "PhysicalConfig":
        return cls(DetectorParams(I0=I0, deltaI=deltaI, S0=S0, eta=eta),
                   QubitParams(omega=omega))

    @property
    def omega(self) -> float:
        return self.qubit.omega

    @property
    def Gamma(self) -> float:
        return self.rates.GammaTotal

    def require_underdamped(self) -> float:
        if self.rates.omegaTilde is None:
            raise OutsideValidityError(
                f"overdamped regime: omega={self.omega} <= Gamma/2={self.Gamma / 2}")
        return self.rates.omegaTilde

    def to_dict(self) -> dict:
        d, r = self.detector, self.rates
        return {
            "omega": self.omega, "I0": d.I0, "deltaI": d.deltaI, "S0": d.S0,
            "eta": d.eta, "gamma": r.gamma, "Gamma": r.GammaTotal,
            "omega_tilde": r.omegaTilde,
        }


@dataclass(frozen=True)
class DensityMatrix:
    """Qubit density matrix stored as ``(rho11, Re rho12, Im rho12)``.

    ``rho22 = 1 - rho11`` is implicit, so the trace is one by construction.
    """

    rho11: float
    reRho12: float = 0.0
    imRho12: float = 0.0

    def __post_init__(self):
        if not -POSITIVITY_TOL <= self.rho11 <= 1 + POSITIVITY_TOL:
            raise ParameterError(f"rho11 must lie in [0, 1], got {self.rho11}")
        if self.determinant < -POSITIVITY_TOL:
            raise ParameterError(
                f"state is not positive: det = {self.determinant:.3e}")

    @property
    def rho22(self) -> float:
        return 1.0 - self.rho11

    @property
    def determinant(self) -> float:
        return self.rho11 * self.rho22 - (self.reRho12 ** 2 + self.imRho12 ** 2)

    @property
    def purity(self) -> float:
        return (self.rho11 ** 2 + self.rho22 ** 2
                + 2.0 * (self.reRho12 ** 2 + self.imRho12 ** 2))

    def as_array(self) -> np.ndarray:
        return np.array([self.rho11, self.reRho12, self.imRho12])

    def matrix(self) -> np.ndarray:
        c = complex(self.reRho12, self.imRho12)
        return np.array([[self.rho11, c], [c.conjugate(), self.rho22]])

    @classmethod
    def from_q(cls, q: float) -> "DensityMatrix":
        """Diagonal state with the given ``Q = rho11 - rho22``."""
        return cls(rho11=0.5 * (1.0 + q))


def q_of(rho: DensityMatrix) -> float:
    return 2.0 * rho.rho11 - 1.0


@dataclass
class SignalRecord:
    """A uniformly sampled detector record.

    ``q_truth`` and ``xi_truth`` are filled in for simulated data only.
    """

    dt: float
    i0: float
    samples: np.ndarray
    q_truth: Optional[np.ndarray] = None
    xi_truth: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ParameterError("a record needs at least 2 samples")
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        n = self.samples.size
        if self.q_truth is not None:
            self.q_truth = np.asarray(self.q_truth, dtype=float)
            if self.q_truth.shape != (n,):
                raise ParameterError("q_truth length differs from samples")
            if np.any(np.abs(self.q_truth) > 1.0 + 1e-12):
                raise ParameterError("|q_truth| exceeds 1")
        if self.xi_truth is not None:
            self.xi_truth = np.asarray(self.xi_truth, dtype=float)
            if self.xi_truth.shape != (n,):
                raise ParameterError("xi_truth length differs from samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size * self.dt

    def centered(self) -> np.ndarray:
        return self.samples - self.i0
