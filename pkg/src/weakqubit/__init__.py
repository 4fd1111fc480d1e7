"""Continuous weak measurement of a qubit: quantum trajectories, classical
control signals, and Leggett-Garg / spectral peak-area tests."""

__version__ = "0.1.0"

from .model import (DensityMatrix, DerivedRates, DetectorParams, PhysicalConfig,
                    QubitParams, SignalRecord, derive_rates, q_of)

__all__ = ["DensityMatrix", "DerivedRates", "DetectorParams", "PhysicalConfig",
           "QubitParams", "SignalRecord", "derive_rates", "q_of"]
