"""Experiment configuration files (YAML, ``schema_version: 1``).

Layout::

    schema_version: 1
    scenario: quantum_sim | classical_oracle | external_record
    seed: 1
    output_dir: out/run
    physical: {omega, deltaI, S0, eta, I0}
    sim:      {dt, duration | n_steps, scheme, record_every, renormalize_every,
               initial_rho11}                       # quantum_sim only
    oracle:   {kind, phase_diffusion, telegraph_rate, dt, duration | n_steps}
                                                    # classical_oracle only
    external: {path, format: csv | binary, i0, dt}  # external_record only
    output:   {record: none | csv | binary}
    analyses:
      correlator:  {max_lag, decimate, n_batches, discard}
      lg_sweep:    {pairs: [[tau1, tau2], ...], random_pairs, tau_min, tau_max, k_sigma}
      spectrum:    {segment_length, overlap, decimate}
      peak_area:   {center, delta, single_peak_claim, k_sigma}
      lemma_check: {center, delta}

``discard`` defaults to ``10 / Gamma`` for simulated quantum records and
to zero otherwise.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .model import DensityMatrix, ParameterError, PhysicalConfig
from .oracles import OracleConfig, OracleKind
from .trajectory import Scheme, SimConfig

SCHEMA_VERSION = 1
SCENARIOS = ("quantum_sim", "classical_oracle", "external_record")
ANALYSES = ("correlator", "lg_sweep", "spectrum", "peak_area", "lemma_check")
_SCENARIO_BLOCK = {"quantum_sim": "sim", "classical_oracle": "oracle",
                   "external_record": "external"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    scenario: str
    physical: PhysicalConfig
    seed: int
    output_dir: Path
    sim: Optional[SimConfig] = None
    oracle: Optional[OracleConfig] = None
    external: Optional[dict] = None
    analyses: dict = field(default_factory=dict)
    record_format: str = "none"
    raw: dict = field(default_factory=dict)

    @property
    def discard(self) -> float:
        c = self.analyses.get("correlator", {})
        if "discard" in c:
            return float(c["discard"])
        return 10.0 / self.physical.Gamma if self.scenario == "quantum_sim" else 0.0


def _need(block: dict, key: str, where: str):
    if not isinstance(block, dict) or key not in block:
        raise ConfigError(f"missing required field '{where}.{key}'")
    return block[key]


def _num(block, key, where, default=None, kind=float):
    if key not in block:
        if default is None:
            raise ConfigError(f"missing required field '{where}.{key}'")
        return default
    try:
        return kind(block[key])
    except (TypeError, ValueError):
        raise ConfigError(f"field '{where}.{key}' must be a number, got {block[key]!r}")


def _steps(block, where, dt):
    if "n_steps" in block:
        return _num(block, "n_steps", where, kind=int)
    if "duration" in block:
        return int(round(_num(block, "duration", where) / dt))
    raise ConfigError(f"missing required field '{where}.duration' (or '{where}.n_steps')")


def parse_config(raw: dict, *, seed: Optional[int] = None,
                 output_dir: Optional[str] = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    raw = copy.deepcopy(raw)
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"field 'schema_version' must be {SCHEMA_VERSION}, got {version!r}")
    scenario = _need(raw, "scenario", "config")
    if scenario not in SCENARIOS:
        raise ConfigError(f"field 'scenario' must be one of {SCENARIOS}, got {scenario!r}")
    present = [b for b in _SCENARIO_BLOCK.values() if b in raw]
    if present != [_SCENARIO_BLOCK[scenario]]:
        raise ConfigError(
            f"scenario '{scenario}' needs exactly the '{_SCENARIO_BLOCK[scenario]}' block, "
            f"found {present}")
    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = output_dir
    seed_v = _num(raw, "seed", "config", 0, int)
    if not 0 <= seed_v < 2 ** 64:
        raise ConfigError("field 'seed' must be a 64-bit unsigned integer")

    ph = _need(raw, "physical", "config")
    try:
        physical = PhysicalConfig.from_values(
            omega=_num(ph, "omega", "physical"), deltaI=_num(ph, "deltaI", "physical"),
            S0=_num(ph, "S0", "physical"), eta=_num(ph, "eta", "physical", 1.0),
            I0=_num(ph, "I0", "physical", 0.0))
    except ParameterError as exc:
        raise ConfigError(f"physical: {exc}")

    cfg = ExperimentConfig(scenario=scenario, physical=physical, seed=seed_v,
                           output_dir=Path(raw.get("output_dir", "out")), raw=raw)
    try:
        if scenario == "quantum_sim":
            s = raw["sim"]
            dt = _num(s, "dt", "sim")
            cfg.sim = SimConfig(
                dt=dt, n_steps=_steps(s, "sim", dt), seed=seed_v,
                scheme=Scheme(s.get("scheme", "heun")),
                initial_state=DensityMatrix(_num(s, "initial_rho11", "sim", 1.0)),
                renormalize_every=_num(s, "renormalize_every", "sim", 100, int),
                record_every=_num(s, "record_every", "sim", 1, int),
                strict_accuracy=bool(s.get("strict_accuracy", False)))
        elif scenario == "classical_oracle":
            o = raw["oracle"]
            dt = _num(o, "dt", "oracle")
            cfg.oracle = OracleConfig(
                kind=OracleKind(_need(o, "kind", "oracle")), omega=physical.omega,
                phase_diffusion=_num(o, "phase_diffusion", "oracle", 0.01 * physical.omega),
                telegraph_rate=_num(o, "telegraph_rate", "oracle", 0.1 * physical.omega),
                dt=dt, n_steps=_steps(o, "oracle", dt), seed=seed_v)
        else:
            e = raw["external"]
            _need(e, "path", "external")
            cfg.external = dict(e)
    except ParameterError as exc:
        raise ConfigError(f"{_SCENARIO_BLOCK[scenario]}: {exc}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{_SCENARIO_BLOCK[scenario]}: {exc}")

    analyses = raw.get("analyses") or {}
    unknown = set(analyses) - set(ANALYSES)
    if unknown:
        raise ConfigError(f"unknown analyses {sorted(unknown)}; known: {ANALYSES}")
    cfg.analyses = {k: dict(v or {}) for k, v in analyses.items()}
    _check_lags(cfg)
    fmt = (raw.get("output") or {}).get("record", "none")
    if fmt not in ("none", "csv", "binary"):
        raise ConfigError("field 'output.record' must be none, csv or binary")
    cfg.record_format = fmt
    return cfg


def _check_lags(cfg: ExperimentConfig) -> None:
    lg = cfg.analyses.get("lg_sweep")
    if lg is None:
        return
    corr = cfg.analyses.setdefault("correlator", {})
    max_lag = float(corr.get("max_lag", 20.0 / cfg.physical.omega))
    for pair in lg.get("pairs", []):
        if len(pair) != 2:
            raise ConfigError("field 'analyses.lg_sweep.pairs' entries must be [tau1, tau2]")
        if float(pair[0]) + float(pair[1]) > max_lag:
            raise ConfigError(
                f"field 'analyses.lg_sweep.pairs': tau1 + tau2 = {pair[0] + pair[1]} "
                f"exceeds analyses.correlator.max_lag = {max_lag}")
    if lg.get("random_pairs", 0) and 2 * float(lg.get("tau_max", 10.0)) > max_lag:
        raise ConfigError("field 'analyses.lg_sweep.tau_max': 2 * tau_max exceeds "
                          "analyses.correlator.max_lag")


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}")
    return parse_config(raw, **overrides)


def with_override(raw: dict, dotted: str, value: Any) -> dict:
    out = copy.deepcopy(raw)
    node = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
    return out
