"""Record and result files.

Records are written as CSV with the header ``t,rho11,re_rho12,im_rho12,q,xi,i``
(classical records leave the density-matrix columns as ``nan``), or as a
little-endian float64 row-major dump ``<name>.bin`` with a JSON sidecar
``<name>.json`` naming the columns and carrying the configuration.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .correlation import CorrelatorEstimate
from .model import SignalRecord
from .spectral import SpectrumEstimate
from .trajectory import TrajectoryRecord

RECORD_COLUMNS = ("t", "rho11", "re_rho12", "im_rho12", "q", "xi", "i")
CORRELATOR_COLUMNS = ("tau", "k_i", "k_i_stderr", "k_xi_q", "k_xi_q_stderr")
SPECTRUM_COLUMNS = ("omega", "s_i", "s_i_stderr")


def _record_table(rec) -> tuple[np.ndarray, dict]:
    if isinstance(rec, TrajectoryRecord):
        return rec.table(), {"dt": rec.dt, "i0": rec.I0, "physical": rec.physical,
                             "sim": rec.sim}
    n = len(rec)
    nan = np.full(n, np.nan)
    q = nan if rec.q_truth is None else rec.q_truth
    xi = nan if rec.xi_truth is None else rec.xi_truth
    table = np.column_stack([np.arange(n) * rec.dt, nan, nan, nan, q, xi, rec.samples])
    return table, {"dt": rec.dt, "i0": rec.i0, **{k: v for k, v in rec.meta.items()}}


def write_csv(path, header, table) -> Path:
    path = Path(path)
    np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    return path


def write_record_csv(path, rec) -> Path:
    table, _ = _record_table(rec)
    return write_csv(path, RECORD_COLUMNS, table)


def write_record_binary(path, rec) -> tuple[Path, Path]:
    """Write ``path`` (raw float64, little endian) plus ``path.json`` sidecar."""
    path = Path(path)
    table, meta = _record_table(rec)
    np.ascontiguousarray(table, dtype="<f8").tofile(path)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "format": "float64-le-row-major", "columns": list(RECORD_COLUMNS),
        "rows": int(table.shape[0]), **meta}, indent=2, default=_jsonable))
    return path, sidecar


def _to_signal(table, dt, i0, meta) -> SignalRecord:
    q, xi = table[:, 4], table[:, 5]
    return SignalRecord(dt=dt, i0=i0, samples=table[:, 6],
                        q_truth=None if np.all(np.isnan(q)) else q,
                        xi_truth=None if np.all(np.isnan(xi)) else xi, meta=meta)


def read_record_binary(path) -> SignalRecord:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    cols = meta["columns"]
    table = np.fromfile(path, dtype="<f8").reshape(-1, len(cols))
    return _to_signal(table, meta["dt"], meta["i0"], meta)


def read_record_csv(path, i0: float = 0.0, dt: float | None = None) -> SignalRecord:
    """Read a record CSV. Only ``t`` and ``i`` are required; ``q`` and ``xi``
    are picked up when present and not ``nan``."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    col = {name: data[:, k] for k, name in enumerate(header)}
    if "i" not in col:
        raise ValueError(f"{path}: no 'i' column")
    if dt is None:
        if "t" not in col or len(col["t"]) < 2:
            raise ValueError(f"{path}: cannot infer dt without a 't' column")
        dt = float(col["t"][1] - col["t"][0])
    table = np.full((data.shape[0], len(RECORD_COLUMNS)), np.nan)
    for k, name in enumerate(RECORD_COLUMNS):
        if name in col:
            table[:, k] = col[name]
    return _to_signal(table, dt, i0, {"source": str(path)})


def write_correlator_csv(path, est: CorrelatorEstimate) -> Path:
    return write_csv(path, CORRELATOR_COLUMNS, est.table())


def write_spectrum_csv(path, spec: SpectrumEstimate) -> Path:
    return write_csv(path, SPECTRUM_COLUMNS, spec.table())


def _jsonable(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats with strings so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dump_json(path, obj) -> Path:
    path = Path(path)
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_jsonable))),
                      indent=2, sort_keys=True)
    path.write_text(text + "\n")
    return path
