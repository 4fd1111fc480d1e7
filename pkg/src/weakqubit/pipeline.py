"""Scenario pipelines behind the command line: generate or load a record,
run the configured analyses, write artifacts and the report."""

from __future__ import annotations

import copy
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import correlation as corr
from . import io
from . import rng as rngmod
from . import spectral as spec
from .config import ConfigError, ExperimentConfig, parse_config, with_override
from .model import OutsideValidityError, SignalRecord
from .oracles import generate_oracle
from .trajectory import StateEscapeError, TrajectoryRecord, simulate

log = logging.getLogger(__name__)

NUMERICAL_ERRORS = (StateEscapeError, corr.RecordTooShortError, corr.MissingTruthError,
                    OutsideValidityError)


class NumericalFailure(RuntimeError):
    pass


def make_record(cfg: ExperimentConfig):
    """Returns ``(SignalRecord, TrajectoryRecord or None)``."""
    if cfg.scenario == "quantum_sim":
        traj = simulate(cfg.physical, cfg.sim)
        return traj.to_signal_record(), traj
    if cfg.scenario == "classical_oracle":
        return generate_oracle(cfg.oracle, cfg.physical.detector), None
    ext = cfg.external
    path = Path(ext["path"])
    fmt = ext.get("format", "binary" if path.suffix == ".bin" else "csv")
    if fmt == "binary":
        rec = io.read_record_binary(path)
    else:
        rec = io.read_record_csv(path, i0=float(ext.get("i0", cfg.physical.detector.I0)),
                                 dt=ext.get("dt"))
    return rec, None


def _trim(rec: SignalRecord, discard: float) -> SignalRecord:
    k = int(round(discard / rec.dt))
    if k == 0:
        return rec
    return SignalRecord(dt=rec.dt, i0=rec.i0, samples=rec.samples[k:],
                        q_truth=None if rec.q_truth is None else rec.q_truth[k:],
                        xi_truth=None if rec.xi_truth is None else rec.xi_truth[k:],
                        meta=dict(rec.meta, discarded_transient=k * rec.dt))


def _random_pairs(seed, n, lo, hi):
    gen = rngmod.stream(seed, rngmod.SWEEP, 2 ** 32 - 1)
    return gen.uniform(lo, hi, size=(n, 2))


def analyse(cfg: ExperimentConfig, rec: SignalRecord, traj: TrajectoryRecord | None,
            out: Path | None = None) -> dict:
    """Run every configured analysis. Arrays go to files under ``out``."""
    ph = cfg.physical
    deltaI = ph.detector.deltaI
    amp2 = ph.detector.amplitude ** 2
    an = cfg.analyses
    discard = cfg.discard
    rec = _trim(rec, discard)
    res: dict = {"record": {"samples": len(rec), "dt": rec.dt, "discarded_transient": discard}}
    files = []

    def save(name, fn, *args):
        if out is not None:
            fn(out / name, *args)
            files.append(name)

    moments = None
    if traj is not None:
        moments = traj.moments(discard)
        res["moments"] = moments

    est = None
    if "correlator" in an or "lg_sweep" in an:
        c = an.get("correlator", {})
        est = corr.estimate_correlator(
            rec, float(c.get("max_lag", 20.0 / ph.omega)), decimate=int(c.get("decimate", 1)),
            n_batches=int(c.get("n_batches", 20)))
        save("correlator.csv", io.write_correlator_csv, est)
        cres = {"dt": est.dt, "lags": int(est.tau.size), "k_i_first_lag": float(est.k_i[0]),
                "k_i_first_lag_stderr": float(est.k_i_stderr[0]), **est.meta}
        if ph.rates.underdamped:
            pred = corr.block_averaged(lambda t: corr.analytic_kI(t, ph), est.tau, est.dt)
            z = (est.k_i - pred) / est.k_i_stderr
            cres["analytic_k_i"] = {
                "max_abs_z": float(np.max(np.abs(z))),
                "relative_rms": float(np.sqrt(np.mean((est.k_i - pred) ** 2)) / amp2)}
        if est.k_xi_q is not None:
            z0 = est.k_xi_q / est.k_xi_q_stderr
            cres["back_action"] = {"max_abs_z_vs_zero": float(np.max(np.abs(z0))),
                                   "k_xi_q_first_lag": float(est.k_xi_q[0]),
                                   "k_xi_q_first_lag_stderr": float(est.k_xi_q_stderr[0])}
            if moments is not None and ph.rates.underdamped:
                pred = corr.block_averaged(
                    lambda t: corr.analytic_xiq(t, ph, moments["q_squared_mean"],
                                                moments["im_rho_q_mean"]), est.tau, est.dt)
                cres["back_action"]["max_abs_z_vs_analytic"] = float(
                    np.max(np.abs((est.k_xi_q - pred) / est.k_xi_q_stderr)))
        res["correlator"] = cres

    if "lg_sweep" in an:
        lg = an["lg_sweep"]
        k_sigma = float(lg.get("k_sigma", 3.0))
        pairs = [tuple(map(float, p)) for p in lg.get("pairs", [])]
        n_rand = int(lg.get("random_pairs", 0))
        if n_rand:
            lo = float(lg.get("tau_min", est.dt))
            hi = float(lg.get("tau_max", 10.0 / ph.omega))
            pairs += [tuple(p) for p in _random_pairs(cfg.seed, n_rand, lo, hi)]
        verdicts = []
        for t1, t2 in pairs:
            v = corr.lg_from_estimate(est, t1, t2, deltaI, k_sigma).to_dict()
            if ph.rates.underdamped:
                exact = corr.block_averaged(lambda t: corr.analytic_kI(t, ph),
                                            np.array([v["tau1"], v["tau2"], v["tau1"] + v["tau2"]]),
                                            est.dt)
                v["analytic_lhs"] = float(exact[0] + exact[1] - exact[2])
            v["requested_tau1"], v["requested_tau2"] = t1, t2
            verdicts.append(v)
        save("lg_verdicts.json", io.dump_json, verdicts)
        res["lg"] = {"count": len(verdicts), "violations": sum(v["violated"] for v in verdicts),
                     "max_margin": max((v["margin"] for v in verdicts), default=None),
                     "verdicts": verdicts[:8]}

    sp = None
    if "spectrum" in an or "peak_area" in an:
        s = an.get("spectrum", {})
        pk = an.get("peak_area", {})
        center = float(pk.get("center", ph.omega))
        sp = spec.estimate_spectrum(rec, int(s.get("segment_length", 2 ** 14)),
                                    float(s.get("overlap", 0.5)), center=center,
                                    decimate=int(s.get("decimate", 1)))
        save("spectrum.csv", io.write_spectrum_csv, sp)
        width = spec.estimate_peak_width(sp, center)
        top = np.abs(sp.omega - center) <= max(0.01 * ph.omega, 0.5 * sp.resolution)
        res["spectrum"] = {"s0_estimate": sp.s0_estimate, "segments": sp.n_segments,
                           "resolution": sp.resolution, "peak_width": width,
                           "peak_height_above_pedestal": float(np.mean(sp.s_i[top]) - sp.s0_estimate)}

    if "peak_area" in an:
        pk = an["peak_area"]
        center = float(pk.get("center", ph.omega))
        delta = float(pk.get("delta", 0.3 * ph.omega))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spec.RegimeWarning)
            fa = spec.filtered_peak_area_frequency(sp, center, delta)
        verdict = spec.peak_bound_verdict(
            fa.area, deltaI, bool(pk.get("single_peak_claim", False)), fa.stderr,
            float(pk.get("k_sigma", 3.0)), center, delta, fa.notes).to_dict()
        verdict["peak_width"] = fa.peak_width
        verdict["analytic_quantum_area"] = spec.filtered_area_of(
            sp.omega, spec.analytic_spectrum(sp.omega, ph) - ph.detector.S0, center, delta)
        save("peak_area.json", io.dump_json, verdict)
        res["peak_area"] = verdict

    if "lemma_check" in an:
        lm = an["lemma_check"]
        center = float(lm.get("center", ph.omega))
        delta = float(lm.get("delta", 0.3 * ph.omega))
        if rec.q_truth is None:
            raise corr.MissingTruthError("lemma_check needs a record with the q column")
        seg = int(an.get("spectrum", {}).get("segment_length", 2 ** 14))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spec.RegimeWarning)
            check = spec.verify_lemma(rec, deltaI, center, delta, seg).to_dict()
        check.update(center=center, delta=delta)
        save("lemma.json", io.dump_json, check)
        res["lemma"] = check

    res["artifacts"] = files
    return res


def summary_lines(cfg: ExperimentConfig, res: dict) -> list[str]:
    lines = [f"scenario: {cfg.scenario}   seed: {cfg.seed}   weakqubit {__version__}"]
    ph = cfg.physical
    lines.append(f"omega={ph.omega:g}  deltaI={ph.detector.deltaI:g}  S0={ph.detector.S0:g}  "
                 f"eta={ph.detector.eta:g}  Gamma={ph.Gamma:g}")
    if "moments" in res:
        m = res["moments"]
        lines.append(f"moments: <Q^2> = {m['q_squared_mean']:.4f}, "
                     f"<2 Im rho12 Q> = {m['im_rho_q_mean']:.4f}")
    if "correlator" in res:
        c = res["correlator"]
        if "analytic_k_i" in c:
            a = c["analytic_k_i"]
            lines.append(f"correlator vs quantum formula: max |z| = {a['max_abs_z']:.2f}, "
                         f"relative RMS = {a['relative_rms']:.4f}")
        if "back_action" in c:
            b = c["back_action"]
            lines.append(f"back-action <xi Q>: first lag {b['k_xi_q_first_lag']:.4f} "
                         f"+- {b['k_xi_q_first_lag_stderr']:.4f}, max |z| vs zero = "
                         f"{b['max_abs_z_vs_zero']:.2f}")
    if "lg" in res:
        lg = res["lg"]
        for v in lg["verdicts"]:
            lines.append(
                f"Leggett-Garg K(t1)+K(t2)-K(t1+t2) <= (dI/2)^2 at t1={v['tau1']:.4g}, "
                f"t2={v['tau2']:.4g}: lhs={v['lhs']:.4f} +- {v['uncertainty']:.4f}, "
                f"bound={v['bound']:.4f}, verdict: "
                f"{'VIOLATED' if v['violated'] else 'not violated'}")
        lines.append(f"Leggett-Garg pairs tested: {lg['count']}, violations: {lg['violations']}")
    if "peak_area" in res:
        p = res["peak_area"]
        lines.append(f"peak area (Gaussian window, center {p['centerOmega']:g}, delta "
                     f"{p['windowDelta']:g}): {p['area']:.4f} +- {p['uncertainty']:.4f}")
        lines.append(f"  general bound 8/pi^2 (dI/2)^2 = {p['generalBound']:.4f}: "
                     f"{p['exceedsGeneral']}")
        if p["singlePeakBound"] is not None:
            lines.append(f"  single-peak bound 2/3 (dI/2)^2 = {p['singlePeakBound']:.4f}: "
                         f"{p['exceedsSinglePeak']}")
        lines.append(f"  quantum reference (dI/2)^2 = {p['quantumReference']:.4f}")
        for n in p["regimeFlags"]:
            lines.append(f"  regime flag: {n}")
    if "lemma" in res:
        lm = res["lemma"]
        lines.append(f"filtration lemma: frequency side {lm['frequency_side']:.5f}, time side "
                     f"{lm['time_side']:.5f}, discrepancy {lm['discrepancy']:.2e}")
    return lines


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> dict:
    """Full pipeline. Writes ``report.json``, ``summary.txt`` and
    ``timings.json``; the report itself holds no wall-clock values so that
    reruns are byte-identical."""
    out = Path(cfg.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        rec, traj = make_record(cfg)
        t1 = time.perf_counter()
        if write and cfg.record_format != "none":
            obj = traj if traj is not None else rec
            if cfg.record_format == "csv":
                io.write_record_csv(out / "record.csv", obj)
            else:
                io.write_record_binary(out / "record.bin", obj)
        res = analyse(cfg, rec, traj, out if write else None)
    except StateEscapeError as exc:
        raise NumericalFailure(f"simulation failed: {exc}") from exc
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(str(exc)) from exc
    t2 = time.perf_counter()
    report = {
        "schema_version": 1, "version": __version__, "scenario": cfg.scenario,
        # where the artifacts went is not part of the result
        "config": {k: v for k, v in cfg.raw.items() if k != "output_dir"}, "physical": cfg.physical.to_dict(),
        "seeds": {"root": cfg.seed, "substreams": "SeedSequence(root, spawn_key=(purpose, index))"},
        "results": res,
    }
    if write:
        io.dump_json(out / "report.json", report)
        (out / "summary.txt").write_text("\n".join(summary_lines(cfg, res)) + "\n")
        io.dump_json(out / "timings.json", {"generate_seconds": t1 - t0,
                                            "analyse_seconds": t2 - t1})
    return report


SWEEP_PARAMS = {
    "gamma": "physical.S0",
    "tau": None,
    "window_delta": "analyses.peak_area.delta",
    "phase_diffusion": "oracle.phase_diffusion",
}
SWEEP_COLUMNS = ("value", "seed", "lg_tau", "lg_lhs", "lg_uncertainty", "lg_margin",
                 "lg_violated", "analytic_margin", "weak_coupling_margin",
                 "peak_area", "peak_area_stderr")


def _sweep_point(raw, param, value, index, analytic_only):
    raw = copy.deepcopy(raw)
    base = parse_config(raw)
    seed = rngmod.derived_seed(base.seed, index) if param in ("gamma", "phase_diffusion") else base.seed
    raw["seed"] = seed
    if param == "gamma":
        d = base.physical.detector
        raw = with_override(raw, "physical.S0", d.deltaI ** 2 / (4.0 * d.eta * value))
        if "sim" in raw:
            # Keep the accuracy guard and the recorded bin width fixed.
            s = raw["sim"]
            dt0 = float(s["dt"])
            dt = min(dt0, 0.01 / value)
            bin_width = dt0 * int(s.get("record_every", 1))
            duration = float(s.get("duration", dt0 * int(s.get("n_steps", 0))))
            s["record_every"] = max(1, int(round(bin_width / dt)))
            s["dt"] = bin_width / s["record_every"]
            s["n_steps"] = int(round(duration / bin_width)) * s["record_every"]
            s.pop("duration", None)
    elif param == "phase_diffusion":
        raw = with_override(raw, "oracle.phase_diffusion", value)
    elif param == "window_delta":
        raw = with_override(raw, "analyses.peak_area.delta", value)
    cfg = parse_config(raw)
    ph = cfg.physical
    row = dict.fromkeys(SWEEP_COLUMNS, float("nan"))
    row.update(value=value, seed=seed)
    if param == "tau":
        tau = value
    else:
        pairs = cfg.analyses.get("lg_sweep", {}).get("pairs") or [[math.pi / (3 * ph.omega)] * 2]
        tau = float(pairs[0][0])
    row["lg_tau"] = tau
    amp2 = ph.detector.amplitude ** 2
    row["weak_coupling_margin"] = float(corr.lg_equal_tau_curve(tau, ph)) - amp2
    if ph.rates.underdamped:
        row["analytic_margin"] = float(2 * corr.analytic_kI(tau, ph)
                                       - corr.analytic_kI(2 * tau, ph)) - amp2
    if analytic_only:
        return row
    res = run_experiment(cfg, write=False)["results"]
    return _fill_row(row, res, cfg, tau)


def _fill_row(row, res, cfg, tau):
    if "lg" in res and res["lg"]["verdicts"]:
        v = res["lg"]["verdicts"][0]
        row.update(lg_tau=v["tau1"], lg_lhs=v["lhs"], lg_uncertainty=v["uncertainty"],
                   lg_margin=v["margin"], lg_violated=int(v["violated"]))
    if "peak_area" in res:
        row.update(peak_area=res["peak_area"]["area"],
                   peak_area_stderr=res["peak_area"]["uncertainty"])
    return row


def run_sweep(cfg_raw: dict, param: str, values, threads: int = 1,
              analytic_only: bool = False, output_dir: Path | None = None) -> list[dict]:
    """Repeat the pipeline per value. ``gamma`` and ``phase_diffusion`` rerun
    the generator with per-point seeds derived from the root seed; ``tau``
    and ``window_delta`` only change the analysis, so a single record is
    generated and reanalysed."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    base = parse_config(cfg_raw)
    if param == "phase_diffusion" and base.scenario != "classical_oracle":
        raise ConfigError("phase_diffusion sweeps need a classical_oracle config")
    values = [float(v) for v in values]
    if param in ("tau", "window_delta"):
        rows = _reanalyse_sweep(cfg_raw, base, param, values, analytic_only)
    else:
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            rows = list(pool.map(lambda iv: _sweep_point(cfg_raw, param, iv[1], iv[0], analytic_only),
                                 enumerate(values)))
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        table = np.array([[float(r[c]) for c in SWEEP_COLUMNS] for r in rows])
        io.write_csv(out / f"sweep_{param}.csv", SWEEP_COLUMNS, table)
    return rows


def _reanalyse_sweep(cfg_raw, base, param, values, analytic_only):
    if analytic_only:
        return [_sweep_point(cfg_raw, param, v, i, True) for i, v in enumerate(values)]
    try:
        rec, traj = make_record(base)
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(str(exc)) from exc
    rows = []
    for i, v in enumerate(values):
        raw = copy.deepcopy(cfg_raw)
        if param == "tau":
            raw = with_override(raw, "analyses.lg_sweep", {"pairs": [[v, v]], "k_sigma":
                                (cfg_raw.get("analyses", {}).get("lg_sweep") or {}).get("k_sigma", 3.0)})
        else:
            raw = with_override(raw, "analyses.peak_area.delta", v)
        cfg = parse_config(raw)
        row = _sweep_point(raw, param, v, i, True)
        try:
            res = analyse(cfg, rec, traj)
        except NUMERICAL_ERRORS as exc:
            raise NumericalFailure(str(exc)) from exc
        rows.append(_fill_row(row, res, cfg, v))
    return rows
