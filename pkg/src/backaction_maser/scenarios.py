"""Named experiments driven by a :class:`~backaction_maser.config.ScenarioConfig`.

Every scenario writes its CSV files, ``summary.json`` and ``run.log`` into
one output directory.  Detunings in outputs are physical, i.e. injected
minus free-running frequency in Hz; internally the pump-rotating frame
counts frequencies with the opposite sign.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.constants import hbar

from .config import ScenarioConfig
from .dynamics import (DriveSpec, NoLimitCycleError, limit_cycle_summary, output_field,
                       simulate_linear, simulate_nonlinear, write_trajectory_csv)
from .locking import (TonguePoint, _band_edges, arnold_tongue, detect_lock, locking_range,
                      measure_free_running, point_duration)
from .model import (cavity_like_eigenvalue, dbm_to_watts,
                    pump_amplitude_for_cooperativity, pump_power_for_cooperativity)
from .spectral import (baseband, derive_seed, emission_peak_power, linewidth_vs_cooperativity,
                       welch_psd)

log = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
MAX_FAILED_FRACTION = 0.2
#: longest single injected run; bounds memory at roughly 200 MB per trajectory
MAX_POINT_DURATION = 5e-3
MASING_DURATION = 2e-3
SINGLE_RUN_DURATION = 4e-4
# decimation factors for emission spectra at the default step of 0.04 / Omega_m
MASING_DECIMATION = 100
INJECTION_DECIMATION = 1000
SPECTRUM_SEGMENT = 1024
MAX_TRAJECTORY_ROWS = 20000

CSV_COLUMNS = {
    "linewidth_narrowing": {
        "linewidth.csv": ("cooperativity", "fwhm_hz", "target_fwhm_hz", "eigen_fwhm_hz",
                          "center_hz", "area", "offset_per_hz", "residual_rms", "rbw_hz",
                          "segments", "parseval_error", "error"),
        "spectrum_NN.csv": ("freq_hz", "psd_per_hz"),
    },
    "masing_threshold": {
        "masing.csv": ("cooperativity", "peak_power", "peak_power_db", "tone_frequency_hz",
                       "tone_amplitude", "stationary", "parseval_error", "error"),
        "spectrum_NN.csv": ("freq_hz", "psd_per_hz"),
    },
    "injection_power_sweep": {
        "power_sweep.csv": ("p_inj", "p_inj_ratio", "detuning_hz", "locked", "beat_or_phase",
                            "error"),
        "spectrum_NN.csv": ("freq_hz", "psd_per_hz"),
    },
    "injection_frequency_sweep": {
        "frequency_sweep.csv": ("p_inj", "detuning_hz", "detuning_rel", "locked",
                                "beat_or_phase", "error"),
        "spectrum_NN.csv": ("freq_hz", "psd_per_hz"),
    },
    "arnold_tongue": {
        "tongue.csv": ("p_inj", "p_inj_ratio", "detuning_hz", "detuning_rel", "locked",
                       "beat_or_phase", "refined", "error"),
        "boundary.csv": ("p_inj", "p_inj_ratio", "lower_hz", "upper_hz", "half_width_hz",
                         "analytic_half_width_hz"),
    },
    "single_run": {
        "trajectory.csv": ("t", "re_a", "im_a", "re_b", "im_b"),
        "spectrum.csv": ("freq_hz", "psd_per_hz"),
    },
}


class ScenarioError(RuntimeError):
    """The scenario could not be carried out (as opposed to a failed check)."""


@dataclass
class ScenarioResult:
    scenario: str
    summary: dict
    output_dir: Path
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed"))


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_clean(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class _Run:
    """Output bookkeeping shared by all scenarios."""

    def __init__(self, cfg: ScenarioConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.files: list[str] = []
        self.checks: dict = {}
        self.results: dict = {}
        self.total_points = 0
        self.failed_points = 0

    def csv(self, name, header, rows):
        with open(self.out / name, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        self.files.append(name)

    def spectrum(self, name, spec):
        spec.to_csv(self.out / name)
        self.files.append(name)

    def check(self, name, passed, value, requirement):
        passed = bool(passed)
        self.checks[name] = {"passed": passed, "value": value, "requirement": requirement}
        log.info("check %s: %s (value %s; requires %s)", name, "PASS" if passed else "FAIL",
                 _fmt(value), requirement)

    def points(self, total, failed):
        self.total_points += total
        self.failed_points += failed
        if total and failed / total > MAX_FAILED_FRACTION:
            raise ScenarioError(f"{failed} of {total} points failed (limit "
                                f"{MAX_FAILED_FRACTION:.0%})")


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _emission_spectrum(traj, center, decimation, segment_len=SPECTRUM_SEGMENT):
    """Spectrum of the output field around ``center`` with the pump removed."""
    out = output_field(traj)
    out = out - out.mean()
    y, dt_dec = baseband(out, traj.dt, center, decimation)
    return welch_psd(y, dt_dec, min(segment_len, y.size))


# -- linewidth narrowing -------------------------------------------------------

def _linewidth_narrowing(run: _Run):
    cfg = run.cfg
    params = cfg.system
    if cfg.sim.duration is not None:
        log.info("sim.duration is ignored here; record length follows sim.segments")
    rows, trend = linewidth_vs_cooperativity(params, cfg.sweep["cooperativities"], dt=cfg.sim.dt,
                                             segments=cfg.sim.segments, seed=cfg.sim.seed)
    table, errors, parseval = [], [], []
    for i, row in enumerate(rows):
        p = params.with_cooperativity(row.cooperativity)
        target = params.kappa * (1 - row.cooperativity)
        eigen = -2 * cavity_like_eigenvalue(p).real
        fit = row.fit
        spec = row.spectrum
        if spec is not None:
            run.spectrum(f"spectrum_{i:02d}.csv", spec)
            parseval.append(spec.parseval_error)
        if not row.error:
            errors.append(abs(row.fwhm / target - 1))
        log.info("C=%.3g fwhm=%.6g Hz target=%.6g Hz %s", row.cooperativity, row.fwhm / TWO_PI,
                 target / TWO_PI, row.error)
        table.append((row.cooperativity, row.fwhm / TWO_PI, target / TWO_PI, eigen / TWO_PI,
                      fit.center / TWO_PI if fit else None, fit.area if fit else None,
                      fit.offset * TWO_PI if fit else None, fit.residual_rms if fit else None,
                      spec.resolution_bandwidth / TWO_PI if spec else None,
                      spec.segments if spec else None, spec.parseval_error if spec else None,
                      row.error))
    run.csv("linewidth.csv", CSV_COLUMNS["linewidth_narrowing"]["linewidth.csv"], table)
    run.points(len(rows), sum(bool(r.error) for r in rows))

    run.results.update({
        "slope_hz_per_unit_c": trend["slope"] / TWO_PI,
        "intercept_hz": trend["intercept"] / TWO_PI,
        "threshold_C": trend["threshold_C"],
        "kappa_hz": params.kappa / TWO_PI,
        "threshold_pump_power_w": pump_power_for_cooperativity(1.0, params),
    })
    worst = max(errors) if len(errors) == len(rows) else float("inf")
    run.check("fwhm_matches_kappa_1_minus_c", worst <= 0.05, worst,
              "|fwhm / (kappa (1 - C)) - 1| <= 0.05 at every C")
    run.check("threshold_extrapolation", abs(trend["threshold_C"] - 1) <= 0.05,
              trend["threshold_C"], "zero crossing of fitted fwhm vs C within 1 +- 0.05")
    run.check("parseval", bool(parseval) and max(parseval) <= 0.01,
              max(parseval) if parseval else None, "relative Parseval error <= 0.01 per spectrum")


# -- masing threshold ----------------------------------------------------------

def _masing_threshold(run: _Run):
    cfg = run.cfg
    params = cfg.system
    duration = cfg.sim.duration or MASING_DURATION
    band = (-5 * params.kappa, 5 * params.kappa)
    table, records = [], []
    for i, C in enumerate(cfg.sweep["cooperativities"]):
        rec = {"C": C, "error": "", "stationary": False, "power": float("nan"),
               "frequency": float("nan"), "amplitude": float("nan"), "parseval": float("nan")}
        try:
            s = pump_amplitude_for_cooperativity(C, params)
            traj = simulate_nonlinear(params, DriveSpec(), s, duration=duration, dt=cfg.sim.dt,
                                      seed=derive_seed(cfg.sim.seed, i))
            if traj.diverged:
                raise ScenarioError("trajectory diverged")
            try:
                rec["amplitude"], rec["frequency"] = limit_cycle_summary(traj)
                rec["stationary"] = True
            except NoLimitCycleError as exc:
                log.info("C=%.3g: %s", C, exc)
            spec = _emission_spectrum(traj.tail(0.5), params.pump_detuning, MASING_DECIMATION)
            run.spectrum(f"spectrum_{i:02d}.csv", spec)
            rec["power"] = emission_peak_power(spec, band)
            rec["parseval"] = spec.parseval_error
        except (ValueError, RuntimeError) as exc:
            rec["error"] = str(exc)
        records.append(rec)
        db = 10 * math.log10(rec["power"]) if rec["power"] > 0 else float("nan")
        log.info("C=%.3g peak power=%.6g (%.2f dB) stationary=%s %s", C, rec["power"], db,
                 rec["stationary"], rec["error"])
        table.append((C, rec["power"], db, rec["frequency"] / TWO_PI, rec["amplitude"],
                      rec["stationary"], rec["parseval"], rec["error"]))
    run.csv("masing.csv", CSV_COLUMNS["masing_threshold"]["masing.csv"], table)
    run.points(len(records), sum(bool(r["error"]) for r in records))

    ok = [r for r in records if not r["error"]]
    below = [r for r in ok if r["C"] < 1]
    above = [r for r in ok if r["C"] > 1]
    jump = float("nan")
    if below and above:
        lo = max(below, key=lambda r: r["C"])
        hi = min(above, key=lambda r: r["C"])
        jump = 10 * math.log10(hi["power"] / lo["power"])
    run.results.update({
        "emission_jump_db": jump,
        "threshold_pump_power_w": pump_power_for_cooperativity(1.0, params),
        "points": [{"cooperativity": r["C"], "peak_power": r["power"],
                    "tone_frequency_hz": r["frequency"] / TWO_PI,
                    "stationary": r["stationary"]} for r in records],
    })
    run.check("emission_jump", jump >= 30, jump, "peak power jump across C = 1 >= 30 dB")
    run.check("stationary_above_threshold", bool(above) and all(r["stationary"] for r in above),
              [r["C"] for r in above if r["stationary"]], "every C > 1 point has a stationary tone")
    parseval = [r["parseval"] for r in ok]
    run.check("parseval", bool(parseval) and max(parseval) <= 0.01,
              max(parseval) if parseval else None, "relative Parseval error <= 0.01 per spectrum")


# -- injection scenarios ---------------------------------------------------------

def _injection_point(args):
    """One injected run; returns the lock verdict and the emission spectrum."""
    params, s, reference, P_inj, detuning, duration, seed, alpha, dt = args
    try:
        drive = DriveSpec(math.sqrt(alpha * P_inj), reference.frequency + detuning)
        a0, b0 = reference.final_state
        traj = simulate_nonlinear(params, drive, s, duration=duration, dt=dt, seed=seed,
                                  a0=a0, b0=b0)
        if traj.diverged:
            return TonguePoint(P_inj, detuning, None, "trajectory diverged"), None
        ref = locking_range(params.kappa_ex, alpha, P_inj, reference.power)
        result = detect_lock(traj, locking_range_ref=ref)
        spec = _emission_spectrum(traj.tail(0.75), reference.frequency, INJECTION_DECIMATION)
        return TonguePoint(P_inj, detuning, result), spec
    except (ValueError, RuntimeError) as exc:
        return TonguePoint(P_inj, detuning, None, str(exc)), None


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _maser(run: _Run):
    cfg = run.cfg
    params = cfg.system
    C = cfg.sweep["cooperativity"]
    s = pump_amplitude_for_cooperativity(C, params)
    reference = measure_free_running(params, s, cfg.sim.reference_duration, cfg.sim.seed,
                                     dt=cfg.sim.dt)
    run.results["free_running"] = {
        "cooperativity": C,
        "frequency_hz": reference.frequency / TWO_PI,
        "amplitude": reference.amplitude,
        "power": reference.power,
    }
    log.info("free-running maser: frequency %.6g Hz (frame), emitted power %.6g photons/s",
             reference.frequency / TWO_PI, reference.power)
    return s, reference


def _injected_powers(run: _Run, reference, key="p_inj_ratios"):
    """Injected photon fluxes and their ratios to the free-running power."""
    sweep = run.cfg.sweep
    if sweep.get("p_inj_dbm"):
        omega = run.cfg.system.omega_c
        powers = [float(dbm_to_watts(x)) / (hbar * omega) for x in sweep["p_inj_dbm"]]
        return powers, [p / reference.power for p in powers]
    ratios = [float(r) for r in sweep[key]]
    return [r * reference.power for r in ratios], ratios


def _beat_or_phase(pt: TonguePoint):
    if pt.result is None:
        return None
    if pt.result.locked:
        return pt.result.locked_phase
    # frame beat frequency, reported physically in Hz
    return -pt.result.beat_frequency / TWO_PI


def _point_duration(cfg, half_range, fallback):
    if cfg.sim.duration is not None:
        return cfg.sim.duration
    r = half_range if half_range > 0 else fallback
    return min(MAX_POINT_DURATION, point_duration(r, cfg.sim.cycles, cfg.sim.min_duration))


def _injection_power_sweep(run: _Run):
    cfg = run.cfg
    params = cfg.system
    alpha = cfg.sweep["alpha"]
    s, reference = _maser(run)
    powers, ratios = _injected_powers(run, reference)
    detuning = -TWO_PI * cfg.sweep["injection_detuning_hz"]
    fallback = params.kappa_ex * 1e-2
    tasks = []
    for i, P in enumerate(powers):
        half = locking_range(params.kappa_ex, alpha, P, reference.power) / 2
        tasks.append((params, s, reference, P, detuning, _point_duration(cfg, half, fallback),
                      derive_seed(cfg.sim.seed, i + 1), alpha, cfg.sim.dt))
    outcomes = _map(_injection_point, tasks, cfg.sim.jobs)
    table = []
    for i, ((pt, spec), ratio) in enumerate(zip(outcomes, ratios)):
        if spec is not None:
            run.spectrum(f"spectrum_{i:02d}.csv", spec)
        log.info("P_inj/P_mas=%.4g locked=%s %s", ratio, pt.locked, pt.error)
        table.append((pt.P_inj, ratio, cfg.sweep["injection_detuning_hz"], pt.locked,
                      _beat_or_phase(pt), pt.error))
    run.csv("power_sweep.csv", CSV_COLUMNS["injection_power_sweep"]["power_sweep.csv"], table)
    run.points(len(outcomes), sum(bool(pt.error) for pt, _ in outcomes))

    order = np.argsort(powers)
    flags = [outcomes[k][0].locked for k in order]
    first = next((k for k, f in enumerate(flags) if f), None)
    monotone = first is None or all(flags[first:])
    onset = ratios[order[first]] if first is not None else None
    formula_onset = (detuning / params.kappa_ex) ** 2 / alpha
    run.results.update({
        "lock_onset_ratio": onset,
        "formula_onset_ratio": formula_onset,
        "injection_detuning_hz": cfg.sweep["injection_detuning_hz"],
    })
    run.check("monotone_lock_onset", monotone, onset,
              "once locked, every stronger injection stays locked")


def _injection_frequency_sweep(run: _Run):
    cfg = run.cfg
    params = cfg.system
    alpha = cfg.sweep["alpha"]
    s, reference = _maser(run)
    ratio = cfg.sweep["p_inj_ratio"]
    P = ratio * reference.power
    half = locking_range(params.kappa_ex, alpha, P, reference.power) / 2
    if cfg.sweep["detuning_mode"] == "relative":
        frame = [-x * half for x in cfg.sweep["detunings"]]
    else:
        frame = [-TWO_PI * x for x in cfg.sweep["detunings"]]
    duration = _point_duration(cfg, half, params.kappa_ex * 1e-2)
    tasks = [(params, s, reference, P, d, duration, derive_seed(cfg.sim.seed, i + 1), alpha,
              cfg.sim.dt) for i, d in enumerate(frame)]
    outcomes = _map(_injection_point, tasks, cfg.sim.jobs)
    table = []
    for i, (pt, spec) in enumerate(outcomes):
        if spec is not None:
            run.spectrum(f"spectrum_{i:02d}.csv", spec)
        phys = -pt.detuning / TWO_PI
        log.info("detuning=%.6g Hz locked=%s %s", phys, pt.locked, pt.error)
        table.append((P, phys, -pt.detuning / half if half > 0 else None, pt.locked,
                      _beat_or_phase(pt), pt.error))
    run.csv("frequency_sweep.csv",
            CSV_COLUMNS["injection_frequency_sweep"]["frequency_sweep.csv"], table)
    run.points(len(outcomes), sum(bool(pt.error) for pt, _ in outcomes))

    phys = np.array([-pt.detuning for pt, _ in outcomes])
    flags = np.array([pt.locked for pt, _ in outcomes])
    edges = _band_edges(phys, flags)
    contiguous = edges is not None and int(flags.sum()) == int(
        np.sum((phys >= edges[0]) & (phys <= edges[1])))
    bounded = edges is not None and edges[2] is not None and edges[3] is not None
    measured = (edges[1] - edges[0]) / 2 if edges is not None else float("nan")
    run.results.update({
        "p_inj": P,
        "p_inj_ratio": ratio,
        "band_lower_hz": edges[0] / TWO_PI if edges is not None else None,
        "band_upper_hz": edges[1] / TWO_PI if edges is not None else None,
        "half_width_hz": measured / TWO_PI,
        "analytic_half_width_hz": half / TWO_PI,
        "half_width_over_formula": measured / half if half > 0 else None,
    })
    run.check("locked_at_zero_detuning", edges is not None, edges is not None,
              "the grid point nearest zero detuning is locked")
    run.check("single_locked_band", contiguous, int(flags.sum()),
              "locked points form one contiguous band")
    run.check("band_bounded", bounded, bounded, "unlocked points on both sides of the band")


def _arnold_tongue(run: _Run):
    cfg = run.cfg
    params = cfg.system
    alpha = cfg.sweep["alpha"]
    s, reference = _maser(run)
    powers, ratios = _injected_powers(run, reference)
    relative = cfg.sweep["detuning_mode"] == "relative"
    # relative grids are symmetric in sign; absolute ones are given physically
    grid = [(-x if not relative else x) for x in cfg.sweep["detunings"]]
    if not relative:
        grid = [TWO_PI * x for x in grid]
    duration_kw = {"cycles": cfg.sim.cycles, "min_duration": cfg.sim.min_duration}
    tongue = arnold_tongue(params, s, powers, grid, relative=relative, alpha=alpha,
                           refine=int(cfg.sweep["refine"]), seed=cfg.sim.seed, jobs=cfg.sim.jobs,
                           dt=cfg.sim.dt, reference=reference, **duration_kw)
    half = tongue.analytic_half_range
    nonzero = half[half > 0]
    scale_fallback = nonzero.min() if nonzero.size else None
    table, n_points, n_failed = [], 0, 0
    for i, (P, ratio) in enumerate(zip(powers, ratios)):
        scale = half[i] if half[i] > 0 else scale_fallback
        for refined, pts in ((False, tongue.points[i]), (True, tongue.refined[i])):
            for pt in pts:
                n_points += 1
                n_failed += bool(pt.error)
                table.append((P, ratio, -pt.detuning / TWO_PI,
                              -pt.detuning / scale if scale else None, pt.locked,
                              _beat_or_phase(pt), refined, pt.error))
    run.csv("tongue.csv", CSV_COLUMNS["arnold_tongue"]["tongue.csv"], table)
    boundary = []
    for i, (P, ratio) in enumerate(zip(powers, ratios)):
        # + 0.0 keeps an empty band from printing as -0.0
        lower, upper = -tongue.upper[i] + 0.0, -tongue.lower[i] + 0.0
        boundary.append((P, ratio, lower / TWO_PI, upper / TWO_PI,
                         (upper - lower) / 2 / TWO_PI, half[i] / TWO_PI))
        log.info("P_inj/P_mas=%.4g band [%.6g, %.6g] Hz analytic half-width %.6g Hz", ratio,
                 lower / TWO_PI, upper / TWO_PI, half[i] / TWO_PI)
    run.csv("boundary.csv", CSV_COLUMNS["arnold_tongue"]["boundary.csv"], boundary)
    run.points(n_points, n_failed)

    widths = tongue.half_width
    fitted = [r for r, P, w in zip(ratios, powers, widths) if P > 0 and w > 0]
    decades = math.log10(max(fitted) / min(fitted)) if len(fitted) >= 2 else 0.0
    zero_rows = [i for i, P in enumerate(powers) if P == 0]
    zero_locked = any(pt.locked for i in zero_rows for pt in tongue.points[i])
    bounded = True
    for i, P in enumerate(powers):
        if P > 0:
            edges = _band_edges([pt.detuning for pt in tongue.points[i]],
                                [pt.locked for pt in tongue.points[i]])
            bounded &= edges is not None and edges[2] is not None and edges[3] is not None
    run.results.update({
        "slope": tongue.slope,
        "intercept": tongue.intercept,
        "decades": decades,
        "half_width_hz": [w / TWO_PI for w in widths],
        "analytic_half_width_hz": [h / TWO_PI for h in half],
        "p_inj_ratios": ratios,
    })
    run.check("boundary_slope", 0.45 <= tongue.slope <= 0.55, tongue.slope,
              "log-log slope of half-width vs P_inj in [0.45, 0.55]")
    run.check("power_span", decades >= 1.5 - 1e-9, decades,
              "slope fitted over >= 1.5 decades of injected power")
    run.check("zero_power_unlocked", not zero_locked, len(zero_rows),
              "a zero-power row is nowhere locked")
    run.check("tongue_bounded", bounded, bounded,
              "every nonzero power has unlocked grid points on both sides of its band")


# -- single run ------------------------------------------------------------------

def _single_run(run: _Run):
    cfg = run.cfg
    params = cfg.system
    C = cfg.sweep["cooperativity"]
    duration = cfg.sim.duration or SINGLE_RUN_DURATION
    if cfg.sweep["model"] == "linear":
        p = params.with_cooperativity(C)
        traj = simulate_linear(p, DriveSpec(), duration=duration,
                               dt=cfg.sim.dt or 0.04 / max(p.kappa, p.Gamma_m), seed=cfg.sim.seed)
        center, decimation = 0.0, 1
    else:
        s = pump_amplitude_for_cooperativity(C, params)
        traj = simulate_nonlinear(params, DriveSpec(), s, duration=duration, dt=cfg.sim.dt,
                                  seed=cfg.sim.seed)
        center, decimation = params.pump_detuning, MASING_DECIMATION
    every = max(1, math.ceil(len(traj) / MAX_TRAJECTORY_ROWS))
    write_trajectory_csv(traj, run.out / "trajectory.csv", every=every)
    run.files.append("trajectory.csv")
    run.points(1, int(traj.diverged))
    run.results.update({
        "model": cfg.sweep["model"],
        "cooperativity": C,
        "samples": len(traj),
        "trajectory_stride": every,
        "mean_cavity_photons": float(np.mean(np.abs(traj.a_samples) ** 2)),
        "diverged": traj.diverged,
    })
    run.check("finite_trajectory", not traj.diverged, not traj.diverged, "trajectory stays finite")
    if traj.diverged:
        return
    spec = _emission_spectrum(traj.tail(0.5), center, decimation)
    run.spectrum("spectrum.csv", spec)
    try:
        amplitude, frequency = limit_cycle_summary(traj)
        run.results["limit_cycle"] = {"amplitude": amplitude, "frequency_hz": frequency / TWO_PI}
    except NoLimitCycleError as exc:
        run.results["limit_cycle"] = None
        log.info("%s", exc)
    run.check("parseval", spec.parseval_error <= 0.01, spec.parseval_error,
              "relative Parseval error <= 0.01")


SCENARIO_RUNNERS = {
    "linewidth_narrowing": _linewidth_narrowing,
    "masing_threshold": _masing_threshold,
    "injection_power_sweep": _injection_power_sweep,
    "injection_frequency_sweep": _injection_frequency_sweep,
    "arnold_tongue": _arnold_tongue,
    "single_run": _single_run,
}


def run_scenario(cfg: ScenarioConfig, output_dir=None) -> ScenarioResult:
    """Execute ``cfg.scenario`` and write CSVs, ``summary.json`` and ``run.log``.

    Raises :class:`ScenarioError` when the scenario cannot be completed,
    including when more than 20% of its grid points fail.  Failed built-in
    checks are reported in the summary, not raised.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ScenarioError(f"cannot create output directory {out}: {exc.strerror}") from exc
    run = _Run(cfg, out)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    package_log = logging.getLogger("backaction_maser")
    previous_level = package_log.level
    package_log.addHandler(handler)
    package_log.setLevel(logging.INFO)
    try:
        log.info("scenario %s, seed %d", cfg.scenario, cfg.sim.seed)
        log.info("kappa = %.6g Hz, Gamma_m = %.6g Hz, Omega_m/kappa = %.4g",
                 cfg.system.kappa / TWO_PI, cfg.system.Gamma_m / TWO_PI,
                 cfg.system.sideband_resolution)
        SCENARIO_RUNNERS[cfg.scenario](run)
        passed = all(c["passed"] for c in run.checks.values())
        log.info("scenario %s: %s", cfg.scenario, "all checks passed" if passed else "checks failed")
    except ScenarioError as exc:
        log.error("%s", exc)
        raise
    finally:
        package_log.removeHandler(handler)
        package_log.setLevel(previous_level)
        handler.close()
    summary = _clean({
        "scenario": cfg.scenario,
        "seed": cfg.sim.seed,
        "config": cfg.effective,
        "results": run.results,
        "checks": run.checks,
        "points": {"total": run.total_points, "failed": run.failed_points},
        "passed": passed,
    })
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files = sorted(run.files + ["summary.json", "run.log"])
    return ScenarioResult(cfg.scenario, summary, out, files)
