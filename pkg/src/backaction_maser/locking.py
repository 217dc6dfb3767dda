"""Injection locking: Adler phase model, lock detection and Arnold tongues.

The relative phase of maser and injected tone obeys::

    dphi/dt = -(omega_inj - omega_mas) - (locking_range / 2) sin(phi)

which locks iff ``|omega_inj - omega_mas| <= locking_range / 2`` and otherwise
slips at the mean rate ``sqrt(detuning^2 - (locking_range/2)^2)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import ComplexTrajectory, DriveSpec, Frame, limit_cycle_summary, simulate_nonlinear
from .model import SystemParams
from .spectral import baseband, derive_seed, emission_peak_power, welch_psd

#: a locked phase must stay inside a band narrower than this (rad)
MAX_LOCKED_EXCURSION = math.pi
#: locked mean drift must stay below this fraction of the locking range
MAX_LOCKED_DRIFT = 0.01
DISCARD_FRACTION = 0.25


@dataclass(frozen=True)
class AdlerParams:
    detuning: float
    locking_range: float
    phi0: float = 0.0

    def __post_init__(self):
        if not self.locking_range >= 0:
            raise ValueError(f"locking_range must be >= 0 (got {self.locking_range})")


@dataclass
class LockResult:
    """Outcome of a lock test; exactly one of the two optionals is set.

    ``beat_frequency`` is signed: observed tone frequency minus the injected
    one, in rad/s.
    """

    locked: bool
    locked_phase: float | None = None
    beat_frequency: float | None = None
    diagnostics: dict = field(default_factory=dict)


def integrate_adler(p: AdlerParams, duration: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 solution of the Adler equation; returns ``(t, phi)`` with phi unwrapped."""
    fastest = max(abs(p.detuning), p.locking_range)
    if not dt > 0 or dt * fastest > 0.05:
        raise ValueError(f"step too large: dt * max(|detuning|, locking_range) = {dt * fastest:.3g} > 0.05")
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError("duration must cover at least one step")
    phi = _kernels.adler_rk4(float(p.phi0), n, float(dt), float(p.detuning), p.locking_range / 2.0)
    return dt * np.arange(n + 1), phi


def locked_phase(p: AdlerParams) -> float | None:
    """Stable fixed point of the Adler equation, or ``None`` if unlocked."""
    if p.locking_range == 0 or abs(p.detuning) > p.locking_range / 2.0:
        return None
    return math.asin(max(-1.0, min(1.0, -2.0 * p.detuning / p.locking_range)))


def adler_beat_frequency(p: AdlerParams) -> float:
    """Mean phase-slip rate magnitude (zero inside the locking range)."""
    return math.sqrt(max(p.detuning**2 - (p.locking_range / 2.0) ** 2, 0.0))


def locking_range(kappa_ex: float, alpha: float, P_inj: float, P_mas: float) -> float:
    """Full locking range ``2 kappa_ex sqrt(alpha P_inj / P_mas)``."""
    if not P_mas > 0:
        raise ValueError(f"maser power must be > 0 (got {P_mas})")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1] (got {alpha})")
    if P_inj < 0:
        raise ValueError(f"injected power must be >= 0 (got {P_inj})")
    return 2.0 * kappa_ex * math.sqrt(alpha * P_inj / P_mas)


def mean_slip_rate(t: np.ndarray, phi: np.ndarray) -> float:
    """Average d(phi)/dt, measured over a whole number of 2 pi slips when possible."""
    total = phi[-1] - phi[0]
    slips = int(abs(total) // (2 * math.pi))
    if slips < 2:
        return float(np.polyfit(t - t[0], phi, 1)[0])
    sign = 1.0 if total > 0 else -1.0
    target = 2 * math.pi * slips
    progress = sign * (phi - phi[0])
    k = int(np.argmax(progress >= target))
    # linear interpolation of the crossing time
    t_cross = t[k - 1] + (target - progress[k - 1]) / (progress[k] - progress[k - 1]) * (t[k] - t[k - 1])
    return float(sign * target / (t_cross - t[0]))


def classify_phase(t: np.ndarray, phi: np.ndarray, reference_range: float | None) -> LockResult:
    """Locked iff the phase stays within a pi-wide band and does not drift.

    The drift limit is 1% of ``reference_range``; with no reference only
    the excursion test applies.
    """
    excursion = float(np.ptp(phi))
    drift = mean_slip_rate(t, phi)
    drift_limit = None if reference_range is None else MAX_LOCKED_DRIFT * reference_range
    diagnostics = {
        "excursion": excursion,
        "drift_rate": drift,
        "drift_limit": drift_limit,
        "max_excursion": MAX_LOCKED_EXCURSION,
        "phase_variance": float(np.var(phi)),
        "window": float(t[-1] - t[0]),
    }
    locked = excursion < MAX_LOCKED_EXCURSION
    if drift_limit is not None:
        locked = locked and abs(drift) < drift_limit
    if locked:
        mean_phase = float(np.angle(np.mean(np.exp(1j * phi))))
        return LockResult(True, locked_phase=mean_phase, diagnostics=diagnostics)
    return LockResult(False, beat_frequency=drift, diagnostics=diagnostics)


def classify_adler(p: AdlerParams, duration: float, dt: float,
                   discard: float = DISCARD_FRACTION) -> LockResult:
    t, phi = integrate_adler(p, duration, dt)
    start = int(len(t) * discard)
    return classify_phase(t[start:], phi[start:], p.locking_range)


def _auto_decimation(traj: ComplexTrajectory, injected_detuning: float) -> int:
    if traj.frame is not Frame.PUMP or injected_detuning == 0:
        return 1
    # pass band well inside the gap between the maser and the pump at zero frequency
    q = math.ceil(2 * math.pi / (abs(injected_detuning) * traj.dt))
    if q > 10:
        q = 10 * math.ceil(q / 10)
    return max(1, q)


def demodulated_phase(traj: ComplexTrajectory, frequency: float, discard: float = DISCARD_FRACTION,
                      decimation: int | None = None):
    """Phase of the emitted field relative to a tone at ``frequency``.

    Returns ``(t, phase, envelope)`` over the analysis window after the
    first ``discard`` fraction of the run.
    """
    if decimation is None:
        decimation = _auto_decimation(traj, frequency)
    start = int(len(traj) * discard)
    emitted = -traj.a_samples[start:]
    y, dt_dec = baseband(emitted, traj.dt, frequency, decimation)
    # drop filter edge samples
    edge = min(8, y.size // 8)
    y = y[edge: y.size - edge]
    if y.size < 16:
        raise ValueError("trajectory too short for the lock analysis window")
    t = traj.t0 + start * traj.dt + dt_dec * (edge + np.arange(y.size))
    return t, np.unwrap(np.angle(y)), y


def detect_lock(traj: ComplexTrajectory, injected_detuning: float | None = None,
                locking_range_ref: float | None = None, discard: float = DISCARD_FRACTION,
                decimation: int | None = None) -> LockResult:
    """Decide whether the emitted tone follows the injected one.

    The emitted field is demodulated at the injected frequency.  Without an
    explicit ``locking_range_ref`` the analytic range is estimated from the
    recorded injection amplitude and the demodulated emission amplitude, so
    a run without injection is never reported as locked.
    """
    drive = traj.drive or DriveSpec()
    if injected_detuning is None:
        injected_detuning = drive.injected_detuning
    t, phase, y = demodulated_phase(traj, injected_detuning, discard, decimation)
    if locking_range_ref is None and traj.params is not None:
        amplitude = float(np.mean(np.abs(y)))
        locking_range_ref = (2 * math.sqrt(traj.params.kappa_ex) * drive.injected_amplitude / amplitude
                             if amplitude > 0 else 0.0)
    result = classify_phase(t, phase, locking_range_ref)
    result.diagnostics["reference_range"] = locking_range_ref
    result.diagnostics["decimation"] = decimation or _auto_decimation(traj, injected_detuning)
    return result


def residual_phase_variance(traj: ComplexTrajectory, frequency: float,
                            discard: float = DISCARD_FRACTION, detrend: bool = False) -> float:
    """Variance of the demodulated phase, optionally after removing a linear trend."""
    t, phase, _ = demodulated_phase(traj, frequency, discard)
    if detrend:
        phase = phase - np.polyval(np.polyfit(t - t[0], phase, 1), t - t[0])
    return float(np.var(phase))


# -- free-running reference and tongue mapping --------------------------------

@dataclass
class MaserReference:
    """Free-running maser measured in the pump-rotating frame."""

    frequency: float
    amplitude: float
    power: float
    final_state: tuple[complex, complex]
    meta: dict = field(default_factory=dict)


def measure_free_running(params: SystemParams, pump_amplitude: float, duration: float,
                         seed: int, dt: float | None = None, segment_len: int = 1024) -> MaserReference:
    """Run the unperturbed maser; power comes from :func:`emission_peak_power`."""
    traj = simulate_nonlinear(params, DriveSpec(), pump_amplitude, duration=duration, dt=dt, seed=seed)
    amplitude, frequency = limit_cycle_summary(traj)
    tail = traj.tail(0.5)
    q = _auto_decimation(tail, frequency)
    y, dt_dec = baseband(-math.sqrt(params.kappa_ex) * tail.a_samples, tail.dt, frequency, q)
    spec = welch_psd(y, dt_dec, min(segment_len, y.size))
    power = emission_peak_power(spec, band=(-spec.resolution_bandwidth * 8, spec.resolution_bandwidth * 8))
    return MaserReference(frequency, amplitude, power,
                          (complex(traj.a_samples[-1]), complex(traj.b_samples[-1])),
                          meta={"rbw": spec.resolution_bandwidth, "kappa_ex_amplitude_sq":
                                params.kappa_ex * amplitude**2})


@dataclass
class TonguePoint:
    P_inj: float
    detuning: float
    result: LockResult | None
    error: str = ""

    @property
    def locked(self) -> bool:
        return bool(self.result is not None and self.result.locked)


@dataclass
class TongueResult:
    reference: MaserReference
    powers: list
    points: list  # one list of grid TonguePoints per power
    refined: list  # bisection TonguePoints per power
    lower: np.ndarray
    upper: np.ndarray
    slope: float
    intercept: float
    analytic_half_range: np.ndarray

    @property
    def half_width(self) -> np.ndarray:
        return (self.upper - self.lower) / 2.0

    def locked_grid(self) -> np.ndarray:
        return np.array([[pt.locked for pt in row] for row in self.points])


def lock_point(params: SystemParams, pump_amplitude: float, reference: MaserReference,
               P_inj: float, detuning: float, duration: float, seed: int,
               alpha: float = 1.0, dt: float | None = None) -> TonguePoint:
    """Simulate one injected run starting from the free-running state."""
    try:
        drive = DriveSpec(math.sqrt(alpha * P_inj), reference.frequency + detuning)
        a0, b0 = reference.final_state
        traj = simulate_nonlinear(params, drive, pump_amplitude, duration=duration, dt=dt,
                                  seed=seed, a0=a0, b0=b0)
        if traj.diverged:
            return TonguePoint(P_inj, detuning, None, "trajectory diverged")
        ref = locking_range(params.kappa_ex, alpha, P_inj, reference.power)
        return TonguePoint(P_inj, detuning, detect_lock(traj, locking_range_ref=ref))
    except (ValueError, RuntimeError) as exc:
        return TonguePoint(P_inj, detuning, None, str(exc))


def _lock_point_star(args):
    return lock_point(*args)


def _run_points(tasks, jobs):
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_lock_point_star, tasks))
    return [_lock_point_star(t) for t in tasks]


def point_duration(half_range: float, cycles: float = 60.0, minimum: float = 1e-3) -> float:
    """Run length long enough to resolve slips just outside a tongue."""
    if half_range <= 0:
        return minimum
    return max(minimum, cycles / half_range)


def _band_edges(detunings, flags):
    """Outermost locked detunings of the band containing the smallest |detuning|."""
    order = np.argsort(detunings)
    d = np.asarray(detunings)[order]
    f = np.asarray(flags)[order]
    k = int(np.argmin(np.abs(d)))
    if not f[k]:
        return None
    lo = k
    while lo > 0 and f[lo - 1]:
        lo -= 1
    hi = k
    while hi < d.size - 1 and f[hi + 1]:
        hi += 1
    below = d[lo - 1] if lo > 0 else None
    above = d[hi + 1] if hi < d.size - 1 else None
    return d[lo], d[hi], below, above


def arnold_tongue(params: SystemParams, pump_amplitude: float, P_inj_grid, detuning_grid,
                  relative: bool = True, alpha: float = 1.0, reference_duration: float = 4e-4,
                  cycles: float = 60.0, min_duration: float = 1e-3, refine: int = 0,
                  seed: int = 0, jobs: int = 1, dt: float | None = None,
                  reference: MaserReference | None = None) -> TongueResult:
    """Map locked/unlocked points over injected power and detuning.

    With ``relative`` the detuning grid is in units of each power's analytic
    half-range (zero power borrows the smallest nonzero one).  The band
    boundary per power is the outermost locked detuning, optionally refined
    by ``refine`` bisection steps toward the first unlocked neighbour.
    A precomputed free-running ``reference`` skips the reference run.
    """
    if reference is None:
        reference = measure_free_running(params, pump_amplitude, reference_duration, seed, dt=dt)
    powers = [float(p) for p in P_inj_grid]
    half = np.array([locking_range(params.kappa_ex, alpha, P, reference.power) / 2 for P in powers])
    nonzero = half[half > 0]
    fallback = nonzero.min() if nonzero.size else params.kappa_ex * 1e-2

    tasks, index = [], []
    for i, P in enumerate(powers):
        scale = (half[i] if half[i] > 0 else fallback) if relative else 1.0
        duration = point_duration(half[i] if half[i] > 0 else fallback, cycles, min_duration)
        for j, d in enumerate(detuning_grid):
            tasks.append((params, pump_amplitude, reference, P, float(d) * scale, duration,
                          derive_seed(seed, i * 100003 + j), alpha, dt))
            index.append((i, j))
    results = _run_points(tasks, jobs)
    points = [[None] * len(detuning_grid) for _ in powers]
    for (i, j), pt in zip(index, results):
        points[i][j] = pt

    refined = [[] for _ in powers]
    lower = np.zeros(len(powers))
    upper = np.zeros(len(powers))
    counter = len(detuning_grid)
    for i, P in enumerate(powers):
        row = points[i]
        edges = _band_edges([pt.detuning for pt in row], [pt.locked for pt in row])
        if edges is None:
            continue
        lo, hi, below, above = edges
        duration = point_duration(half[i] if half[i] > 0 else fallback, cycles, min_duration)
        for side, inside, outside in (("lo", lo, below), ("hi", hi, above)):
            if outside is None:
                continue
            for _ in range(refine):
                mid = 0.5 * (inside + outside)
                counter += 1
                pt = lock_point(params, pump_amplitude, reference, P, mid, duration,
                                derive_seed(seed, i * 100003 + counter), alpha, dt)
                refined[i].append(pt)
                if pt.locked:
                    inside = mid
                else:
                    outside = mid
            if side == "lo":
                lo = inside
            else:
                hi = inside
        lower[i], upper[i] = lo, hi

    widths = (upper - lower) / 2
    ok = np.array([P > 0 for P in powers]) & (widths > 0)
    if ok.sum() >= 2:
        slope, intercept = np.polyfit(np.log10(np.asarray(powers)[ok]), np.log10(widths[ok]), 1)
    else:
        slope = intercept = float("nan")
    return TongueResult(reference, powers, points, refined, lower, upper, float(slope), float(intercept), half)
