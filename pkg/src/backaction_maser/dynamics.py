"""Stochastic coupled-mode integrators and trajectory containers.

Two frames are used:

``sideband-rotating``
    Linearized equations, both envelopes slow.  The cavity is integrated as
    ``a*`` (see :mod:`backaction_maser.model`) and stored as ``a``.
``pump-rotating``
    Full classical equations with the mechanics kept at ``Omega_m``::

        da/dt = (i Delta - kappa/2) a + i g0 a (b + b*)
                + sqrt(kappa_ex) (s_pump + s_inj exp(i nu_inj t)) + xi_a
        db/dt = (-i Omega_m - Gamma_m/2) b + i g0 |a|^2 + xi_b

Frequencies of tones in a frame follow ``exp(+i nu t)``.  Noise ``xi`` is
complex white with ``<xi(t) xi*(t')> = N r delta(t - t')``, ``N`` the noise
quanta and ``r`` the mode's energy decay rate, so an uncoupled mode settles
at ``<|a|^2> = N``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .model import SystemParams, cooperativity

#: dt * (fastest rate) must stay below this
STABILITY_BOUND = 0.05
OVERFLOW_GUARD = 1e12
_CHUNK = 1 << 17


class Frame(str, enum.Enum):
    SIDEBAND = "sideband-rotating"
    PUMP = "pump-rotating"


class FrameError(ValueError):
    pass


class NoLimitCycleError(RuntimeError):
    pass


@dataclass(frozen=True)
class DriveSpec:
    """Injected tone and noise strengths.

    ``injected_amplitude`` is in sqrt(photons/s) at the coupling port and
    ``injected_detuning`` is the tone's angular frequency in the simulation
    frame.  ``None`` noise fields fall back to the values on
    :class:`SystemParams`.
    """

    injected_amplitude: float = 0.0
    injected_detuning: float = 0.0
    noise_quanta_cavity: float | None = None
    noise_quanta_mech: float | None = None

    def __post_init__(self):
        for name in ("injected_amplitude", "noise_quanta_cavity", "noise_quanta_mech"):
            value = getattr(self, name)
            if value is not None and not value >= 0:
                raise ValueError(f"{name} must be >= 0 (got {value!r})")

    def noise(self, params: SystemParams) -> tuple[float, float]:
        nc = params.noise_quanta_cavity if self.noise_quanta_cavity is None else self.noise_quanta_cavity
        nm = params.noise_quanta_mech if self.noise_quanta_mech is None else self.noise_quanta_mech
        return float(nc), float(nm)

    def injected(self, t):
        return self.injected_amplitude * np.exp(1j * self.injected_detuning * np.asarray(t))


@dataclass(frozen=True, eq=False)
class ComplexTrajectory:
    """Sampled complex envelopes ``a`` (cavity) and ``b`` (mechanics)."""

    dt: float
    t0: float
    a_samples: np.ndarray
    b_samples: np.ndarray
    seed: int
    frame: Frame
    diverged: bool = False
    max_rate: float = 0.0
    params: SystemParams | None = None
    drive: DriveSpec | None = None
    pump_amplitude: float = 0.0
    method: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.a_samples, dtype=complex)
        b = np.asarray(self.b_samples, dtype=complex)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("a_samples and b_samples must be 1-D and equally long")
        if a.size < 2:
            raise ValueError("a trajectory needs at least two samples")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0 (got {self.dt})")
        if self.dt * self.max_rate > STABILITY_BOUND * (1 + 1e-12):
            raise ValueError(
                f"dt * max rate = {self.dt * self.max_rate:.3g} exceeds {STABILITY_BOUND}"
            )
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a_samples", a)
        object.__setattr__(self, "b_samples", b)
        object.__setattr__(self, "frame", Frame(self.frame))

    def __len__(self):
        return self.a_samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def duration(self) -> float:
        return self.dt * (len(self) - 1)

    def tail(self, fraction: float) -> "ComplexTrajectory":
        """The trailing ``fraction`` of the samples (at least two)."""
        n = len(self)
        start = min(n - 2, int(round(n * (1.0 - fraction))))
        return ComplexTrajectory(
            self.dt, self.t0 + start * self.dt, self.a_samples[start:],
            self.b_samples[start:], self.seed, self.frame, self.diverged,
            self.max_rate, self.params, self.drive, self.pump_amplitude,
            self.method, dict(self.meta),
        )


def _noise_increments(rng, nc, rate_c, nm, rate_m, dt, m):
    """Complex Wiener increments with E|dW|^2 = N r dt."""
    if nc == 0 and nm == 0:
        empty = np.empty(0, dtype=complex)
        return empty, empty
    z = rng.standard_normal((4, m))
    sc = math.sqrt(nc * rate_c * dt / 2.0)
    sm = math.sqrt(nm * rate_m * dt / 2.0)
    return sc * (z[0] + 1j * z[1]), sm * (z[2] + 1j * z[3])


def _step_count(duration, dt):
    if not dt > 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError("duration must cover at least one step")
    return n


def _pick_method(method, noisy, default_noisy):
    if method in (None, "auto"):
        return default_noisy if noisy else "rk4"
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown integration method {method!r}")
    return method


def simulate_linear(params: SystemParams, drive: DriveSpec | None = None,
                    duration: float = 1e-4, dt: float = 1e-8, seed: int = 0,
                    a0: complex = 0.0, b0: complex = 0.0,
                    method: str | None = None) -> ComplexTrajectory:
    """Integrate the linearized equations in the sideband-rotating frame.

    Stochastic runs use Euler-Maruyama, noiseless runs classical RK4
    (override with ``method``).  Above threshold the overflow guard may
    trip; the trajectory is then truncated and flagged ``diverged``.
    """
    drive = drive or DriveSpec()
    n = _step_count(duration, dt)
    max_rate = max(params.kappa, params.Gamma_m, params.g, abs(params.pump_detuning_delta),
                   abs(drive.injected_detuning))
    if dt * max_rate > STABILITY_BOUND:
        raise ValueError(f"dt too large: dt * max rate = {dt * max_rate:.3g} > {STABILITY_BOUND}")

    nc, nm = drive.noise(params)
    noisy = (nc > 0 or nm > 0)
    method = _pick_method(method, noisy, "euler")
    m = np.array([[complex(-params.kappa / 2, params.pump_detuning_delta), 1j * params.g],
                  [-1j * params.g, -params.Gamma_m / 2]])

    x = np.empty(n + 1, dtype=complex)
    y = np.empty(n + 1, dtype=complex)
    x[0] = np.conj(a0)
    y[0] = b0
    rng = np.random.default_rng(seed)
    done = 0
    written = n
    while done < n:
        m_steps = min(_CHUNK, n - done)
        wx, wy = _noise_increments(rng, nc, params.kappa, nm, params.Gamma_m, dt, m_steps)
        got = _kernels.linear_steps(
            x, y, done, m_steps, done * dt, dt, m[0, 0], m[0, 1], m[1, 0], m[1, 1],
            drive.injected_amplitude, drive.injected_detuning, math.sqrt(params.kappa_ex),
            wx, wy, method == "rk4", OVERFLOW_GUARD)
        if got < m_steps:
            written = done + got
            break
        done += m_steps
    diverged = written < n
    end = max(written + 1, 2)
    return ComplexTrajectory(dt, 0.0, np.conj(x[:end]), y[:end], seed, Frame.SIDEBAND,
                             diverged=diverged, max_rate=max_rate, params=params,
                             drive=drive, method=method,
                             meta={"cooperativity": cooperativity(params)})


def pump_steady_state(params: SystemParams, pump_amplitude: float) -> complex:
    """Intracavity pump field of the uncoupled cavity."""
    return math.sqrt(params.kappa_ex) * pump_amplitude / complex(params.kappa / 2, -params.pump_detuning)


def simulate_nonlinear(params: SystemParams, drive: DriveSpec | None = None,
                       pump_amplitude: float = 0.0, duration: float = 1e-4,
                       dt: float | None = None, seed: int = 0,
                       a0: complex | None = None, b0: complex | None = None,
                       method: str | None = None) -> ComplexTrajectory:
    """Integrate the full optomechanical equations in the pump-rotating frame.

    ``params.g`` is ignored here: the coupling follows from ``g0`` and the
    pump field.  By default the run starts from the uncoupled pump steady
    state, so noise (or an explicit ``a0``/``b0``) seeds any instability.
    Noisy runs use RK4 for the drift plus additive Wiener increments.
    """
    drive = drive or DriveSpec()
    if pump_amplitude < 0:
        raise ValueError("pump_amplitude must be >= 0")
    if dt is None:
        dt = 0.04 / params.Omega_m
    n = _step_count(duration, dt)
    Delta = params.pump_detuning
    alpha = pump_steady_state(params, pump_amplitude)
    g_eff = params.g0 * abs(alpha)
    max_rate = max(params.kappa, params.Gamma_m, g_eff, abs(params.pump_detuning_delta),
                   params.Omega_m, abs(Delta), abs(drive.injected_detuning))
    if dt * params.Omega_m > STABILITY_BOUND or dt * max_rate > STABILITY_BOUND:
        raise ValueError(f"dt must resolve the mechanics: dt * max rate = {dt * max_rate:.3g}")

    nc, nm = drive.noise(params)
    method = _pick_method(method, nc > 0 or nm > 0, "rk4")
    if a0 is None:
        a0 = alpha
    if b0 is None:
        b0 = 1j * params.g0 * abs(alpha) ** 2 / complex(params.Gamma_m / 2, params.Omega_m)

    a = np.empty(n + 1, dtype=complex)
    b = np.empty(n + 1, dtype=complex)
    a[0] = a0
    b[0] = b0
    rng = np.random.default_rng(seed)
    done = 0
    written = n
    while done < n:
        m_steps = min(_CHUNK, n - done)
        wa, wb = _noise_increments(rng, nc, params.kappa, nm, params.Gamma_m, dt, m_steps)
        got = _kernels.nonlinear_steps(
            a, b, done, m_steps, done * dt, dt, Delta, params.kappa / 2, params.Omega_m,
            params.Gamma_m / 2, params.g0, math.sqrt(params.kappa_ex), complex(pump_amplitude),
            drive.injected_amplitude, drive.injected_detuning, wa, wb,
            method == "rk4", OVERFLOW_GUARD)
        if got < m_steps:
            written = done + got
            break
        done += m_steps
    end = max(written + 1, 2)
    C = 4 * g_eff**2 / (params.kappa * params.Gamma_m)
    return ComplexTrajectory(dt, 0.0, a[:end], b[:end], seed, Frame.PUMP,
                             diverged=written < n, max_rate=max_rate, params=params,
                             drive=drive, pump_amplitude=pump_amplitude, method=method,
                             meta={"cooperativity": C})


def output_field(traj: ComplexTrajectory, params: SystemParams | None = None,
                 drive: DriveSpec | None = None,
                 pump_amplitude: float | None = None) -> np.ndarray:
    """Field leaving the coupling port, ``s_in - sqrt(kappa_ex) a``.

    The intracavity noise baths are internal and do not appear in ``s_in``.
    Arguments default to what the trajectory recorded; supplying values that
    disagree with the recording is an error.
    """
    if params is None:
        params = traj.params
    elif traj.params is not None and params != traj.params:
        raise FrameError("params differ from those the trajectory was simulated with")
    if params is None:
        raise ValueError("params are required for a trajectory without recorded parameters")
    if drive is None:
        drive = traj.drive or DriveSpec()
    elif traj.drive is not None and drive != traj.drive:
        raise FrameError("drive differs from the one the trajectory was simulated with")
    if pump_amplitude is None:
        pump_amplitude = traj.pump_amplitude
    if pump_amplitude and traj.frame is not Frame.PUMP:
        raise FrameError("a pump tone only exists in the pump-rotating frame")
    if traj.params is not None and pump_amplitude != traj.pump_amplitude:
        raise FrameError("pump amplitude differs from the recorded one")

    s_in = drive.injected(traj.times) + pump_amplitude
    return s_in - math.sqrt(params.kappa_ex) * traj.a_samples


def limit_cycle_summary(traj: ComplexTrajectory, drift_tolerance: float = 0.01) -> tuple[float, float]:
    """Mean amplitude and frequency of the cavity tone over the final half.

    In the pump-rotating frame the static pump component (the mean of ``a``)
    is removed first.  Raises :class:`NoLimitCycleError` if the mean
    amplitude differs by more than ``drift_tolerance`` between the last two
    quarters.
    """
    a = traj.a_samples
    n = a.size
    half = a[n // 2:]
    if traj.frame is Frame.PUMP:
        half = half - half.mean()
    amp = np.abs(half)
    q = amp.size // 2
    early, late = amp[:q].mean(), amp[q:].mean()
    if traj.diverged or not (late > 0) or abs(late - early) > drift_tolerance * late:
        raise NoLimitCycleError(
            f"no limit cycle: mean |a| moved from {early:.4g} to {late:.4g} between quarters"
        )
    phase = np.unwrap(np.angle(half))
    t = traj.dt * np.arange(half.size)
    slope = np.polyfit(t, phase, 1)[0]
    return float(amp.mean()), float(slope)


TRAJECTORY_COLUMNS = ("t", "re_a", "im_a", "re_b", "im_b")


def write_trajectory_csv(traj: ComplexTrajectory, path, every: int = 1) -> None:
    """Dump ``(t, Re a, Im a, Re b, Im b)`` rows, keeping every ``every``-th sample."""
    sl = slice(None, None, every)
    data = np.column_stack([traj.times[sl], traj.a_samples.real[sl], traj.a_samples.imag[sl],
                            traj.b_samples.real[sl], traj.b_samples.imag[sl]])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def read_trajectory_csv(path, frame=Frame.SIDEBAND, seed: int = 0) -> ComplexTrajectory:
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    return ComplexTrajectory(float(t[1] - t[0]), float(t[0]), data[:, 1] + 1j * data[:, 2],
                             data[:, 3] + 1j * data[:, 4], seed, frame)
