"""Two-mode (cavity + mechanics) parameters and closed-form backaction algebra.

All rates and frequencies are angular (rad/s).  The pump sits at a detuning
``Delta = Omega_m + delta`` above the cavity, i.e. ``delta`` is measured from
the upper motional sideband.

The linearized equations in the sideband-rotating frame act on ``(a*, b)``::

    d/dt a* = (i delta - kappa/2) a* + i g b
    d/dt b  = -Gamma_m/2 b - i g a*

and :func:`linear_eigenvalues` returns the exact spectrum of that drift
matrix.  The adiabatic self-energies are checked against it.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import hbar

TWO_PI = 2.0 * math.pi

#: smallest accepted Omega_m / kappa unless ``allow_unresolved`` is set
MIN_SIDEBAND_RESOLUTION = 10.0


class ParameterError(ValueError):
    """Raised for physically invalid parameter combinations."""


@dataclass(frozen=True)
class SystemParams:
    """Physical rates of the cavity + mechanics model (rad/s throughout).

    ``Gamma_m`` is the mechanical damping seen by the cavity, i.e. already
    including any auxiliary-mode sideband cooling (see
    :func:`effective_mechanical_damping`).
    """

    omega_c: float
    kappa_0: float
    kappa_ex: float
    Omega_m: float
    Gamma_m: float
    g0: float
    pump_detuning_delta: float = 0.0
    g: float = 0.0
    noise_quanta_cavity: float = 0.0
    noise_quanta_mech: float = 0.0
    allow_unresolved: bool = False

    def __post_init__(self):
        problems = []
        for name in ("kappa_0", "kappa_ex", "Gamma_m", "g0"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                problems.append(f"{name} must be > 0 (got {value!r})")
        for name in ("omega_c", "Omega_m"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                problems.append(f"{name} must be > 0 (got {value!r})")
        for name in ("g", "noise_quanta_cavity", "noise_quanta_mech"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                problems.append(f"{name} must be >= 0 (got {value!r})")
        if not np.isfinite(self.pump_detuning_delta):
            problems.append("pump_detuning_delta must be finite")
        if problems:
            raise ParameterError("; ".join(problems))

        if self.Omega_m <= self.Gamma_m:
            raise ParameterError(
                "mechanical quality factor Omega_m/Gamma_m must exceed 1 "
                f"(got {self.Omega_m / self.Gamma_m:.3g})"
            )
        if self.sideband_resolution < MIN_SIDEBAND_RESOLUTION and not self.allow_unresolved:
            raise ParameterError(
                "sideband resolution Omega_m/kappa = "
                f"{self.sideband_resolution:.3g} < {MIN_SIDEBAND_RESOLUTION:g}; "
                "the rotating-frame model requires a resolved sideband "
                "(set allow_unresolved to override)"
            )

    @property
    def kappa(self) -> float:
        """Total cavity energy decay rate."""
        return self.kappa_0 + self.kappa_ex

    @property
    def sideband_resolution(self) -> float:
        return self.Omega_m / self.kappa

    @property
    def pump_detuning(self) -> float:
        """Pump detuning from the cavity, ``Delta = Omega_m + delta``."""
        return self.Omega_m + self.pump_detuning_delta

    def with_g(self, g: float) -> "SystemParams":
        return replace(self, g=float(g))

    def with_cooperativity(self, C: float) -> "SystemParams":
        """Copy with ``g`` chosen so that :func:`cooperativity` returns ``C``."""
        if C < 0:
            raise ParameterError(f"cooperativity must be >= 0 (got {C})")
        return self.with_g(math.sqrt(C * self.kappa * self.Gamma_m) / 2.0)

    def with_pump_power(self, P_pump: float) -> "SystemParams":
        return self.with_g(pump_to_multiphoton_g(P_pump, self))


@dataclass(frozen=True)
class SelfEnergy:
    """Backaction-induced change of a mode's decay rate and frequency."""

    damping_shift: float
    frequency_shift: float


def default_device(**overrides) -> SystemParams:
    """Device from the experiment, with the cavity loss split evenly.

    Only the total ``kappa = Gamma_eff / 2.5`` is known, so ``kappa_0`` and
    ``kappa_ex`` default to half of it each.
    """
    gamma_eff = TWO_PI * 440e3
    kappa = gamma_eff / 2.5
    values = dict(
        omega_c=TWO_PI * 4.08e9,
        kappa_0=kappa / 2.0,
        kappa_ex=kappa / 2.0,
        Omega_m=TWO_PI * 6.5e6,
        Gamma_m=gamma_eff,
        g0=TWO_PI * 60.0,
        noise_quanta_cavity=1.0,
        noise_quanta_mech=1.0,
    )
    values.update(overrides)
    return SystemParams(**values)


# -- backaction algebra -----------------------------------------------------

def cooperativity(params: SystemParams) -> float:
    """Multiphoton cooperativity ``C = 4 g^2 / (kappa Gamma_m)``."""
    return 4.0 * params.g**2 / (params.kappa * params.Gamma_m)


def masing_threshold_g(params: SystemParams) -> float:
    """Coupling at which backaction anti-damping cancels the total cavity loss."""
    return math.sqrt(params.kappa * params.Gamma_m) / 2.0


def _self_energy(g: float, partner_rate: float, delta: float) -> complex:
    return g**2 / complex(partner_rate / 2.0, -delta)


def cavity_self_energy(params: SystemParams, delta: float | None = None) -> SelfEnergy:
    """Cavity shifts after adiabatically eliminating the (fast) mechanics.

    Valid for ``Gamma_m >> kappa``.  ``frequency_shift`` is the shift of the
    ``a*`` eigenvalue's imaginary part, i.e. the frame in which
    :func:`linear_eigenvalues` is written.
    """
    if delta is None:
        delta = params.pump_detuning_delta
    sigma = _self_energy(params.g, params.Gamma_m, delta)
    return SelfEnergy(-2.0 * sigma.real, -sigma.imag)


def mechanical_self_energy(params: SystemParams, delta: float | None = None) -> SelfEnergy:
    """Mechanical shifts after adiabatically eliminating the (fast) cavity.

    Valid for ``kappa >> Gamma_m``.  ``frequency_shift`` is the shift of the
    ``b`` eigenvalue's imaginary part; because the cavity is tracked through
    ``a*`` it carries the opposite sign to :func:`cavity_self_energy` under
    ``kappa <-> Gamma_m``.
    """
    if delta is None:
        delta = params.pump_detuning_delta
    sigma = _self_energy(params.g, params.kappa, delta)
    return SelfEnergy(-2.0 * sigma.real, sigma.imag)


def drift_matrix(params: SystemParams, delta: float | None = None) -> np.ndarray:
    """Linear drift matrix acting on ``(a*, b)``."""
    if delta is None:
        delta = params.pump_detuning_delta
    g = params.g
    return np.array(
        [[complex(-params.kappa / 2.0, delta), 1j * g],
         [-1j * g, -params.Gamma_m / 2.0]]
    )


def linear_eigenvalues(params: SystemParams, delta: float | None = None) -> tuple[complex, complex]:
    """Exact eigenvalues of :func:`drift_matrix`, largest real part first.

    Solved as a quadratic in the cancellation-free form so that the root
    passing through zero at ``C = 1`` is resolved to rounding error.
    """
    m = drift_matrix(params, delta)
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = cmath.sqrt(tr * tr - 4.0 * det)
    # roots of x^2 - tr x + det; pick the sign avoiding cancellation
    if (tr.conjugate() * disc).real >= 0:
        q = (tr + disc) / 2.0
    else:
        q = (tr - disc) / 2.0
    r1 = q
    r2 = det / q if q != 0 else tr - q
    return tuple(sorted((complex(r1), complex(r2)), key=lambda z: -z.real))


def cavity_like_eigenvalue(params: SystemParams, delta: float | None = None) -> complex:
    """Eigenvalue continuously connected to the bare cavity pole."""
    if delta is None:
        delta = params.pump_detuning_delta
    bare = complex(-params.kappa / 2.0, delta)
    return min(linear_eigenvalues(params, delta), key=lambda z: abs(z - bare))


def mechanics_like_eigenvalue(params: SystemParams, delta: float | None = None) -> complex:
    """Eigenvalue continuously connected to the bare mechanical pole."""
    bare = complex(-params.Gamma_m / 2.0, 0.0)
    return min(linear_eigenvalues(params, delta), key=lambda z: abs(z - bare))


def effective_mechanical_damping(Gamma_m: float, C_aux: float) -> float:
    """Mechanical damping after sideband cooling by an auxiliary mode."""
    if C_aux < 0:
        raise ParameterError(f"C_aux must be >= 0 (got {C_aux})")
    return Gamma_m * (1.0 + C_aux)


# -- pump calibration -------------------------------------------------------

def intracavity_pump_photons(P_pump: float, params: SystemParams) -> float:
    if P_pump < 0:
        raise ParameterError(f"pump power must be >= 0 (got {P_pump})")
    Delta = params.pump_detuning
    omega_pump = params.omega_c + Delta
    flux = P_pump / (hbar * omega_pump)
    return params.kappa_ex / ((params.kappa / 2.0) ** 2 + Delta**2) * flux


def pump_to_multiphoton_g(P_pump: float, params: SystemParams) -> float:
    """Pump-enhanced coupling ``g = g0 sqrt(n_pump)`` for a pump power in W."""
    return params.g0 * math.sqrt(intracavity_pump_photons(P_pump, params))


def pump_power_for_cooperativity(C: float, params: SystemParams) -> float:
    """Inverse of :func:`pump_to_multiphoton_g` expressed through ``C``."""
    if C < 0:
        raise ParameterError(f"cooperativity must be >= 0 (got {C})")
    n = C * params.kappa * params.Gamma_m / (4.0 * params.g0**2)
    Delta = params.pump_detuning
    omega_pump = params.omega_c + Delta
    flux = n * ((params.kappa / 2.0) ** 2 + Delta**2) / params.kappa_ex
    return flux * hbar * omega_pump


def pump_amplitude_for_cooperativity(C: float, params: SystemParams) -> float:
    """Drive amplitude in sqrt(photons/s) that produces cooperativity ``C``."""
    P = pump_power_for_cooperativity(C, params)
    return math.sqrt(P / (hbar * (params.omega_c + params.pump_detuning)))


def dbm_to_watts(p_dbm):
    """Convert dBm to W (scalars or arrays)."""
    out = 1e-3 * np.power(10.0, np.asarray(p_dbm, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def watts_to_dbm(p_watts):
    """Convert W to dBm (scalars or arrays)."""
    p = np.asarray(p_watts, dtype=float)
    if np.any(p <= 0):
        raise ValueError("power must be > 0 to express in dBm")
    out = 10.0 * np.log10(p / 1e-3)
    return float(out) if out.ndim == 0 else out
