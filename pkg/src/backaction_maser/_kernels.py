"""Compiled inner loops for the coupled-mode integrators.

Each kernel advances ``n`` steps from a given state, writing samples
``1..n`` into the output arrays (index 0 holds the initial state) and returns
the number of samples actually written; a return value below ``n + 1``
means the overflow guard tripped.  Noise increments are pre-scaled complex
Wiener increments, or zero-length arrays for noiseless runs.
"""
import cmath

import numpy as np
from numba import njit


@njit(cache=True)
def _linear_rhs(t, x, y, m00, m01, m10, m11, inj_amp, inj_freq, sqrt_kex):
    # injection enters the a* equation conjugated
    drive = sqrt_kex * inj_amp * cmath.exp(-1j * inj_freq * t)
    return m00 * x + m01 * y + drive, m10 * x + m11 * y


@njit(cache=True)
def linear_steps(out_x, out_y, start, n, t0, dt, m00, m01, m10, m11,
                 inj_amp, inj_freq, sqrt_kex, noise_x, noise_y, use_rk4, guard):
    x = out_x[start]
    y = out_y[start]
    noisy = noise_x.shape[0] > 0
    for k in range(n):
        t = t0 + k * dt
        if use_rk4:
            k1x, k1y = _linear_rhs(t, x, y, m00, m01, m10, m11, inj_amp, inj_freq, sqrt_kex)
            k2x, k2y = _linear_rhs(t + 0.5 * dt, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y,
                                   m00, m01, m10, m11, inj_amp, inj_freq, sqrt_kex)
            k3x, k3y = _linear_rhs(t + 0.5 * dt, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y,
                                   m00, m01, m10, m11, inj_amp, inj_freq, sqrt_kex)
            k4x, k4y = _linear_rhs(t + dt, x + dt * k3x, y + dt * k3y,
                                   m00, m01, m10, m11, inj_amp, inj_freq, sqrt_kex)
            x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        else:
            fx, fy = _linear_rhs(t, x, y, m00, m01, m10, m11, inj_amp, inj_freq, sqrt_kex)
            x = x + dt * fx
            y = y + dt * fy
        if noisy:
            x += noise_x[k]
            y += noise_y[k]
        out_x[start + k + 1] = x
        out_y[start + k + 1] = y
        if not (abs(x) <= guard):
            return k + 1
    return n


@njit(cache=True)
def _nonlinear_rhs(t, a, b, Delta, half_kappa, Omega_m, half_gamma, g0,
                   sqrt_kex, pump, inj_amp, inj_freq):
    drive = sqrt_kex * (pump + inj_amp * cmath.exp(1j * inj_freq * t))
    da = (1j * Delta - half_kappa) * a + 1j * g0 * a * (2.0 * b.real) + drive
    db = (-1j * Omega_m - half_gamma) * b + 1j * g0 * (a.real * a.real + a.imag * a.imag)
    return da, db


@njit(cache=True)
def nonlinear_steps(out_a, out_b, start, n, t0, dt, Delta, half_kappa, Omega_m,
                    half_gamma, g0, sqrt_kex, pump, inj_amp, inj_freq,
                    noise_a, noise_b, use_rk4, guard):
    a = out_a[start]
    b = out_b[start]
    noisy = noise_a.shape[0] > 0
    for k in range(n):
        t = t0 + k * dt
        if use_rk4:
            k1a, k1b = _nonlinear_rhs(t, a, b, Delta, half_kappa, Omega_m, half_gamma,
                                      g0, sqrt_kex, pump, inj_amp, inj_freq)
            k2a, k2b = _nonlinear_rhs(t + 0.5 * dt, a + 0.5 * dt * k1a, b + 0.5 * dt * k1b,
                                      Delta, half_kappa, Omega_m, half_gamma,
                                      g0, sqrt_kex, pump, inj_amp, inj_freq)
            k3a, k3b = _nonlinear_rhs(t + 0.5 * dt, a + 0.5 * dt * k2a, b + 0.5 * dt * k2b,
                                      Delta, half_kappa, Omega_m, half_gamma,
                                      g0, sqrt_kex, pump, inj_amp, inj_freq)
            k4a, k4b = _nonlinear_rhs(t + dt, a + dt * k3a, b + dt * k3b,
                                      Delta, half_kappa, Omega_m, half_gamma,
                                      g0, sqrt_kex, pump, inj_amp, inj_freq)
            a = a + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            b = b + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        else:
            fa, fb = _nonlinear_rhs(t, a, b, Delta, half_kappa, Omega_m, half_gamma,
                                    g0, sqrt_kex, pump, inj_amp, inj_freq)
            a = a + dt * fa
            b = b + dt * fb
        if noisy:
            a += noise_a[k]
            b += noise_b[k]
        out_a[start + k + 1] = a
        out_b[start + k + 1] = b
        if not (abs(a) <= guard):
            return k + 1
    return n


@njit(cache=True)
def adler_rk4(phi0, n, dt, detuning, half_range):
    out = np.empty(n + 1)
    phi = phi0
    out[0] = phi
    for k in range(n):
        k1 = -detuning - half_range * np.sin(phi)
        k2 = -detuning - half_range * np.sin(phi + 0.5 * dt * k1)
        k3 = -detuning - half_range * np.sin(phi + 0.5 * dt * k2)
        k4 = -detuning - half_range * np.sin(phi + dt * k3)
        phi = phi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = phi
    return out
