import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.constants import hbar
from scipy.optimize import brentq

from backaction_maser.model import (
    ParameterError, SystemParams, cavity_like_eigenvalue, cavity_self_energy, cooperativity,
    dbm_to_watts, drift_matrix, effective_mechanical_damping, intracavity_pump_photons,
    linear_eigenvalues, masing_threshold_g, mechanical_self_energy, mechanics_like_eigenvalue,
    default_device, pump_amplitude_for_cooperativity, pump_power_for_cooperativity,
    pump_to_multiphoton_g, watts_to_dbm)

TWO_PI = 2 * math.pi
KAPPA = TWO_PI * 176e3
GAMMA = TWO_PI * 440e3


def params(kappa=KAPPA, gamma=GAMMA, g=0.0, delta=0.0, omega_m=None):
    if omega_m is None:
        omega_m = max(20 * kappa, 2 * gamma, TWO_PI * 6.5e6)
    return SystemParams(omega_c=TWO_PI * 4.08e9, kappa_0=kappa / 2, kappa_ex=kappa / 2,
                        Omega_m=omega_m, Gamma_m=gamma, g0=TWO_PI * 60,
                        pump_detuning_delta=delta, g=g)


def eig_oracle(p, delta=None):
    """Eigenvalues from LAPACK, sorted by decreasing real part."""
    vals = np.linalg.eigvals(drift_matrix(p, delta))
    return sorted(vals, key=lambda z: -z.real)


# -- parameters ----------------------------------------------------------------

def test_kappa_is_sum_of_losses():
    p = default_device()
    assert p.kappa == p.kappa_0 + p.kappa_ex
    assert math.isclose(p.kappa, TWO_PI * 176e3, rel_tol=1e-12)


@pytest.mark.parametrize("field", ["kappa_0", "kappa_ex", "Gamma_m", "g0"])
def test_nonpositive_rates_rejected(field):
    with pytest.raises(ParameterError, match=field):
        default_device(**{field: 0.0})


def test_quality_factor_below_one_rejected():
    with pytest.raises(ParameterError, match="quality factor"):
        default_device(Gamma_m=TWO_PI * 7e6)


def test_unresolved_sideband_needs_override():
    kappa = TWO_PI * 6.5e6 / 5
    with pytest.raises(ParameterError, match="sideband resolution"):
        default_device(kappa_0=kappa / 2, kappa_ex=kappa / 2)
    p = default_device(kappa_0=kappa / 2, kappa_ex=kappa / 2, allow_unresolved=True)
    assert math.isclose(p.sideband_resolution, 5.0)


# -- cooperativity and threshold -------------------------------------------------

def test_zero_coupling_zero_cooperativity():
    assert cooperativity(params(g=0.0)) == 0.0


def test_threshold_coupling_for_device_rates():
    g_th = masing_threshold_g(params())
    assert math.isclose(g_th / TWO_PI, 139.14e3, rel_tol=1e-4)
    assert math.isclose(cooperativity(params(g=g_th)), 1.0, rel_tol=1e-12)
    # independent check: root of the largest real part in g
    root = brentq(lambda g: max(z.real for z in eig_oracle(params(g=g))), 0.5 * g_th, 2 * g_th,
                  xtol=1e-6)
    assert math.isclose(root, g_th, rel_tol=1e-9)


def test_threshold_identity_exact():
    assert math.isclose(masing_threshold_g(params()) ** 2 * 4 / (KAPPA * GAMMA), 1.0,
                        rel_tol=1e-14)


def test_threshold_vanishes_with_kappa():
    assert masing_threshold_g(params(kappa=1e-6 * KAPPA)) < 1e-2 * masing_threshold_g(params())


def test_doubling_g_quadruples_cooperativity():
    g = TWO_PI * 50e3
    assert math.isclose(cooperativity(params(g=2 * g)), 4 * cooperativity(params(g=g)),
                        rel_tol=1e-14)


def test_with_cooperativity_round_trip(device):
    for C in (0.0, 0.3, 1.0, 2.7):
        assert math.isclose(cooperativity(device.with_cooperativity(C)), C, abs_tol=1e-15)
    with pytest.raises(ParameterError):
        device.with_cooperativity(-0.1)


# -- eigenvalues -----------------------------------------------------------------

def test_decoupled_eigenvalues():
    lam = linear_eigenvalues(params())
    assert np.allclose(sorted(z.real for z in lam), sorted([-KAPPA / 2, -GAMMA / 2]), rtol=1e-14)
    assert all(abs(z.imag) < 1e-9 for z in lam)


def test_eigenvalues_against_characteristic_polynomial():
    p = SystemParams(omega_c=1e4, kappa_0=0.5, kappa_ex=0.5, Omega_m=100.0, Gamma_m=10.0,
                     g0=1e-3, g=1.0)
    hi, lo = linear_eigenvalues(p)
    expected = (-11 / 4 + math.sqrt(81 / 16 + 1), -11 / 4 - math.sqrt(81 / 16 + 1))
    assert math.isclose(hi.real, expected[0], rel_tol=1e-12)
    assert math.isclose(lo.real, expected[1], rel_tol=1e-12)
    assert math.isclose(hi.real, -0.28776, rel_tol=1e-4)
    assert math.isclose(lo.real, -5.21224, rel_tol=1e-5)


def test_eigenvalues_match_lapack_off_sideband():
    p = params(g=TWO_PI * 80e3, delta=TWO_PI * 120e3)
    ours = linear_eigenvalues(p)
    ref = eig_oracle(p)
    assert np.allclose(ours, ref, rtol=1e-12, atol=1e-9 * KAPPA)


def test_max_real_part_zero_at_threshold():
    p = params().with_cooperativity(1.0)
    assert abs(linear_eigenvalues(p)[0].real) < 1e-12 * p.kappa


def test_mode_identification(device):
    p = device.with_cooperativity(0.3)
    cav = cavity_like_eigenvalue(p)
    mech = mechanics_like_eigenvalue(p)
    assert cav != mech
    assert abs(cav + p.kappa / 2) < abs(cav + p.Gamma_m / 2)


valid_rates = st.floats(min_value=TWO_PI * 1e3, max_value=TWO_PI * 1e6)


@given(kappa=valid_rates, gamma=valid_rates, C=st.floats(min_value=0.0, max_value=3.0))
def test_threshold_identity_property(kappa, gamma, C):
    p = params(kappa=kappa, gamma=gamma).with_cooperativity(C)
    top = linear_eigenvalues(p)[0].real
    tol = 1e-9 * kappa
    if abs(C - 1.0) < 1e-9:
        assert abs(top) < tol
    elif C < 1:
        assert top < 0
    else:
        assert top > 0


@given(kappa=valid_rates, gamma=valid_rates)
def test_threshold_exact_property(kappa, gamma):
    p = params(kappa=kappa, gamma=gamma).with_cooperativity(1.0)
    assert abs(linear_eigenvalues(p)[0].real) < 1e-9 * kappa


# -- self-energies -----------------------------------------------------------------

def test_cavity_self_energy_on_sideband():
    p = params(g=TWO_PI * 100e3)
    se = cavity_self_energy(p, 0.0)
    assert math.isclose(se.damping_shift, -4 * p.g**2 / p.Gamma_m, rel_tol=1e-14)
    assert math.isclose(se.damping_shift, -p.kappa * cooperativity(p), rel_tol=1e-14)
    assert se.frequency_shift == 0.0


def test_self_energies_vanish_without_coupling():
    p = params()
    for se in (cavity_self_energy(p, 1e5), mechanical_self_energy(p, 1e5)):
        assert (se.damping_shift, se.frequency_shift) == (0.0, 0.0)


def test_cavity_self_energy_half_linewidth_detuning():
    kappa = TWO_PI * 4.4e3
    p = params(kappa=kappa).with_cooperativity(0.5)
    delta = p.Gamma_m / 2
    se = cavity_self_energy(p, delta)
    assert math.isclose(se.damping_shift, -2 * p.g**2 / p.Gamma_m, rel_tol=1e-12)
    half = p.Gamma_m / 2
    assert math.isclose(abs(se.frequency_shift), p.g**2 * half / (half**2 + delta**2),
                        rel_tol=1e-12)
    # eigenvalue oracle at Gamma_m / kappa = 100
    lam = cavity_like_eigenvalue(p, delta)
    assert math.isclose(-2 * lam.real, p.kappa + se.damping_shift, rel_tol=0.02)
    assert math.isclose(lam.imag - delta, se.frequency_shift, rel_tol=0.02)


def test_mechanical_self_energy_threshold():
    p = params().with_cooperativity(1.0)
    assert math.isclose(mechanical_self_energy(p, 0.0).damping_shift, -p.Gamma_m, rel_tol=1e-14)


def test_mechanical_self_energy_matches_eigenvalue_braginsky_regime():
    kappa = TWO_PI * 176e3
    p = params(kappa=kappa, gamma=kappa / 100).with_cooperativity(0.5)
    se = mechanical_self_energy(p, 0.0)
    lam = mechanics_like_eigenvalue(p, 0.0)
    assert math.isclose(-2 * lam.real, p.Gamma_m + se.damping_shift, rel_tol=0.02)


def test_mechanical_frequency_shift_sign_pinned_by_eigenvalue():
    kappa = TWO_PI * 176e3
    delta = kappa / 3
    p = params(kappa=kappa, gamma=kappa / 200, delta=delta).with_cooperativity(0.4)
    se = mechanical_self_energy(p, delta)
    lam = mechanics_like_eigenvalue(p, delta)
    assert math.isclose(lam.imag, se.frequency_shift, rel_tol=0.02)


@given(ratio=st.floats(min_value=10, max_value=1000), C=st.floats(min_value=0, max_value=0.9))
def test_adiabatic_agreement_property(ratio, C):
    kappa = TWO_PI * 10e3
    p = params(kappa=kappa, gamma=ratio * kappa).with_cooperativity(C)
    exact = -2 * cavity_like_eigenvalue(p, 0.0).real
    approx = p.kappa + cavity_self_energy(p, 0.0).damping_shift
    assert abs(exact - approx) / exact <= 3 / ratio


@given(delta=st.floats(min_value=-3e6, max_value=3e6), g=st.floats(min_value=0, max_value=1e6))
def test_self_energy_parity(delta, g):
    p = params(g=g)
    for fn in (cavity_self_energy, mechanical_self_energy):
        plus, minus = fn(p, delta), fn(p, -delta)
        assert plus.damping_shift == minus.damping_shift
        assert plus.frequency_shift == -minus.frequency_shift


@given(delta=st.floats(min_value=-3e6, max_value=3e6), C=st.floats(min_value=0, max_value=2))
def test_self_energy_swap_symmetry(delta, C):
    p = params().with_cooperativity(C)
    swapped = params(kappa=p.Gamma_m, gamma=p.kappa, g=p.g, omega_m=TWO_PI * 20e6)
    cav = cavity_self_energy(p, delta)
    mech = mechanical_self_energy(swapped, delta)
    assert math.isclose(cav.damping_shift, mech.damping_shift, rel_tol=1e-12, abs_tol=1e-12)
    # frequencies agree in magnitude; the a* frame flips the cavity sign
    assert math.isclose(cav.frequency_shift, -mech.frequency_shift, rel_tol=1e-12, abs_tol=1e-12)


# -- auxiliary damping ---------------------------------------------------------------

def test_effective_damping():
    assert effective_mechanical_damping(GAMMA, 0.0) == GAMMA
    assert math.isclose(effective_mechanical_damping(TWO_PI * 100, 4399), TWO_PI * 440e3,
                        rel_tol=1e-12)
    assert math.isclose(effective_mechanical_damping(TWO_PI * 100, 4399) / KAPPA, 2.5,
                        rel_tol=1e-12)
    with pytest.raises(ParameterError):
        effective_mechanical_damping(GAMMA, -1.0)


# -- pump calibration -----------------------------------------------------------------

def test_zero_pump_zero_coupling(device):
    assert pump_to_multiphoton_g(0.0, device) == 0.0
    with pytest.raises(ParameterError):
        intracavity_pump_photons(-1e-9, device)


def test_doubling_pump_power(device):
    P = 3e-8
    g1 = pump_to_multiphoton_g(P, device)
    g2 = pump_to_multiphoton_g(2 * P, device)
    assert math.isclose(g2, math.sqrt(2) * g1, rel_tol=1e-12)
    k1 = cavity_self_energy(device.with_g(g1), 0).damping_shift
    k2 = cavity_self_energy(device.with_g(g2), 0).damping_shift
    assert math.isclose(k2, 2 * k1, rel_tol=1e-12)


def test_threshold_pump_power(device):
    P = pump_power_for_cooperativity(1.0, device)
    # hand inversion of the input-output relation
    n = device.kappa * device.Gamma_m / (4 * device.g0**2)
    Delta = device.Omega_m
    flux = n * ((device.kappa / 2) ** 2 + Delta**2) / device.kappa_ex
    expected = flux * hbar * (device.omega_c + Delta)
    assert math.isclose(P, expected, rel_tol=1e-12)
    assert math.isclose(cooperativity(device.with_pump_power(P)), 1.0, rel_tol=1e-12)
    assert 1e-9 < P < 1e-6


def test_pump_amplitude_is_photon_flux_root(device):
    s = pump_amplitude_for_cooperativity(1.5, device)
    P = pump_power_for_cooperativity(1.5, device)
    assert math.isclose(s**2 * hbar * (device.omega_c + device.Omega_m), P, rel_tol=1e-12)


def test_damping_linear_in_pump_power(device):
    powers = np.linspace(0, 1e-7, 11)
    shifts = [cavity_self_energy(device.with_pump_power(P), 0).damping_shift for P in powers]
    slope, intercept = np.polyfit(powers, shifts, 1)
    assert np.allclose(shifts, slope * powers + intercept, rtol=1e-10, atol=1e-9 * device.kappa)
    assert abs(intercept) < 1e-9 * device.kappa


# -- unit conversion --------------------------------------------------------------------

def test_dbm_conversions():
    assert math.isclose(dbm_to_watts(0.0), 1e-3, rel_tol=1e-15)
    assert math.isclose(dbm_to_watts(-30.0), 1e-6, rel_tol=1e-15)
    arr = dbm_to_watts([-40.0, 10.0])
    assert np.allclose(arr, [1e-7, 1e-2], rtol=1e-15)
    with pytest.raises(ValueError):
        watts_to_dbm(0.0)


@given(st.floats(min_value=-200, max_value=60))
def test_dbm_round_trip(p):
    assert math.isclose(watts_to_dbm(dbm_to_watts(p)), p, rel_tol=1e-12, abs_tol=1e-12)
