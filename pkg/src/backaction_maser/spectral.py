"""Power spectra of complex envelopes and Lorentzian line fits.

Spectra are two-sided (the signals are complex envelopes) with angular
frequencies in rad/s and densities per rad/s, normalized so that
``sum(psd) * resolution_bandwidth`` equals the window-weighted mean-square
of the analyzed samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, signal as sps

from .dynamics import DriveSpec, output_field, simulate_linear
from .model import SystemParams, cavity_like_eigenvalue

PEAK_WINDOW_RBW = 3.0


class SpectrumError(ValueError):
    pass


class FitError(RuntimeError):
    """Lorentzian fit failed; ``best`` holds the best parameters reached."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Two-sided PSD over rad/s, fftshifted so ``freqs`` ascend.

    ``mean_square`` is the time-domain power with the estimator's own
    weighting (squared window over each analysed segment), so Parseval
    compares like with like; for a flat window without overlap it is the
    plain mean of ``|x|^2``.
    """

    freqs: np.ndarray
    psd: np.ndarray
    resolution_bandwidth: float
    total_power: float
    mean_square: float = float("nan")
    segments: int = 1
    window: str = "hann"

    @property
    def parseval_error(self) -> float:
        """Relative mismatch between integrated PSD and time-domain power."""
        return abs(self.total_power - self.mean_square) / self.mean_square

    def shifted(self, offset: float) -> "Spectrum":
        """Same spectrum with the frequency axis displaced by ``offset``."""
        return Spectrum(self.freqs + offset, self.psd, self.resolution_bandwidth,
                        self.total_power, self.mean_square, self.segments, self.window)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("freq_hz", "psd_per_hz"))
            for f, s in zip(self.freqs / (2 * math.pi), self.psd * (2 * math.pi)):
                writer.writerow((repr(float(f)), repr(float(s))))


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    fwhm: float
    area: float
    offset: float
    residual_rms: float
    iterations: int = 0
    n_points: int = 0

    def model(self, freqs):
        return lorentzian(freqs, self.center, self.fwhm, self.area, self.offset)


def lorentzian(freqs, center, fwhm, area, offset):
    """Flat floor plus a Lorentzian line whose integral over rad/s is ``area``."""
    hw = fwhm / 2.0
    return offset + (area / math.pi) * hw / ((np.asarray(freqs) - center) ** 2 + hw**2)


def welch_psd(signal, dt: float, segment_len: int, overlap: float = 0.5,
              window: str = "hann") -> Spectrum:
    x = np.asarray(signal, dtype=complex)
    if x.ndim != 1:
        raise SpectrumError("signal must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise SpectrumError("signal contains NaN or inf")
    segment_len = int(segment_len)
    if segment_len < 2 or segment_len > x.size:
        raise SpectrumError(f"signal of {x.size} samples is too short for segments of {segment_len}")
    if not 0 <= overlap < 1:
        raise SpectrumError("overlap must lie in [0, 1)")
    if window not in ("hann", "rect"):
        raise SpectrumError(f"unknown window {window!r}")

    noverlap = int(round(overlap * segment_len))
    step = segment_len - noverlap
    segments = 1 + (x.size - segment_len) // step
    used = x[: segment_len + (segments - 1) * step]
    win = "hann" if window == "hann" else "boxcar"
    f, p = sps.welch(used, fs=1.0 / dt, window=win, nperseg=segment_len, noverlap=noverlap,
                     detrend=False, return_onesided=False, scaling="density")
    f = np.fft.fftshift(f) * 2 * math.pi
    p = np.fft.fftshift(p) / (2 * math.pi)
    rbw = 2 * math.pi / (segment_len * dt)
    # time-domain power as the estimator weights it: window^2 over each segment
    w2 = sps.get_window(win, segment_len) ** 2
    starts = step * np.arange(segments)
    power = np.abs(used) ** 2
    weighted = sum(float(np.dot(w2, power[k:k + segment_len])) for k in starts)
    mean_square = weighted / (segments * float(w2.sum()))
    return Spectrum(f, p, rbw, float(p.sum() * rbw), mean_square, segments, window)


def _decimation_stages(factor):
    stages = []
    for f in range(10, 1, -1):
        while factor % f == 0:
            stages.append(f)
            factor //= f
    if factor > 13:
        raise ValueError(f"decimation factor has a prime factor {factor} above 13")
    if factor > 1:
        stages.append(factor)
    return stages


def baseband(signal, dt: float, center: float, factor: int) -> tuple[np.ndarray, float]:
    """Shift ``center`` to zero frequency, low-pass and decimate by ``factor``.

    Filtering is zero-phase FIR in stages of at most 10.
    """
    x = np.asarray(signal, dtype=complex)
    y = x * np.exp(-1j * center * dt * np.arange(x.size))
    for stage in _decimation_stages(int(factor)):
        y = sps.decimate(y, stage, ftype="fir", zero_phase=True)
    return y, dt * factor


def _initial_guess(f, p):
    n_edge = max(2, f.size // 10)
    offset = float(np.median(np.concatenate([p[:n_edge], p[-n_edge:]])))
    k = int(np.argmax(p))
    height = p[k] - offset
    half = offset + height / 2.0
    lo = k
    while lo > 0 and p[lo] > half:
        lo -= 1
    hi = k
    while hi < f.size - 1 and p[hi] > half:
        hi += 1
    df = f[1] - f[0]
    fwhm = max(f[hi] - f[lo], 2 * df)
    area = max(height, 0.0) * math.pi * fwhm / 2.0
    return f[k], fwhm, area, offset


def auto_fit_window(spec: Spectrum, span: float = 6.0) -> tuple[float, float]:
    """Window of ``span`` half-max widths either side of the tallest bin."""
    center, fwhm, _, _ = _initial_guess(spec.freqs, spec.psd)
    return center - span * fwhm, center + span * fwhm


def fit_lorentzian(spec: Spectrum, window: tuple[float, float] | None = None,
                   max_iterations: int = 200, xtol: float = 1e-8) -> LorentzianFit:
    """Least-squares Lorentzian with flat offset, fitted in linear power units."""
    if window is None:
        window = auto_fit_window(spec)
    lo, hi = window
    sel = (spec.freqs >= lo) & (spec.freqs <= hi)
    f = spec.freqs[sel]
    p = spec.psd[sel]
    if f.size < 16:
        raise FitError(f"fit window holds {f.size} points, need at least 16")

    c0, w0, area0, off0 = _initial_guess(f, p)
    # scaled coordinates: frequency in units of w0 around c0, power in peak units
    fscale = w0
    pscale = float(p.max()) or 1.0
    x = (f - c0) / fscale
    y = p / pscale

    def residual(q):
        c, w, ar, off = q
        hw = w / 2.0
        return off + (ar / math.pi) * hw / ((x - c) ** 2 + hw**2) - y

    def jac(q):
        c, w, ar, off = q
        hw = w / 2.0
        d = (x - c) ** 2 + hw**2
        line = hw / d
        j = np.empty((x.size, 4))
        j[:, 0] = (ar / math.pi) * hw * 2 * (x - c) / d**2
        j[:, 1] = (ar / math.pi) * 0.5 * (1 / d - 2 * hw**2 / d**2)
        j[:, 2] = line / math.pi
        j[:, 3] = 1.0
        return j

    q0 = np.array([0.0, 1.0, area0 / (pscale * fscale), off0 / pscale])
    try:
        res = optimize.least_squares(residual, q0, jac=jac, method="lm", xtol=xtol,
                                     ftol=1e-15, gtol=1e-15, max_nfev=max_iterations)
    except ValueError as exc:
        raise FitError(f"fit failed: {exc}") from exc
    c, w, ar, off = res.x
    fit = LorentzianFit(
        center=float(c0 + c * fscale),
        fwhm=float(abs(w) * fscale),
        area=float(ar * pscale * fscale),
        offset=float(off * pscale),
        residual_rms=float(np.sqrt(np.mean(res.fun**2))),
        iterations=int(res.nfev),
        n_points=int(f.size),
    )
    if not res.success or res.status == 0:
        raise FitError(f"fit did not converge: {res.message}", best=fit,
                       diagnostics={"status": res.status, "nfev": res.nfev})
    if not fit.fwhm > 0 or fit.area < 0:
        raise FitError("fit converged to an unphysical line", best=fit)
    return fit


def emission_peak_power(spec: Spectrum, band: tuple[float, float] | None = None) -> float:
    """Power within +-3 resolution bandwidths of the tallest bin.

    ``band`` restricts where the tallest bin is searched for.  The window
    edges are integrated with the trapezoid rule, so a flat density ``S``
    yields ``6 * rbw * S``.
    """
    if spec.psd.size == 0:
        raise SpectrumError("empty spectrum")
    candidates = np.arange(spec.psd.size)
    if band is not None:
        candidates = candidates[(spec.freqs >= band[0]) & (spec.freqs <= band[1])]
        if candidates.size == 0:
            raise SpectrumError("no spectral bins inside the requested band")
    k = int(candidates[np.argmax(spec.psd[candidates])])
    half = int(round(PEAK_WINDOW_RBW))
    lo, hi = max(0, k - half), min(spec.psd.size - 1, k + half)
    return float(integrate.trapezoid(spec.psd[lo:hi + 1], dx=spec.resolution_bandwidth))


@dataclass
class LinewidthRow:
    cooperativity: float
    fwhm: float = float("nan")
    fit: LorentzianFit | None = None
    spectrum: Spectrum | None = None
    error: str = ""
    meta: dict = field(default_factory=dict)


def derive_seed(master: int, index: int) -> int:
    """Deterministic per-point seed from a master seed and a grid index."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0])


def choose_segment_len(min_fwhm: float, dt: float, ratio: float = 12.0) -> int:
    """Power-of-two segment length giving ``min_fwhm / rbw >= ratio``."""
    n = 2 * math.pi * ratio / (min_fwhm * dt)
    return 1 << max(4, math.ceil(math.log2(n)))


def combine_spectra(spectra) -> Spectrum:
    """Segment-weighted average of Welch estimates on a common frequency grid."""
    spectra = list(spectra)
    if not spectra:
        raise SpectrumError("nothing to combine")
    first = spectra[0]
    for sp in spectra[1:]:
        if sp.freqs.shape != first.freqs.shape or sp.resolution_bandwidth != first.resolution_bandwidth \
                or sp.window != first.window:
            raise SpectrumError("spectra differ in frequency grid or window")
    weights = np.array([sp.segments for sp in spectra], dtype=float)
    psd = np.average([sp.psd for sp in spectra], axis=0, weights=weights)
    mean_square = float(np.average([sp.mean_square for sp in spectra], weights=weights))
    return Spectrum(first.freqs, psd, first.resolution_bandwidth,
                    float(psd.sum() * first.resolution_bandwidth), mean_square,
                    int(weights.sum()), first.window)


#: samples simulated per chunk when a linewidth record is too long to hold at once
CHUNK_SAMPLES = 1 << 22


def linewidth_point(params: SystemParams, C: float, dt: float, segment_len: int,
                    segments: int, seed: int) -> LinewidthRow:
    """Simulate one noisy below-threshold run and fit its emission line.

    Long records are simulated in chunks, each continuing from the previous
    chunk's final state; the Welch segments of all chunks are pooled.
    """
    row = LinewidthRow(C)
    p = params.with_cooperativity(C)
    settle = int(math.ceil(20.0 / (-2 * cavity_like_eigenvalue(p).real) / dt))
    traj = simulate_linear(p, DriveSpec(), duration=settle * dt, dt=dt, seed=derive_seed(seed, 0))
    per_chunk = max(1, CHUNK_SAMPLES // segment_len)
    pieces, remaining, k = [], segments, 0
    while remaining > 0 and not traj.diverged:
        count = min(per_chunk, remaining)
        # 50% overlap: n segments need (n + 1) / 2 segment lengths of data
        n_samples = segment_len * (count + 1) // 2
        k += 1
        traj = simulate_linear(p, DriveSpec(), duration=n_samples * dt, dt=dt,
                               seed=derive_seed(seed, k), a0=traj.a_samples[-1],
                               b0=traj.b_samples[-1])
        if not traj.diverged:
            pieces.append(welch_psd(output_field(traj)[1:], dt, segment_len))
            remaining -= count
    if traj.diverged:
        row.error = "trajectory diverged"
        return row
    spec = combine_spectra(pieces)
    row.spectrum = spec
    row.meta = {"rbw": spec.resolution_bandwidth, "segments": spec.segments,
                "parseval_error": spec.parseval_error, "chunks": len(pieces)}
    try:
        row.fit = fit_lorentzian(spec)
        row.fwhm = row.fit.fwhm
    except FitError as exc:
        row.error = str(exc)
        if exc.best is not None:
            row.fit = exc.best
    return row


def linewidth_vs_cooperativity(params: SystemParams, C_list, dt: float | None = None,
                               segments: int = 200, seed: int = 0,
                               segment_len: int | None = None, rbw_ratio: float = 12.0):
    """Fitted emission linewidth for each cooperativity, plus a linear trend.

    Returns ``(rows, trend)``; ``trend`` holds the slope and intercept of
    fwhm versus C and the extrapolated zero crossing ``threshold_C``.  Rows
    whose fit failed carry the error and are left out of the trend.
    """
    C_list = [float(c) for c in C_list]
    if dt is None:
        dt = 0.04 / max(params.kappa, params.Gamma_m)
    if segment_len is None:
        narrowest = min(-2 * cavity_like_eigenvalue(params.with_cooperativity(c)).real
                        for c in C_list)
        segment_len = choose_segment_len(narrowest, dt, rbw_ratio)
    rows = [linewidth_point(params, c, dt, segment_len, segments, derive_seed(seed, i))
            for i, c in enumerate(C_list)]
    return rows, linewidth_trend(rows)


def linewidth_trend(rows) -> dict:
    good = [r for r in rows if not r.error and np.isfinite(r.fwhm)]
    if len(good) < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "threshold_C": float("nan")}
    c = np.array([r.cooperativity for r in good])
    w = np.array([r.fwhm for r in good])
    slope, intercept = np.polyfit(c, w, 1)
    return {"slope": float(slope), "intercept": float(intercept),
            "threshold_C": float(-intercept / slope) if slope != 0 else float("nan")}
