"""Analysis of probe time series: phase tracking and spectra.

Amplitudes evolve as exp(-i omega t), so the instantaneous frequency is
minus the derivative of the unwrapped phase, and spectra are computed with
the exp(+i omega t) transform so a tone at omega lands at +omega.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SpectrumError",
    "instantaneous_frequency",
    "probe_spectrum",
    "transmission_estimate",
    "AMPLITUDE_FLOOR",
]

# samples below this fraction of the series peak are masked, not extrapolated
AMPLITUDE_FLOOR = 1e-6

COMPACT_SUPPORT_LIMIT = 1e-8


class SpectrumError(ValueError):
    """The series does not satisfy the preconditions of a spectral estimate."""


def instantaneous_frequency(times, values, floor: float = AMPLITUDE_FLOOR):
    """Track omega(t) = -d(arg)/dt of a complex series by central differences.

    The phase is unwrapped within each contiguous run of samples whose
    magnitude exceeds ``floor`` times the series peak; masked samples and
    run edges are returned as NaN.  Requires at least 3 samples on a
    uniform time grid.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=complex)
    if t.size < 3:
        raise SpectrumError("need at least 3 samples to track frequency")
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=0.0):
        raise SpectrumError("series must be uniformly sampled")
    dt = float(dts[0])

    peak = float(np.max(np.abs(v)))
    omega = np.full(t.size, np.nan)
    if peak == 0.0:
        return t, omega
    valid = np.abs(v) >= floor * peak

    # process each contiguous valid run independently so unwrapping never
    # bridges a masked gap
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        return t, omega
    splits = np.flatnonzero(np.diff(idx) > 1) + 1
    for run in np.split(idx, splits):
        if run.size < 3:
            continue
        phase = np.unwrap(np.angle(v[run]))
        omega[run[1:-1]] = -(phase[2:] - phase[:-2]) / (2.0 * dt)
    return t, omega


def probe_spectrum(times, values, window: tuple[float, float] | None = None,
                   omega_0: float = 0.0, edges: str = "both"):
    """Discrete spectrum of a compactly supported probe series.

    ``window`` restricts the analysis to t in [t0, t1].  The series must
    have decayed below 1e-8 of its in-window peak at the window edges;
    otherwise the transform would wrap transit energy and the call fails
    with "series not compactly supported".  ``edges="trailing"`` checks only
    the trailing edge, for waveforms that legitimately start abruptly at the
    window boundary (e.g. the release following a tuning ramp).

    Returns (omega, amplitude) sorted by increasing omega, where
    omega = omega_0 + the transform bin of the carrier-demodulated series.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=complex)
    if window is not None:
        lo, hi = window
        sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        t, v = t[sel], v[sel]
    if t.size < 4:
        raise SpectrumError("window holds too few samples")
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=0.0):
        raise SpectrumError("series must be uniformly sampled")
    dt = float(dts[0])

    peak = float(np.max(np.abs(v)))
    if peak == 0.0:
        raise SpectrumError("series not compactly supported: all-zero window")
    leading_bad = edges == "both" and abs(v[0]) > COMPACT_SUPPORT_LIMIT * peak
    if leading_bad or abs(v[-1]) > COMPACT_SUPPORT_LIMIT * peak:
        raise SpectrumError("series not compactly supported")

    if omega_0 != 0.0:
        v = v * np.exp(1j * omega_0 * t)
    # exp(+i omega t) convention: conj-fft-conj
    amp = np.conj(np.fft.fft(np.conj(v))) * dt
    omega = omega_0 + 2.0 * np.pi * np.fft.fftfreq(t.size, d=dt)
    order = np.argsort(omega)
    return omega[order], amp[order]


def transmission_estimate(input_spectrum, output_spectrum, threshold: float = 0.01):
    """|t(omega)| = |output| / |input| over the band with usable input power.

    Both spectra must share the same frequency grid.  The band keeps bins
    whose input power is at least ``threshold`` of the input peak power.
    """
    w_in, a_in = input_spectrum
    w_out, a_out = output_spectrum
    w_in = np.asarray(w_in, dtype=float)
    w_out = np.asarray(w_out, dtype=float)
    if w_in.shape != w_out.shape or not np.allclose(w_in, w_out, rtol=1e-9, atol=1e-12):
        raise SpectrumError("input and output spectra must share a frequency grid")
    p_in = np.abs(np.asarray(a_in)) ** 2
    band = p_in >= threshold * float(np.max(p_in))
    ratio = np.abs(np.asarray(a_out))[band] / np.abs(np.asarray(a_in))[band]
    return w_in[band], ratio
