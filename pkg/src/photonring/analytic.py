"""Closed-form steady-state results for a single side-coupled cavity.

These are the independent oracles the time-domain solver is checked
against: the transmission coefficient t(omega), the stationary field
profile around the coupler, the coupling-regime classifier, a quadrature
evaluation of the principal-value kernel integral behind the profile, and
the adiabatic-invariant residual used by the energy-lifter experiments.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "DomainError",
    "gamma_rate",
    "wavevector",
    "transmission",
    "TransmissionCurve",
    "transmission_curve",
    "CouplingRegime",
    "coupling_regime",
    "steady_state_profile",
    "pv_kernel_integral",
    "adiabatic_shift_check",
]


class DomainError(ValueError):
    """An argument lies outside the physical domain of the formula."""


def _inv_tau(tau_c: float) -> float:
    if not (tau_c > 0):
        raise DomainError(f"tau_c must be positive or infinite, got {tau_c}")
    return 0.0 if math.isinf(tau_c) else 1.0 / tau_c


def gamma_rate(V: complex, v_g: float) -> float:
    """Cavity decay rate into the waveguide: Gamma = |V|^2 / (2 v_g)."""
    if not (v_g > 0):
        raise DomainError(f"v_g must be positive, got {v_g}")
    return abs(V) ** 2 / (2.0 * v_g)


def wavevector(omega, omega_0: float, v_g: float):
    """Traveling-mode wavevector Q = (omega - omega_0) / v_g."""
    if not (v_g > 0):
        raise DomainError(f"v_g must be positive, got {v_g}")
    return (np.asarray(omega) - omega_0) / v_g if np.ndim(omega) else (omega - omega_0) / v_g


def transmission(omega, omega_c: float, tau_c: float, gamma: float):
    """Complex transmission past the coupler.

    t = (omega - omega_c + i/tau_c - i*Gamma) / (omega - omega_c + i/tau_c + i*Gamma)

    Accepts a scalar or an array of frequencies.  |t| <= 1 always, with
    equality for every omega when the cavity is lossless.  The exactly
    uncoupled lossless resonant case is short-circuited to t = 1 (the limit
    is well defined; the raw expression would be 0/0).
    """
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    it = _inv_tau(tau_c)
    if gamma == 0.0 and it == 0.0:
        return np.ones_like(np.asarray(omega, dtype=complex)) if np.ndim(omega) else 1.0 + 0.0j
    d = np.asarray(omega, dtype=complex) - omega_c + 1j * it
    t = (d - 1j * gamma) / (d + 1j * gamma)
    return t if np.ndim(omega) else complex(t)


@dataclass(frozen=True)
class TransmissionCurve:
    """t(omega) sampled on a monotone frequency grid, with its parameters."""

    frequencies: np.ndarray
    values: np.ndarray
    gamma: float
    tau_c: float
    omega_c: float

    def abs2(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def to_csv(self) -> str:
        lines = ["omega,re_t,im_t,abs2_t"]
        for w, t in zip(self.frequencies, self.values):
            lines.append(f"{w!r},{t.real!r},{t.imag!r},{abs(t) ** 2!r}")
        return "\n".join(lines) + "\n"


def transmission_curve(frequencies, omega_c: float, tau_c: float,
                       gamma: float) -> TransmissionCurve:
    freqs = np.asarray(frequencies, dtype=float)
    return TransmissionCurve(frequencies=freqs,
                             values=np.asarray(transmission(freqs, omega_c, tau_c, gamma)),
                             gamma=gamma, tau_c=tau_c, omega_c=omega_c)


class CouplingRegime(Enum):
    UNDER_COUPLED = "under_coupled"
    CRITICALLY_COUPLED = "critically_coupled"
    OVER_COUPLED = "over_coupled"


def coupling_regime(gamma: float, tau_c: float, rel_tol: float = 1e-9) -> CouplingRegime:
    """Classify Gamma versus the intrinsic rate 1/tau_c.

    Critical when |Gamma*tau_c - 1| <= rel_tol; below that product is
    under-coupled, above is over-coupled.  An explicit tolerance is used
    because exact criticality is measure-zero in floats.
    """
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    if not (tau_c > 0):
        raise DomainError(f"tau_c must be positive or infinite, got {tau_c}")
    if math.isinf(tau_c):
        return CouplingRegime.OVER_COUPLED if gamma > 0 else CouplingRegime.UNDER_COUPLED
    product = gamma * tau_c
    if abs(product - 1.0) <= rel_tol:
        return CouplingRegime.CRITICALLY_COUPLED
    if product < 1.0:
        return CouplingRegime.UNDER_COUPLED
    return CouplingRegime.OVER_COUPLED


def steady_state_profile(x: float, omega: float, omega_c: float, tau_c: float,
                         gamma: float, q: float, phi0: complex,
                         V: complex | None = None, v_g: float = 1.0):
    """Stationary field around a coupler at x = 0, plus the cavity amplitude.

    The incident amplitude is ``phi0``: the profile is phi0 * exp(iqx)
    upstream (x < 0), phi0 * t * exp(iqx) downstream (x > 0), and phi0 at
    the coupler itself.  The cavity amplitude is V* phi0 / (omega - omega_c
    + i/tau_c + i*Gamma); by default V is taken real positive with
    |V| = sqrt(2 Gamma v_g).
    """
    if phi0 == 0:
        raise DomainError("phi0 must be nonzero")
    it = _inv_tau(tau_c)
    if V is None:
        V = math.sqrt(2.0 * gamma * v_g)
    t = transmission(omega, omega_c, tau_c, gamma)
    if x < 0:
        phi = phi0 * np.exp(1j * q * x)
    elif x > 0:
        phi = phi0 * t * np.exp(1j * q * x)
    else:
        phi = complex(phi0)
    denom = (omega - omega_c) + 1j * it + 1j * gamma
    e_cav = np.conj(V) * phi0 / denom
    return complex(phi), complex(e_cav)


def pv_kernel_integral(x: float, q: float, cutoff: float | None = None,
                       step: float = 1e-3) -> complex:
    """Principal value of integral d_alpha exp(-i alpha x) / (alpha + q).

    Quadrature scheme: substitute beta = alpha + q so the pole sits at
    beta = 0, pair samples symmetrically about the pole (the odd 1/beta part
    cancels exactly, leaving the smooth -2i sin(beta x)/beta), trapezoid the
    paired integrand out to the symmetric cutoff, trapezoid the leftover
    one-sided strip, and complete the two truncated tails with their
    leading integration-by-parts terms.  The tail completion keeps the
    absolute error at O(step^2) + O(1/cutoff^2); a bare truncation at the
    default cutoff would sit ~1e-3 away from the infinite-domain value.

    Converges to -i*pi*exp(iqx) for x > 0 and +i*pi*exp(iqx) for x < 0.
    """
    if x == 0:
        raise DomainError("x must be nonzero (integral is conditionally convergent)")
    lam = cutoff if cutoff is not None else 1e3 * max(1.0, abs(q))
    if not (lam > abs(q) + 16 * step):
        raise DomainError("cutoff must exceed |q| by several steps")
    eta = 8.0 * step
    half = lam - abs(q)  # symmetric half-width around the pole in beta

    def paired(beta: np.ndarray) -> np.ndarray:
        # exp(-i beta x)/beta + exp(+i beta x)/(-beta), finite at beta -> 0
        out = np.empty_like(beta, dtype=complex)
        nz = beta != 0
        out[nz] = -2j * np.sin(beta[nz] * x) / beta[nz]
        out[~nz] = -2j * x
        return out

    # symmetric window [-eta, eta]: same paired integrand on a fine grid
    wgrid = np.linspace(0.0, eta, 65)
    window = np.trapezoid(paired(wgrid), wgrid)

    # paired bulk [eta, half]
    n_bulk = max(2, int(math.ceil((half - eta) / step)) + 1)
    bgrid = np.linspace(eta, half, n_bulk)
    bulk = np.trapezoid(paired(bgrid), bgrid)

    # leftover one-sided strip where the alpha cutoff is asymmetric in beta
    strip = 0.0 + 0.0j
    if q > 0:
        lo, hi = half, lam + q
    elif q < 0:
        lo, hi = -(lam - q), -half
    else:
        lo = hi = 0.0
    if hi > lo:
        n_strip = max(2, int(math.ceil((hi - lo) / step)) + 1)
        sgrid = np.linspace(lo, hi, n_strip)
        strip = np.trapezoid(np.exp(-1j * sgrid * x) / sgrid, sgrid)

    body = np.exp(1j * q * x) * (window + bulk + strip)

    # leading IBP terms for the alpha-tails beyond +/- lam
    tail = (np.exp(-1j * lam * x) / (1j * x * (lam + q))
            + np.exp(1j * lam * x) / (1j * x * (lam - q)))
    return complex(body + tail)


def adiabatic_shift_check(u_before: float, omega_before: float,
                          u_after: float, omega_after: float) -> float:
    """Relative residual of the action invariant U/omega across a tuning ramp.

    Zero iff U/omega is conserved; e.g. doubling both U and omega gives 0,
    while doubling omega at fixed U gives 0.5.
    """
    for name, v in (("u_before", u_before), ("omega_before", omega_before),
                    ("u_after", u_after), ("omega_after", omega_after)):
        if not (v > 0):
            raise DomainError(f"{name} must be positive, got {v}")
    before = u_before / omega_before
    after = u_after / omega_after
    return abs(after - before) / before
