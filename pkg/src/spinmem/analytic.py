"""Closed-form frequency-domain results for the probe/spin system.

Conventions
-----------
Inside every Lorentzian the Larmor frequency, the decay rate and the Fourier
frequency are angular (``2*pi`` times the Hz values held by
:class:`~spinmem.params.ExperimentParams`), and the projection-noise term uses
the angular decay rate as well, which is what the time-domain engine
integrates.  Power spectral densities are two-sided, per Hz, in s^-1.  Noise
*areas* are integrals of the PSD over ordinary frequency in Hz, which is
``1/(2*pi)`` times the integral over angular frequency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import NonPositiveInput
from .params import CONVENTION_TAG, TWO_PI, ExperimentParams, validate

__all__ = [
    "SpinTransfer",
    "spin_transfer",
    "spectrum_phi",
    "spectrum_terms",
    "lab_frame_spectrum",
    "bana_closed_form",
    "pna_closed_form",
    "technical_area",
    "infer_pna",
    "variance_budget",
    "lab_frame_covariance",
    "lorentzian_window_fraction",
    "CONVENTION_TAG",
]


@dataclass(frozen=True)
class SpinTransfer:
    """Complex gains from the three inputs (S_z, F_y, F_z) to J_y and J_z."""

    freq_Hz: np.ndarray
    jy_from_sz: np.ndarray
    jy_from_fy: np.ndarray
    jy_from_fz: np.ndarray
    jz_from_sz: np.ndarray
    jz_from_fy: np.ndarray
    jz_from_fz: np.ndarray

    def channels(self) -> dict:
        return {
            name: getattr(self, name)
            for name in (
                "jy_from_sz", "jy_from_fy", "jy_from_fz",
                "jz_from_sz", "jz_from_fy", "jz_from_fz",
            )
        }


def spin_transfer(params: ExperimentParams, freq_Hz) -> SpinTransfer:
    """Narrow-band response of the transverse spin to light and Langevin forces.

    Both J_y and J_z respond through the common resonant denominator
    ``(Omega - omega) - i*Gamma``; e.g. the J_z gain from S_z is
    ``(a*J_x/2) / ((Omega - omega) - i*Gamma)``.
    """
    validate(params)
    f = np.asarray(freq_Hz, dtype=float)
    # subtract in Hz first: exact for nearby frequencies
    denom = TWO_PI * (params.larmor_Hz - f) - 1j * params.gamma_ang
    g = params.coupling_a * params.spin_Jx
    ones = np.ones_like(denom)
    return SpinTransfer(
        freq_Hz=f,
        jy_from_sz=-0.5j * g / denom,
        jy_from_fy=-0.5j / denom,
        jy_from_fz=-0.5 * ones / denom,
        jz_from_sz=0.5 * g / denom,
        jz_from_fy=0.5 * ones / denom,
        jz_from_fz=-0.5j / denom,
    )


def _force_strengths(p: ExperimentParams):
    """White-noise strengths driving (J_y, J_z): back-action, quantum, technical."""
    backaction = p.coupling_a**2 * p.spin_Jx**2 * p.flux_Sx * p.eps_z / 2.0
    quantum = p.gamma_ang * p.spin_Jx
    return backaction, quantum, p.tech_noise_k


def spectrum_terms(params: ExperimentParams, freq_Hz) -> dict:
    """The additive pieces of the output spectrum evaluated on ``freq_Hz``.

    Returns a dict with ``floor``, ``backaction``, ``projection`` and
    ``technical`` arrays; :func:`spectrum_phi` is their sum.
    """
    validate(params)
    p = params
    f = np.asarray(freq_Hz, dtype=float)
    detuning = TWO_PI * (p.larmor_Hz - f)
    readout = 0.25 * p.coupling_a**2 * p.flux_Sx**2 / (detuning**2 + p.gamma_ang**2)
    backaction, quantum, technical = _force_strengths(p)
    return {
        "floor": np.full_like(f, 0.5 * p.flux_Sx * p.eps_y),
        "backaction": readout * backaction,
        "projection": readout * 2.0 * quantum,
        "technical": readout * 2.0 * technical,
    }


def spectrum_phi(params: ExperimentParams, freq_Hz):
    """Two-sided PSD of the detected S_y near the Larmor frequency, s^-1.

    ``floor + (a^2 S_x^2/4) / ((Omega-omega)^2 + Gamma^2) *
    (a^2 J_x^2 S_x eps_z/2 + 2 Gamma J_x + 2 k_tech)``
    """
    terms = spectrum_terms(params, freq_Hz)
    out = terms["floor"] + (terms["backaction"] + terms["projection"] + terms["technical"])
    return float(out) if np.ndim(out) == 0 else out


def lab_frame_spectrum(params: ExperimentParams, freq_Hz):
    """Exact PSD of the lab-frame linear model, without the narrow-band approximation.

    Includes the mirror resonance at -Omega and the asymmetric response of the
    full rotation-plus-decay dynamics.  Valid at any ``freq_Hz`` (two-sided).
    """
    validate(params, analytic=False)
    p = params
    f = np.asarray(freq_Hz, dtype=float)
    w = TWO_PI * f
    W, G = p.larmor_ang, p.gamma_ang
    backaction, quantum, technical = _force_strengths(p)
    q_y = quantum + technical + backaction
    q_z = quantum + technical
    num = (w**2 + G**2) * q_z + W**2 * q_y
    den = (G**2 + (TWO_PI * (f + p.larmor_Hz)) ** 2) * (G**2 + (TWO_PI * (f - p.larmor_Hz)) ** 2)
    out = 0.5 * p.flux_Sx * p.eps_y + p.coupling_a**2 * p.flux_Sx**2 * num / den
    return float(out) if np.ndim(out) == 0 else out


def bana_closed_form(params: ExperimentParams) -> float:
    """Back-action noise area (integral over Hz), s^-2.

    ``pi a^4 J_x^2 eps_z (S_x/2)^3 / Gamma`` is the area over angular
    frequency; dividing by ``2*pi`` gives the area over Hz.
    """
    p = validate(params)
    angular = math.pi * p.coupling_a**4 * p.spin_Jx**2 * p.eps_z * (p.flux_Sx / 2) ** 3 / p.gamma_ang
    return angular / TWO_PI


def pna_closed_form(params: ExperimentParams) -> float:
    """Projection noise area (integral over Hz), ``a^2 J_x (S_x/2)^2``; independent of Gamma."""
    p = validate(params)
    angular = TWO_PI * p.coupling_a**2 * p.spin_Jx * (p.flux_Sx / 2) ** 2
    return angular / TWO_PI


def technical_area(params: ExperimentParams) -> float:
    """Area over Hz of the technical-noise Lorentzian, ``a^2 S_x^2 k_tech / (4 Gamma)``."""
    p = validate(params)
    return p.coupling_a**2 * p.flux_Sx**2 * p.tech_noise_k / (4.0 * p.gamma_ang)


def infer_pna(bana: float, snl: float, gamma_Hz: float) -> float:
    """Projection noise area implied by a coherent-probe back-action area.

    ``2*sqrt(pi * gamma_Hz * bana * snl)``; with areas over Hz the decay rate
    enters as the HWHM in Hz.
    """
    for name, value in (("bana", bana), ("snl", snl), ("gamma_Hz", gamma_Hz)):
        if not value > 0:
            raise NonPositiveInput(f"{name} must be positive (got {value!r})")
    return 2.0 * math.sqrt(math.pi * gamma_Hz * bana * snl)


def variance_budget(params: ExperimentParams) -> dict:
    """Steady-state variance of J_z split by noise source (narrow-band model).

    Each single-peak Lorentzian integral is doubled to include the mirror
    resonance at -Omega, so without coupling or technical noise the total is
    the coherent-spin-state value J_x/2.  ``spin_Jx == 0`` (no atoms) gives
    all zeros.
    """
    p = params
    if p.spin_Jx == 0:
        validate(p.replace(spin_Jx=1.0))
        return {"var_Jz_quantum": 0.0, "var_Jz_backaction": 0.0, "var_Jz_technical": 0.0, "total": 0.0}
    validate(p)
    backaction, quantum, technical = _force_strengths(p)
    # J_z PSD near +Omega is q/(4((Omega-w)^2+Gamma^2)); its integral over Hz
    # is q/(8 Gamma), doubled for the -Omega peak.
    peak = lambda q: 2.0 * q / (8.0 * p.gamma_ang)  # noqa: E731
    out = {
        "var_Jz_quantum": peak(2.0 * quantum),
        "var_Jz_backaction": peak(backaction),
        "var_Jz_technical": peak(2.0 * technical),
    }
    out["total"] = out["var_Jz_quantum"] + out["var_Jz_backaction"] + out["var_Jz_technical"]
    return out


def lab_frame_covariance(params: ExperimentParams) -> np.ndarray:
    """Exact stationary covariance of (J_y, J_z) for the lab-frame dynamics."""
    validate(params, analytic=False)
    p = params
    W, G = p.larmor_ang, p.gamma_ang
    backaction, quantum, technical = _force_strengths(p)
    q_y = quantum + technical + backaction
    q_z = quantum + technical
    r = W * (q_y - q_z) / (4.0 * (G**2 + W**2))
    var_z = (q_z + 2.0 * W * r) / (2.0 * G)
    var_y = (q_y - 2.0 * W * r) / (2.0 * G)
    return np.array([[var_y, r], [r, var_z]])


def lorentzian_window_fraction(f_lo: float, f_hi: float, center_Hz: float, hwhm_Hz: float) -> float:
    """Fraction of a Lorentzian's area lying in ``[f_lo, f_hi]``."""
    return (math.atan((f_hi - center_Hz) / hwhm_Hz) - math.atan((f_lo - center_Hz) / hwhm_Hz)) / math.pi
