"""Physical parameters, unit conventions and the value types shared by every module.

All public frequencies are ordinary frequencies in Hz.  The decay rate is stored
as the half width at half maximum of the spin resonance (``gamma_Hz``); the
angular rates that appear in the equations of motion are ``2*pi`` times the
stored values.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    NarrowbandViolated,
    NonPositiveParameter,
    SpinmemWarning,
    UnknownConvention,
    ValidationError,
)

TWO_PI = 2.0 * math.pi

# Tag embedded in every serialized spectrum, fit and area record.
CONVENTION_TAG = "area-over-Hz, two-sided"


@dataclass(frozen=True)
class ExperimentParams:
    """Every physical symbol of the probe/spin model.

    Attributes
    ----------
    coupling_a : float
        Dimensionless light-atom coupling constant.
    flux_Sx : float
        Classical Stokes flux of the strong polarization component, s^-1.
    spin_Jx : float
        Macroscopic longitudinal spin.
    larmor_Hz : float
        Larmor precession frequency, Hz.
    gamma_Hz : float
        Transverse spin decay rate, HWHM in Hz.
    eps_y, eps_z : float
        Input noise factors of the S_y and S_z quadratures (1 = coherent).
    tech_noise_k : float
        White classical Langevin-force strength acting on J_y and J_z, in the
        same units as the quantum force strength ``2*pi*gamma_Hz*spin_Jx``.
    """

    coupling_a: float
    flux_Sx: float
    spin_Jx: float
    larmor_Hz: float
    gamma_Hz: float
    eps_y: float = 1.0
    eps_z: float = 1.0
    tech_noise_k: float = 0.0

    @property
    def larmor_ang(self) -> float:
        return TWO_PI * self.larmor_Hz

    @property
    def gamma_ang(self) -> float:
        return TWO_PI * self.gamma_Hz

    @property
    def snl(self) -> float:
        """Shot-noise level S_x/2 of a coherent probe."""
        return 0.5 * self.flux_Sx

    def replace(self, **changes) -> "ExperimentParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError([f"unknown parameter key(s): {', '.join(unknown)}"])
        missing = sorted(
            f.name
            for f in dataclasses.fields(cls)
            if f.name not in data and f.default is dataclasses.MISSING
        )
        if missing:
            raise ValidationError([f"missing parameter key(s): {', '.join(missing)}"])
        return cls(**{k: float(v) for k, v in data.items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentParams":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        """Stable 16-hex-digit hash of the parameter values."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _violations(params: ExperimentParams, analytic: bool) -> list[Exception]:
    errors: list[Exception] = []
    for name in ("flux_Sx", "spin_Jx", "gamma_Hz", "larmor_Hz", "eps_y", "eps_z"):
        value = getattr(params, name)
        if not (value > 0 and math.isfinite(value)):
            errors.append(NonPositiveParameter(name, value))
    if not (params.tech_noise_k >= 0 and math.isfinite(params.tech_noise_k)):
        errors.append(NonPositiveParameter("tech_noise_k", params.tech_noise_k))
    if not math.isfinite(params.coupling_a):
        errors.append(NonPositiveParameter("coupling_a", params.coupling_a))
    if params.gamma_Hz > 0 and params.larmor_Hz > 0 and not params.gamma_Hz < params.larmor_Hz:
        if analytic:
            errors.append(NarrowbandViolated(params.gamma_Hz, params.larmor_Hz))
        else:
            warnings.warn(
                f"gamma_Hz={params.gamma_Hz} >= larmor_Hz={params.larmor_Hz}: "
                "outside the narrow-band regime",
                SpinmemWarning,
                stacklevel=3,
            )
    return errors


def validate(params: ExperimentParams, analytic: bool = True) -> ExperimentParams:
    """Check every parameter invariant and return ``params`` unchanged.

    All violations are collected and raised together as a
    :class:`ValidationError`.  ``analytic=False`` downgrades a narrow-band
    violation to a warning (time-domain simulation does not need it).
    A minimum-uncertainty warning is emitted when ``eps_y * eps_z < 1``.
    """
    errors = _violations(params, analytic)
    if len(errors) == 1:
        raise errors[0]
    if errors:
        raise ValidationError(errors)
    if params.eps_y * params.eps_z < 1.0:
        warnings.warn(
            f"eps_y*eps_z = {params.eps_y * params.eps_z:g} < 1 is below minimum uncertainty",
            SpinmemWarning,
            stacklevel=2,
        )
    return params


# Each convention maps to (factor, kind): value_hwhm = factor * value for
# rates, value_hwhm = 1 / (factor * value) for lifetimes.
_CONVENTIONS = {
    "hwhm-hz": (1.0, "rate"),
    "fwhm-hz": (0.5, "rate"),
    "angular-rad/s": (1.0 / TWO_PI, "rate"),
    "lifetime-s": (TWO_PI, "time"),
}


def _normalize_convention(name: str) -> str:
    key = name.strip().lower()
    if key not in _CONVENTIONS:
        raise UnknownConvention(name)
    return key


def unit_convert(value, from_convention: str, to_convention: str):
    """Convert a decay rate between HWHM-Hz, FWHM-Hz, angular-rad/s and lifetime-s.

    The lifetime is ``1/(2*pi*HWHM)``.  Works elementwise on arrays.

    >>> unit_convert(264.0, "FWHM-Hz", "HWHM-Hz")
    132.0
    """
    src, src_kind = _CONVENTIONS[_normalize_convention(from_convention)]
    dst, dst_kind = _CONVENTIONS[_normalize_convention(to_convention)]
    value = np.asarray(value, dtype=float)
    hwhm = src * value if src_kind == "rate" else 1.0 / (src * value)
    out = hwhm / dst if dst_kind == "rate" else 1.0 / (dst * hwhm)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Trajectory:
    """One realization of (J_y, J_z) and the detected output S_y_out."""

    dt_s: float
    jy: np.ndarray
    jz: np.ndarray
    sy_out: np.ndarray
    seed: int
    params_digest: str = ""
    realization: int = 0

    def __post_init__(self):
        if not self.dt_s > 0:
            raise ValueError("dt_s must be positive")
        n = len(self.jy)
        if n < 2 or len(self.jz) != n or len(self.sy_out) != n:
            raise ValueError("jy, jz and sy_out must have equal length >= 2")
        for name in ("jy", "jz", "sy_out"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.jy)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt_s


@dataclass(frozen=True)
class Spectrum:
    """Two-sided power spectral density on an equally spaced frequency grid.

    ``stderr`` is the per-bin standard error when it could be estimated
    empirically (several realizations); otherwise it is ``psd/sqrt(n_eff)``.
    """

    freq_Hz: np.ndarray
    psd: np.ndarray
    rbw_Hz: float
    n_avg: int
    n_eff: float = 0.0
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.freq_Hz, dtype=float)
        if f.ndim != 1 or len(f) != len(self.psd) or len(f) < 2:
            raise ValueError("freq_Hz and psd must be 1-d arrays of equal length >= 2")
        steps = np.diff(f)
        if np.any(steps <= 0):
            raise ValueError("freq_Hz must be strictly increasing")
        if np.max(np.abs(steps - steps.mean())) > 1e-9 * abs(steps.mean()):
            raise ValueError("freq_Hz must be equally spaced")
        if np.any(np.asarray(self.psd) < 0):
            raise ValueError("psd values must be non-negative")

    @property
    def df(self) -> float:
        return float(self.freq_Hz[1] - self.freq_Hz[0])

    def sigma(self) -> np.ndarray:
        if self.stderr is not None:
            return np.asarray(self.stderr)
        n = self.n_eff if self.n_eff > 0 else self.n_avg
        return np.asarray(self.psd) / math.sqrt(n)

    def window(self, f_lo: float, f_hi: float) -> "Spectrum":
        """Restrict to the bins with ``f_lo <= f <= f_hi``."""
        sel = (self.freq_Hz >= f_lo) & (self.freq_Hz <= f_hi)
        return Spectrum(
            freq_Hz=self.freq_Hz[sel],
            psd=self.psd[sel],
            rbw_Hz=self.rbw_Hz,
            n_avg=self.n_avg,
            n_eff=self.n_eff,
            stderr=None if self.stderr is None else self.stderr[sel],
            meta=dict(self.meta),
        )


def load_params(path) -> ExperimentParams:
    return ExperimentParams.from_json(Path(path).read_text())


def default_params() -> ExperimentParams:
    """The shipped desk-scale parameter set (``data/default_params.json``)."""
    return load_params(Path(__file__).with_name("data") / "default_params.json")
