"""PSD estimation, Lorentzian fitting and the coherent/squeezed area decomposition."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg, signal
from scipy.ndimage import uniform_filter1d
from scipy.optimize import least_squares

from .analytic import infer_pna, lorentzian_window_fraction
from .exceptions import (
    EmptyInput,
    EpsTooCloseToOne,
    NoConvergence,
    NonPositiveInput,
    PeakNotFound,
    SegmentTooLong,
    ValidationError,
)
from .params import CONVENTION_TAG, Spectrum, Trajectory

# --------------------------------------------------------------------------
# PSD estimation


def window_stats(window: str, nperseg: int, overlap: float) -> tuple[float, np.ndarray, int]:
    """ENBW in bins, the window samples, and the hop between segments."""
    w = signal.get_window(window, nperseg)
    enbw_bins = nperseg * np.sum(w**2) / np.sum(w) ** 2
    hop = nperseg - int(round(overlap * nperseg))
    if hop < 1:
        raise ValidationError(message="overlap must be < 1")
    return float(enbw_bins), w, hop


def effective_averages(n_segments: int, window: str, nperseg: int, overlap: float) -> float:
    """Number of independent averages equivalent to ``n_segments`` overlapped segments.

    Welch's variance reduction for a white-ish spectrum: overlapping segments
    are correlated with coefficient ``rho_j^2`` where ``rho_j`` is the window
    overlap correlation at shift ``j*hop``.
    """
    _, w, hop = window_stats(window, nperseg, overlap)
    norm = np.sum(w**2)
    s = 0.0
    for j in range(1, n_segments):
        shift = j * hop
        if shift >= nperseg:
            break
        rho = np.sum(w[:-shift] * w[shift:]) / norm
        s += (1.0 - j / n_segments) * rho**2
    return n_segments / (1.0 + 2.0 * s)


def bin_correlation(n_segments: int, window: str, nperseg: int, overlap: float,
                    max_lag: int = 4) -> np.ndarray:
    """Correlation between Welch PSD bins ``k = 0..max_lag`` apart, for white-ish data.

    Segments ``m`` hops apart contribute ``|sum_n w[n] w[n+m*hop] exp(-2i pi k n/N)|^2``
    weighted by ``1 - m/n_segments``.  Element 0 is 1.
    """
    _, w, hop = window_stats(window, nperseg, overlap)
    num = np.zeros(max_lag + 1)
    for m in range(n_segments):
        shift = m * hop
        if shift >= nperseg:
            break
        r = np.abs(np.fft.fft(w[: nperseg - shift] * w[shift:], nperseg)[: max_lag + 1]) ** 2
        num += (1.0 if m == 0 else 2.0 * (1.0 - m / n_segments)) * r
    return num / num[0]


def _n_segments(n: int, nperseg: int, hop: int) -> int:
    return (n - nperseg) // hop + 1


def trajectory_psd(data, dt_s: float, segment_length: int, window: str = "hann",
                   overlap: float = 0.5) -> tuple[np.ndarray, np.ndarray, int]:
    """Welch two-sided density of one record, frequencies ascending.

    White noise of per-sample variance ``s2`` at step ``dt_s`` gives ``s2*dt_s``.
    Returns ``(freq_Hz, psd, n_segments)``.
    """
    x = np.asarray(data, dtype=float)
    if segment_length > len(x):
        raise SegmentTooLong(message=f"segment_length {segment_length} exceeds record length {len(x)}")
    if segment_length < 2:
        raise ValidationError(message="segment_length must be >= 2")
    _, _, hop = window_stats(window, segment_length, overlap)
    f, pxx = signal.welch(
        x,
        fs=1.0 / dt_s,
        window=window,
        nperseg=segment_length,
        noverlap=segment_length - hop,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    return np.fft.fftshift(f), np.fft.fftshift(pxx), _n_segments(len(x), segment_length, hop)


def combine_psds(freq_Hz: np.ndarray, psds: Sequence[np.ndarray], n_segments: int, dt_s: float,
                 segment_length: int, window: str = "hann", overlap: float = 0.5) -> Spectrum:
    """Average per-realization PSDs in the given order into one :class:`Spectrum`."""
    if len(psds) == 0:
        raise EmptyInput(message="no spectra to combine")
    stack = np.asarray(psds)
    psd = stack.mean(axis=0)
    enbw_bins, _, _ = window_stats(window, segment_length, overlap)
    per_real = effective_averages(n_segments, window, segment_length, overlap)
    n_eff = per_real * len(stack)
    stderr = stack.std(axis=0, ddof=1) / math.sqrt(len(stack)) if len(stack) >= 2 else None
    return Spectrum(
        freq_Hz=freq_Hz,
        psd=psd,
        rbw_Hz=enbw_bins / (segment_length * dt_s),
        n_avg=int(n_segments * len(stack)),
        n_eff=float(n_eff),
        stderr=stderr,
        meta={
            "convention": CONVENTION_TAG,
            "window": window,
            "overlap": overlap,
            "segment_length": segment_length,
            "n_segments": n_segments,
            "n_realizations": len(stack),
            "dt_s": dt_s,
        },
    )


def estimate_psd(trajectories: Iterable[Trajectory], segment_length: int, window: str = "hann",
                 overlap: float = 0.5, channel: str = "sy_out") -> Spectrum:
    """Welch-averaged two-sided PSD over segments and realizations.

    ``trajectories`` may be any iterable (a generator keeps memory flat).
    ``stderr`` is the empirical standard error across realizations when
    there are at least two.
    """
    psds = []
    freq = dt = nseg = None
    for traj in trajectories:
        if dt is None:
            dt = traj.dt_s
        elif traj.dt_s != dt:
            raise ValidationError(message="trajectories have different dt_s")
        freq, psd, nseg = trajectory_psd(getattr(traj, channel), traj.dt_s, segment_length, window, overlap)
        psds.append(psd)
    if not psds:
        raise EmptyInput(message="estimate_psd needs at least one trajectory")
    return combine_psds(freq, psds, nseg, dt, segment_length, window, overlap)


# --------------------------------------------------------------------------
# Lorentzian fit


def _peak(f, center_Hz, hwhm_Hz, area, sample_rate_Hz=None):
    if sample_rate_Hz is None:
        return (area / math.pi) * hwhm_Hz / ((f - center_Hz) ** 2 + hwhm_Hz**2)
    # sum of the Lorentzian over all aliases k*fs, in closed form
    a = math.pi * hwhm_Hz / sample_rate_Hz
    theta = math.pi * (f - center_Hz) / sample_rate_Hz
    return area * math.sinh(2 * a) / (2 * sample_rate_Hz * (np.sinh(a) ** 2 + np.sin(theta) ** 2))


def lorentzian(f, floor, center_Hz, hwhm_Hz, area, mirror=False, sample_rate_Hz=None):
    """``floor + (area/pi) * hwhm / ((f - center)^2 + hwhm^2)``.

    With ``mirror=True`` the image peak at ``-center`` is added, as in the
    two-sided spectrum of a real signal; ``area`` stays the area of one peak.
    A finite ``sample_rate_Hz`` folds in every alias of the peak(s), which is
    the exact spectrum of a sampled Ornstein-Uhlenbeck process.
    """
    f = np.asarray(f, dtype=float)
    out = floor + _peak(f, center_Hz, hwhm_Hz, area, sample_rate_Hz)
    if mirror:
        out = out + _peak(f, -center_Hz, hwhm_Hz, area, sample_rate_Hz)
    return out


PARAM_NAMES = ("floor", "center_Hz", "hwhm_Hz", "area")


@dataclass(frozen=True)
class LorentzianFit:
    floor: float
    center_Hz: float
    hwhm_Hz: float
    area: float
    covariance: np.ndarray
    chi2_red: float
    n_bins: int
    window: tuple[float, float]
    direct_area: float = float("nan")
    mirror: bool = False
    sample_rate_Hz: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def height(self) -> float:
        """Peak height above the floor."""
        return self.area / (math.pi * self.hwhm_Hz)

    @property
    def errors(self) -> dict:
        sd = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(PARAM_NAMES, sd.tolist()))

    def params(self) -> tuple[float, float, float, float]:
        return self.floor, self.center_Hz, self.hwhm_Hz, self.area

    def model(self, f):
        return lorentzian(f, *self.params(), mirror=self.mirror, sample_rate_Hz=self.sample_rate_Hz)

    def to_dict(self) -> dict:
        return {
            "convention": CONVENTION_TAG,
            "floor": self.floor,
            "center_Hz": self.center_Hz,
            "hwhm_Hz": self.hwhm_Hz,
            "area": self.area,
            "errors": self.errors,
            "covariance": self.covariance.tolist(),
            "chi2_red": self.chi2_red,
            "n_bins": self.n_bins,
            "window": list(self.window),
            "direct_area": self.direct_area,
            "mirror": self.mirror,
            "sample_rate_Hz": self.sample_rate_Hz,
            "area_estimator": "fit",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LorentzianFit":
        return cls(
            floor=d["floor"], center_Hz=d["center_Hz"], hwhm_Hz=d["hwhm_Hz"], area=d["area"],
            covariance=np.asarray(d["covariance"], dtype=float), chi2_red=d["chi2_red"],
            n_bins=d["n_bins"], window=tuple(d["window"]), direct_area=d.get("direct_area", float("nan")),
            mirror=bool(d.get("mirror", False)), sample_rate_Hz=d.get("sample_rate_Hz"),
        )


def _initial_guess(f, y, smooth_bins):
    """Moment-based starting point, or PeakNotFound."""
    ys = uniform_filter1d(y, size=smooth_bins, mode="nearest")
    n = len(y)
    edge = max(3, n // 10)
    wings = np.concatenate([y[:edge], y[-edge:]])
    floor = float(np.median(wings))
    mad = float(np.median(np.abs(wings - floor))) * 1.4826
    noise = mad / math.sqrt(smooth_bins)
    k = int(np.argmax(ys))
    height = float(ys[k] - floor)
    if not height > 3.0 * noise or height <= 0:
        raise PeakNotFound(f"peak height {height:.3g} is below 3x floor noise {noise:.3g}")
    excess = np.clip(ys - floor, 0.0, None)
    above = excess > 0.5 * height
    # contiguous half-maximum region around the peak
    lo = k
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = k
    while hi < n - 1 and above[hi + 1]:
        hi += 1
    df = f[1] - f[0]
    hwhm = max(0.5 * (f[hi] - f[lo] + df), df)
    sel = slice(lo, hi + 1)
    center = float(np.sum(f[sel] * excess[sel]) / np.sum(excess[sel]))
    area = math.pi * height * hwhm
    return np.array([floor, center, hwhm, area])


def _spectrum_bin_correlation(spec: Spectrum):
    """Bin correlations from the Welch settings in ``spec.meta``, or None if unknown."""
    meta = spec.meta
    keys = ("window", "segment_length", "overlap", "n_segments")
    if not all(meta.get(k) is not None for k in keys):
        return None
    return bin_correlation(int(meta["n_segments"]), str(meta["window"]), int(meta["segment_length"]),
                           float(meta["overlap"]))


def fit_lorentzian(spectrum: Spectrum, window: tuple[float, float], max_restarts: int = 3,
                   smooth_bins: int = 5, mirror: bool = False,
                   sample_rate_Hz: float | None = None) -> LorentzianFit:
    """Weighted least-squares fit of floor plus Lorentzian inside ``window`` (Hz).

    Bins are weighted by ``model / sqrt(n_eff)``, recomputed from the first
    pass fit, which is the standard deviation of an averaged periodogram
    bin.  The covariance is scaled up by the reduced chi-squared when that
    exceeds one.  When the spectrum records its Welch settings, the
    covariance also accounts for the correlation between neighbouring bins.
    The reported area is the full (infinite-window) Lorentzian area;
    ``direct_area`` is the floor-subtracted sum over the window divided by the
    fraction of the fitted Lorentzian that the window contains.

    ``mirror=True`` includes the image peak at ``-center`` in the model (no
    extra free parameters).  Use it for two-sided spectra of real signals,
    where the image tail otherwise lifts the fitted floor.  ``sample_rate_Hz``
    adds the aliases of the peak(s) for data sampled without an anti-alias
    filter, such as simulated trajectories.
    """
    model = dict(mirror=mirror, sample_rate_Hz=sample_rate_Hz)
    rho = _spectrum_bin_correlation(spectrum)
    spec = spectrum.window(*window)
    f = np.asarray(spec.freq_Hz, dtype=float)
    y = np.asarray(spec.psd, dtype=float)
    if len(f) < 20:
        raise ValidationError(message=f"fit window holds {len(f)} bins; need at least 20")
    n_eff = spec.n_eff if spec.n_eff > 0 else spec.n_avg
    guess = _initial_guess(f, y, smooth_bins)

    def solve(start):
        height = start[3] / (math.pi * start[2])
        scale = np.array([max(start[0], 1e-3 * height), start[2], start[2], start[3]])
        offset = np.array([0.0, start[1], 0.0, 0.0])

        def unpack(x):
            return offset + scale * x

        x0 = (start - offset) / scale
        sigma = lorentzian(f, *start, **model) / math.sqrt(n_eff)
        result = None
        for _ in range(2):
            def resid(x, sigma=sigma):
                return (lorentzian(f, *unpack(x), **model) - y) / sigma

            result = least_squares(
                resid, x0, method="trf", x_scale="jac",
                bounds=([-np.inf, -np.inf, 1e-12, -np.inf], np.inf),
                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
            )
            x0 = result.x
            sigma = np.abs(lorentzian(f, *unpack(x0), **model)) / math.sqrt(n_eff)
            if not np.all(sigma > 0):
                break
        return result, unpack(result.x), scale

    rng = np.random.default_rng(0)
    attempts = [guess]
    for _ in range(max_restarts):
        start = guess.copy()
        start[1] += guess[2] * rng.uniform(-0.5, 0.5)
        start[2] *= rng.uniform(0.5, 2.0)
        attempts.append(start)
    for start in attempts:
        try:
            result, popt, scale = solve(start)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            continue
        if result.status <= 0 or not np.all(np.isfinite(popt)) or popt[2] <= 0:
            continue
        if not (window[0] <= popt[1] <= window[1]):
            continue
        jac = result.jac
        try:
            cov_x = np.linalg.inv(jac.T @ jac)
        except np.linalg.LinAlgError:
            cov_x = np.linalg.pinv(jac.T @ jac)
        if rho is not None:
            # neighbouring Welch bins are correlated: sandwich estimator
            corr = linalg.toeplitz(np.concatenate([rho, np.zeros(max(len(f) - len(rho), 0))])[: len(f)])
            cov_x = cov_x @ (jac.T @ corr @ jac) @ cov_x
        dof = max(len(f) - 4, 1)
        chi2_red = float(np.sum(result.fun**2) / dof)
        # excess scatter beyond the periodogram variance inflates the errors
        cov = cov_x * np.outer(scale, scale) * max(1.0, chi2_red)
        cov = 0.5 * (cov + cov.T)
        floor, center, hwhm, area = (float(v) for v in popt)
        frac = lorentzian_window_fraction(f[0] - 0.5 * spec.df, f[-1] + 0.5 * spec.df, center, hwhm)
        # image and alias contributions are removed using the fitted model
        extra = lorentzian(f, 0.0, center, hwhm, area, **model) - _peak(f, center, hwhm, area)
        direct = float(np.sum(y - floor - extra) * spec.df / frac)
        return LorentzianFit(
            floor=floor, center_Hz=center, hwhm_Hz=hwhm, area=area, covariance=cov,
            chi2_red=chi2_red, n_bins=len(f), window=(float(window[0]), float(window[1])),
            direct_area=direct, mirror=mirror, sample_rate_Hz=sample_rate_Hz,
        )
    raise NoConvergence(f"Lorentzian fit failed after {max_restarts} restarts")


# --------------------------------------------------------------------------
# Area decomposition


@dataclass(frozen=True)
class NoiseAreas:
    """Total coherent-probe spin-noise area and its decomposition (areas over Hz)."""

    a_total: float
    a_total_err: float
    snl: float
    snl_err: float
    bana: float
    bana_err: float
    rsn: float
    rsn_err: float
    pna_inferred: float = float("nan")
    pna_inferred_err: float = float("nan")

    def replace(self, **changes) -> "NoiseAreas":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["convention"] = CONVENTION_TAG
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseAreas":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def decompose(a_coh: float, a_sq: float, eps_z: float, *, a_coh_err: float = 0.0,
              a_sq_err: float = 0.0, eps_z_err: float = 0.0, snl: float = float("nan"),
              snl_err: float = 0.0) -> NoiseAreas:
    """Split spin-noise areas measured with coherent and anti-squeezed probes.

    ``bana = (a_sq - a_coh)/(eps_z - 1)`` is the back-action area for a
    coherent probe and ``rsn = (eps_z a_coh - a_sq)/(eps_z - 1)`` the rest, so
    ``bana + rsn == a_coh``.  Errors are propagated to first order assuming
    independent inputs.
    """
    if not eps_z - 1.0 >= 0.1:
        raise EpsTooCloseToOne(message=f"eps_z - 1 = {eps_z - 1:.3g} < 0.1; estimator variance diverges")
    d = eps_z - 1.0
    bana = (a_sq - a_coh) / d
    rsn = a_coh - bana
    bana_err = math.hypot(math.hypot(a_sq_err, a_coh_err) / d, bana * eps_z_err / d)
    rsn_err = math.hypot(math.hypot(eps_z * a_coh_err, a_sq_err) / d, bana * eps_z_err / d)
    return NoiseAreas(
        a_total=a_coh, a_total_err=a_coh_err, snl=snl, snl_err=snl_err,
        bana=bana, bana_err=bana_err, rsn=rsn, rsn_err=rsn_err,
    )


def infer_pna_from_measurement(noise_areas: NoiseAreas, snl: float, gamma_Hz: float,
                               snl_err: float = 0.0, gamma_err: float = 0.0) -> tuple[float, float]:
    """Projection noise area ``2 sqrt(pi gamma bana snl)`` and its propagated error."""
    bana = noise_areas.bana
    if not bana > 0:
        raise NonPositiveInput(f"bana must be positive (got {bana!r})")
    pna = infer_pna(bana, snl, gamma_Hz)
    rel = 0.5 * math.sqrt((noise_areas.bana_err / bana) ** 2 + (snl_err / snl) ** 2
                          + (gamma_err / gamma_Hz) ** 2)
    return pna, pna * rel
