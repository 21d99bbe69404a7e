"""Monte Carlo integration of the transverse-spin Langevin equations.

The state is kept as the complex amplitude ``c = J_z + i*J_y``.  Without
noise it obeys ``dc/dt = -(Gamma + i*Omega) c`` (angular rates), so both
update schemes reduce to a first-order complex recursion
``c[n+1] = lam * c[n] + xi[n]`` that is run through ``scipy.signal.lfilter``.

``method="exact"``
    Exact discretization of the linear SDE: ``lam = exp(-(Gamma+i*Omega) dt)``
    and ``xi`` is Gaussian with the integrated covariance of the forcing.
    Unconditionally stable.
``method="euler"``
    Euler-Maruyama, ``lam = 1 - (Gamma+i*Omega) dt``.  Its numerical
    anti-damping is ``Omega^2 dt / 2``, so it is only accurate for
    ``dt << 2 Gamma / Omega^2`` in the lab frame.

In the rotating frame the counter-rotating part of the unequal J_y/J_z
forcing is dropped (the narrow-band approximation), leaving an isotropic
complex Ornstein-Uhlenbeck envelope that is modulated back to the lab.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import rng
from .analytic import _force_strengths
from .exceptions import DurationTooShort, InsufficientData, StepTooLarge, ValidationError
from .params import ExperimentParams, Trajectory, validate

FRAMES = ("lab", "rotating")
INITIAL_SPIN = ("deterministic", "thermal")
METHODS = ("exact", "euler")


@dataclass(frozen=True)
class SimConfig:
    """Integration settings for one realization.

    ``sz_gate`` optionally restricts the probe's S_z input (the back-action)
    to the time interval ``[t_on, t_off)``.  ``burn_in_s`` is simulated and
    then discarded.  ``initial_state`` overrides ``initial_spin`` with an
    explicit ``(J_y, J_z)``.
    """

    duration_s: float
    dt_s: float
    seed: int = 0
    frame: str = "lab"
    initial_spin: str = "thermal"
    method: str = "exact"
    burn_in_s: float = 0.0
    sz_gate: tuple[float, float] | None = None
    initial_state: tuple[float, float] | None = None
    noise: bool = True

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.dt_s))

    @property
    def n_burn(self) -> int:
        return int(round(self.burn_in_s / self.dt_s))

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError([f"unknown SimConfig key(s): {', '.join(unknown)}"])
        data = dict(data)
        for key in ("sz_gate", "initial_state"):
            if data.get(key) is not None:
                data[key] = tuple(float(v) for v in data[key])
        return cls(**data)


def check_config(params: ExperimentParams, config: SimConfig) -> SimConfig:
    """Raise on invalid settings; warn when the run is too short to be stationary."""
    errors = []
    if config.frame not in FRAMES:
        errors.append(ValidationError(message=f"frame must be one of {FRAMES}"))
    if config.initial_spin not in INITIAL_SPIN:
        errors.append(ValidationError(message=f"initial_spin must be one of {INITIAL_SPIN}"))
    if config.method not in METHODS:
        errors.append(ValidationError(message=f"method must be one of {METHODS}"))
    if not (config.dt_s > 0 and config.duration_s > 0):
        errors.append(ValidationError(message="dt_s and duration_s must be positive"))
    elif config.n_steps < 2:
        errors.append(ValidationError(message="duration_s must cover at least two steps"))
    if config.burn_in_s < 0:
        errors.append(ValidationError(message="burn_in_s must be non-negative"))
    if not 0 <= int(config.seed) < 2**64:
        errors.append(ValidationError(message="seed must be an unsigned 64-bit integer"))
    if config.dt_s > 0 and config.frame == "lab" and config.dt_s > 1.0 / (50.0 * params.larmor_Hz):
        errors.append(StepTooLarge(
            message=f"lab frame needs dt_s <= 1/(50*larmor_Hz) = {1 / (50 * params.larmor_Hz):.3g} s"))
    if config.dt_s > 0 and config.frame == "rotating" and config.dt_s > 1.0 / (50.0 * params.gamma_Hz):
        errors.append(StepTooLarge(
            message=f"rotating frame needs dt_s <= 1/(50*gamma_Hz) = {1 / (50 * params.gamma_Hz):.3g} s"))
    if len(errors) == 1:
        raise errors[0]
    if errors:
        raise ValidationError(errors)
    if config.duration_s + config.burn_in_s < 10.0 / params.gamma_Hz:
        warnings.warn(
            f"duration {config.duration_s:g} s is shorter than 10/gamma_Hz; "
            "the spectrum will not be stationary",
            DurationTooShort,
            stacklevel=3,
        )
    return config


def step_variances(params: ExperimentParams, dt_s: float) -> dict:
    """Per-step variances of the white inputs sampled at step ``dt_s``.

    ``sz_in`` and ``sy_in`` have two-sided densities ``eps S_x / 2`` so their
    per-sample variance is ``eps S_x / (2 dt)``; each Langevin-force increment
    has variance ``(Gamma J_x + k_tech) dt``.
    """
    return {
        "sz_in": params.eps_z * params.flux_Sx / (2.0 * dt_s),
        "sy_in": params.eps_y * params.flux_Sx / (2.0 * dt_s),
        "force": (params.gamma_ang * params.spin_Jx + params.tech_noise_k) * dt_s,
    }


def exact_step_covariance(params: ExperimentParams, dt_s: float, frame: str = "lab",
                          backaction: bool = True) -> np.ndarray:
    """Covariance of the (J_z, J_y) noise accumulated over one exact step.

    Integral of ``exp(A u) Q exp(A^T u)`` over ``[0, dt]`` with
    ``Q = diag(q_z, q_y)``, evaluated in closed form.  In the rotating frame
    only the isotropic part survives.
    """
    G, W = params.gamma_ang, params.larmor_ang
    ba, quantum, technical = _force_strengths(params)
    q_z = quantum + technical
    q_y = q_z + (ba if backaction else 0.0)
    mean_q = 0.5 * (q_z + q_y)
    half_diff = 0.5 * (q_z - q_y)
    iso = -math.expm1(-2.0 * G * dt_s) / (2.0 * G)
    cov = mean_q * iso * np.eye(2)
    if frame == "lab" and half_diff != 0.0:
        # integral of exp(-2G u) exp(2i W u) du over [0, dt]
        z = complex(-2.0 * G, 2.0 * W)
        integral = np.expm1(z * dt_s) / z
        ic, is_ = integral.real, integral.imag
        cov = cov + half_diff * np.array([[ic, -is_], [-is_, -ic]])
    return cov


def _cholesky2(cov: np.ndarray) -> np.ndarray:
    # Tiny negative eigenvalues from rounding are clipped.
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _gate_mask(config: SimConfig, n_total: int) -> np.ndarray | None:
    """Per-step boolean: S_z input active during step n -> n+1."""
    if config.sz_gate is None:
        return None
    t_on, t_off = config.sz_gate
    t = (np.arange(n_total - 1) - config.n_burn) * config.dt_s
    return (t >= t_on) & (t < t_off)


def _increments(params, config, realization, n_total) -> np.ndarray:
    """Complex noise increments xi[n] (J_z + i J_y) for n = 0 .. n_total-2."""
    n = n_total - 1
    p, dt = params, config.dt_s
    gate = _gate_mask(config, n_total)
    state = rng.stream(config.seed, realization, rng.STATE).standard_normal((n, 2))

    if config.method == "exact":
        if config.frame == "rotating":
            on = math.sqrt(exact_step_covariance(p, dt, "rotating")[0, 0])
            off = math.sqrt(exact_step_covariance(p, dt, "rotating", backaction=False)[0, 0])
            scale = on if gate is None else np.where(gate, on, off)[:, None]
            xi = state * scale
            out = xi[:, 0] + 1j * xi[:, 1]
        else:
            L_on = _cholesky2(exact_step_covariance(p, dt, "lab"))
            xi = state @ L_on.T
            if gate is not None:
                L_off = _cholesky2(exact_step_covariance(p, dt, "lab", backaction=False))
                xi = np.where(gate[:, None], xi, state @ L_off.T)
            out = xi[:, 0] + 1j * xi[:, 1]
        return out

    # Euler-Maruyama with explicitly sampled inputs
    var = step_variances(p, dt)
    force = state * math.sqrt(var["force"])
    sz = rng.stream(config.seed, realization, rng.BACKACTION).standard_normal(n)
    sz *= math.sqrt(var["sz_in"])
    if gate is not None:
        sz = np.where(gate, sz, 0.0)
    kick = p.coupling_a * p.spin_Jx * sz * dt
    if config.frame == "rotating":
        # isotropic envelope noise carrying the same total power
        total = 2.0 * var["force"] + (p.coupling_a * p.spin_Jx) ** 2 * var["sz_in"] * dt**2
        if gate is None:
            scale = math.sqrt(0.5 * total)
        else:
            scale = np.sqrt(0.5 * np.where(gate, total, 2.0 * var["force"]))[:, None]
        xi = state * scale
        return xi[:, 0] + 1j * xi[:, 1]
    return force[:, 0] + 1j * (force[:, 1] + kick)


def _initial(params, config, realization) -> complex:
    if config.initial_state is not None:
        jy0, jz0 = config.initial_state
        return complex(jz0, jy0)
    if config.initial_spin == "deterministic":
        return 0j
    draw = rng.stream(config.seed, realization, rng.INITIAL).standard_normal(2)
    draw *= math.sqrt(params.spin_Jx / 2.0)
    return complex(draw[0], draw[1])


def simulate(params: ExperimentParams, config: SimConfig, realization: int = 0) -> Trajectory:
    """Integrate one realization and record ``(J_y, J_z, S_y_out)`` at every step.

    The detected output is ``S_y_in + a S_x J_z`` with ``S_y_in`` white of
    two-sided density ``eps_y S_x / 2``.  Identical ``(params, config,
    realization)`` give bit-identical trajectories.
    """
    if params.spin_Jx == 0:
        validate(params.replace(spin_Jx=1.0), analytic=False)
    else:
        validate(params, analytic=False)
    check_config(params, config)

    n_burn = config.n_burn
    n_total = config.n_steps + n_burn
    p = params
    dt = config.dt_s

    if p.spin_Jx == 0:
        c = np.zeros(n_total, dtype=complex)
    else:
        if config.noise:
            drive = np.empty(n_total, dtype=complex)
            drive[1:] = _increments(p, config, realization, n_total)
        else:
            drive = np.zeros(n_total, dtype=complex)
        drive[0] = _initial(p, config, realization)
        G, W = p.gamma_ang, p.larmor_ang
        if config.frame == "rotating":
            # envelope b = exp(i W t) c decays without rotation
            lam = math.exp(-G * dt) if config.method == "exact" else 1.0 - G * dt
            b = lfilter([1.0], [1.0, -lam], drive)
            c = b * np.exp(-1j * W * dt * np.arange(n_total))
        else:
            z = complex(G, W) * dt
            lam = np.exp(-z) if config.method == "exact" else 1.0 - z
            c = lfilter([1.0], [1.0, -lam], drive)

    c = c[n_burn:]
    jz = np.ascontiguousarray(c.real)
    jy = np.ascontiguousarray(c.imag)
    if config.noise:
        shot = rng.stream(config.seed, realization, rng.SHOT).standard_normal(n_total)[n_burn:]
        shot *= math.sqrt(step_variances(p, dt)["sy_in"])
    else:
        shot = np.zeros(config.n_steps)
    sy_out = shot + p.coupling_a * p.flux_Sx * jz
    return Trajectory(
        dt_s=dt,
        jy=jy,
        jz=jz,
        sy_out=sy_out,
        seed=int(config.seed),
        params_digest=params.digest(),
        realization=realization,
    )


def simulate_ensemble(params: ExperimentParams, config: SimConfig, n_realizations: int,
                      workers: int = 1, start: int = 0) -> list[Trajectory]:
    """``n_realizations`` independent trajectories, realization indices ``start ...``.

    Output order and content do not depend on ``workers``.
    """
    if n_realizations < 1:
        raise ValidationError(message="n_realizations must be >= 1")
    indices = range(start, start + n_realizations)
    if workers <= 1:
        return [simulate(params, config, i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: simulate(params, config, i), indices))


def decay_autocorrelation(params: ExperimentParams, config: SimConfig, lags_s,
                          n_blocks: int = 20) -> dict:
    """Empirical autocorrelation of J_z and its decay envelope from one run.

    The envelope is ``|<c(t+tau) c*(t)>| / 2`` with ``c = J_z + i J_y``,
    which removes the Larmor oscillation; for a free coherent spin state it is
    ``(J_x/2) exp(-Gamma tau)``.  Standard errors come from ``n_blocks``
    independent blocks of the trajectory.
    """
    if params.coupling_a != 0:
        raise ValidationError(message="decay_autocorrelation needs coupling_a == 0")
    traj = simulate(params, config)
    lags = np.rint(np.asarray(lags_s, dtype=float) / config.dt_s).astype(int)
    if np.any(lags < 0):
        raise ValidationError(message="lags must be non-negative")
    c = traj.jz + 1j * traj.jy
    block = len(c) // n_blocks
    if n_blocks < 2 or block < 4 * (lags.max() + 1):
        raise InsufficientData(
            f"need blocks of at least {4 * (lags.max() + 1)} samples, have {block}")

    env = np.empty((n_blocks, len(lags)))
    acf = np.empty((n_blocks, len(lags)))
    for k in range(n_blocks):
        seg = c[k * block:(k + 1) * block]
        m = len(seg)
        nfft = 1 << int(math.ceil(math.log2(2 * m)))
        spec = np.fft.fft(seg, nfft)
        full = np.fft.ifft(spec * np.conj(spec))[: lags.max() + 1] / (m - np.arange(lags.max() + 1))
        # full[l] = <c(t+l) c*(t)>
        zspec = np.fft.rfft(seg.real, nfft)
        zfull = np.fft.irfft(zspec * np.conj(zspec), nfft)[: lags.max() + 1] / (m - np.arange(lags.max() + 1))
        env[k] = np.abs(full[lags]) / 2.0
        acf[k] = zfull[lags]
    return {
        "lags_s": lags * config.dt_s,
        "acf_jz": acf.mean(axis=0),
        "envelope": env.mean(axis=0),
        "envelope_stderr": env.std(axis=0, ddof=1) / math.sqrt(n_blocks),
        "acf_stderr": acf.std(axis=0, ddof=1) / math.sqrt(n_blocks),
    }
