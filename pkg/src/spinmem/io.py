"""File formats: binary/CSV trajectories, spectra, fits, areas and plot data.

Every writer goes through :func:`write_atomic` (temporary file plus rename) so a
failed run never leaves a half-written output behind.  Floats are written with
17 significant digits, so identical inputs give byte-identical files.
"""
from __future__ import annotations

import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .params import CONVENTION_TAG, ExperimentParams, Spectrum, Trajectory
from .spectral import LorentzianFit, NoiseAreas

MAGIC = b"SPINMEM\x01"
# magic, params digest (16 ascii), dt, seed, realization, length
_HEADER = struct.Struct("<8s16sdQQQ")
_FLOAT_FMT = "%.17g"


def write_atomic(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    # JSON has no NaN/inf; write them as null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(path, obj) -> Path:
    return write_atomic(path, dumps(obj))


def _csv(header: str, names, columns) -> str:
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    buf.write(",".join(names) + "\n")
    np.savetxt(buf, np.column_stack(columns), delimiter=",", fmt=_FLOAT_FMT)
    return buf.getvalue()


def _header(params_digest: str = "") -> str:
    return f"convention={CONVENTION_TAG}; params={params_digest or 'none'}"


# --------------------------------------------------------------------------
# trajectories


def trajectory_bytes(traj: Trajectory) -> bytes:
    digest = (traj.params_digest or "0" * 16).encode("ascii")
    head = _HEADER.pack(MAGIC, digest, traj.dt_s, traj.seed, traj.realization, len(traj))
    body = np.column_stack([traj.jy, traj.jz, traj.sy_out]).astype("<f8").tobytes()
    return head + body


def save_trajectory(path, traj: Trajectory) -> Path:
    """Binary columnar file: header then (jy, jz, sy_out) rows of little-endian float64."""
    return write_atomic(path, trajectory_bytes(traj))


def load_trajectory(path, params: ExperimentParams | str | None) -> Trajectory:
    """Read a binary trajectory, requiring its params hash to match ``params``.

    Pass ``None`` only to skip the check deliberately.
    """
    raw = Path(path).read_bytes()
    magic, digest, dt, seed, realization, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValidationError(message=f"{path}: not a trajectory file")
    digest = digest.decode("ascii")
    if params is not None:
        expected = params if isinstance(params, str) else params.digest()
        if digest != expected:
            raise ValidationError(message=f"{path}: params hash {digest} does not match {expected}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 3 * n:
        raise ValidationError(message=f"{path}: truncated body")
    cols = body.reshape(n, 3).astype(float)
    return Trajectory(dt_s=dt, jy=cols[:, 0].copy(), jz=cols[:, 1].copy(), sy_out=cols[:, 2].copy(),
                      seed=int(seed), params_digest=digest, realization=int(realization))


def trajectory_csv(traj: Trajectory) -> str:
    return _csv(_header(traj.params_digest) + f"; seed={traj.seed}; realization={traj.realization}",
                ("t", "jy", "jz", "sy_out"), (traj.t, traj.jy, traj.jz, traj.sy_out))


# --------------------------------------------------------------------------
# spectra


def spectrum_csv(spec: Spectrum) -> str:
    digest = spec.meta.get("params_digest", "")
    head = _header(digest) + f"; rbw_Hz={spec.rbw_Hz!r}; n_avg={spec.n_avg}; n_eff={spec.n_eff!r}"
    for key in _WELCH_KEYS:
        if spec.meta.get(key) is not None:
            head += f"; {key}={spec.meta[key]!r}"
    if spec.stderr is not None:
        return _csv(head, ("freq_Hz", "psd", "stderr"), (spec.freq_Hz, spec.psd, spec.stderr))
    return _csv(head, ("freq_Hz", "psd"), (spec.freq_Hz, spec.psd))


def spectrum_dict(spec: Spectrum) -> dict:
    meta = dict(spec.meta)
    meta.setdefault("convention", CONVENTION_TAG)
    return {
        "meta": meta,
        "rbw_Hz": spec.rbw_Hz,
        "n_avg": spec.n_avg,
        "n_eff": spec.n_eff,
        "freq_Hz": np.asarray(spec.freq_Hz).tolist(),
        "psd": np.asarray(spec.psd).tolist(),
        "stderr": None if spec.stderr is None else np.asarray(spec.stderr).tolist(),
    }


def save_spectrum(path, spec: Spectrum, fmt: str | None = None) -> Path:
    fmt = fmt or Path(path).suffix.lstrip(".")
    if fmt == "csv":
        return write_atomic(path, spectrum_csv(spec))
    return write_json(path, spectrum_dict(spec))


# Welch settings kept in the CSV header so a reloaded spectrum fits the same way
_WELCH_KEYS = ("window", "overlap", "segment_length", "n_segments", "n_realizations", "dt_s")


def _parse_header(line: str) -> dict:
    out = {}
    for part in line.lstrip("#").split(";"):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def load_spectrum(path) -> Spectrum:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        lines = text.splitlines()
        head = _parse_header(lines[0]) if lines[0].startswith("#") else {}
        names = lines[1 if head else 0].split(",")
        data = np.loadtxt(io.StringIO("\n".join(lines[2 if head else 1:])), delimiter=",", ndmin=2)
        cols = dict(zip(names, data.T))
        meta = {"convention": head.get("convention", CONVENTION_TAG)}
        if head.get("params", "none") != "none":
            meta["params_digest"] = head["params"]
        for key in _WELCH_KEYS:
            if key in head:
                meta[key] = head[key].strip("'") if key == "window" else float(head[key])
        df = cols["freq_Hz"][1] - cols["freq_Hz"][0]
        return Spectrum(
            freq_Hz=cols["freq_Hz"], psd=cols["psd"],
            rbw_Hz=float(head.get("rbw_Hz", df)), n_avg=int(head.get("n_avg", 1)),
            n_eff=float(head.get("n_eff", 0.0)), stderr=cols.get("stderr"), meta=meta,
        )
    d = json.loads(text)
    return Spectrum(
        freq_Hz=np.asarray(d["freq_Hz"], dtype=float), psd=np.asarray(d["psd"], dtype=float),
        rbw_Hz=float(d["rbw_Hz"]), n_avg=int(d["n_avg"]), n_eff=float(d.get("n_eff", 0.0)),
        stderr=None if d.get("stderr") is None else np.asarray(d["stderr"], dtype=float),
        meta=d.get("meta", {}),
    )


# --------------------------------------------------------------------------
# fits, areas, tables


def save_fit(path, fit: LorentzianFit) -> Path:
    return write_json(path, fit.to_dict())


def load_fit(path) -> LorentzianFit:
    d = json.loads(Path(path).read_text())
    d = {k: (float("nan") if v is None else v) for k, v in d.items()}
    return LorentzianFit.from_dict(d)


def noise_areas_csv(areas: NoiseAreas) -> str:
    d = areas.to_dict()
    d.pop("convention")
    names = list(d)
    buf = io.StringIO()
    buf.write(f"# {_header()}\n")
    buf.write(",".join(names) + "\n")
    buf.write(",".join(_FLOAT_FMT % d[k] for k in names) + "\n")
    return buf.getvalue()


def load_noise_areas(path) -> NoiseAreas:
    d = json.loads(Path(path).read_text())
    return NoiseAreas.from_dict({k: (float("nan") if v is None else v) for k, v in d.items()})


def table_csv(rows: list[dict], params_digest: str = "") -> str:
    """Rows of numbers (one dict per row, same keys) as CSV with the convention header."""
    names = [k for k in rows[0] if isinstance(rows[0][k], (int, float))]
    buf = io.StringIO()
    buf.write(f"# {_header(params_digest)}\n")
    buf.write(",".join(names) + "\n")
    for r in rows:
        buf.write(",".join(_FLOAT_FMT % r[k] for k in names) + "\n")
    return buf.getvalue()


def plot_data(x, y, yerr=None, header: str = "") -> str:
    """Two-column (x, y) or three-column (x, y, yerr) whitespace-separated data."""
    cols = [np.asarray(x, dtype=float), np.asarray(y, dtype=float)]
    if yerr is not None:
        cols.append(np.asarray(yerr, dtype=float))
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    np.savetxt(buf, np.column_stack(cols), fmt=_FLOAT_FMT)
    return buf.getvalue()
