import json
import math

import numpy as np
import pytest

from spinmem import io as sio
from spinmem.exceptions import ValidationError
from spinmem.params import CONVENTION_TAG, Spectrum
from spinmem.sde import SimConfig, simulate
from spinmem.spectral import NoiseAreas, fit_lorentzian, lorentzian


@pytest.fixture
def traj(params):
    return simulate(params, SimConfig(duration_s=0.05, dt_s=1 / 16000, frame="rotating", seed=4), 2)


def test_trajectory_binary_round_trip(tmp_path, params, traj):
    path = sio.save_trajectory(tmp_path / "t.bin", traj)
    back = sio.load_trajectory(path, params)
    np.testing.assert_array_equal(back.sy_out, traj.sy_out)
    np.testing.assert_array_equal(back.jy, traj.jy)
    assert (back.seed, back.realization, back.dt_s) == (4, 2, traj.dt_s)


def test_trajectory_hash_mismatch(tmp_path, params, traj):
    path = sio.save_trajectory(tmp_path / "t.bin", traj)
    with pytest.raises(ValidationError, match="does not match"):
        sio.load_trajectory(path, params.replace(eps_z=2.0))
    (tmp_path / "bad.bin").write_bytes(b"x" * 64)
    with pytest.raises(ValidationError):
        sio.load_trajectory(tmp_path / "bad.bin", None)


def test_trajectory_csv_header(traj):
    text = sio.trajectory_csv(traj)
    first, second = text.splitlines()[:2]
    assert CONVENTION_TAG in first and traj.params_digest in first
    assert second == "t,jy,jz,sy_out"


@pytest.mark.parametrize("suffix", ["csv", "json"])
def test_spectrum_round_trip(tmp_path, suffix):
    f = np.linspace(1000, 2000, 101)
    spec = Spectrum(freq_Hz=f, psd=lorentzian(f, 1.0, 1500.0, 30.0, 100.0), rbw_Hz=15.0, n_avg=40,
                    n_eff=37.5, stderr=np.full(101, 0.1),
                    meta={"params_digest": "abc", "window": "hann", "overlap": 0.5, "segment_length": 256,
                          "n_segments": 12})
    back = sio.load_spectrum(sio.save_spectrum(tmp_path / f"s.{suffix}", spec))
    np.testing.assert_array_equal(back.psd, spec.psd)
    np.testing.assert_array_equal(back.stderr, spec.stderr)
    assert (back.rbw_Hz, back.n_avg, back.n_eff) == (15.0, 40, 37.5)
    assert back.meta["window"] == "hann" and back.meta["n_segments"] == 12


def test_fit_round_trip(tmp_path):
    f = np.arange(1500.0, 3300.0, 4.0)
    spec = Spectrum(freq_Hz=f, psd=lorentzian(f, 1.0, 2400.0, 80.0, 500.0), rbw_Hz=6.0, n_avg=100, n_eff=100.0)
    fit = fit_lorentzian(spec, (1600.0, 3200.0))
    back = sio.load_fit(sio.save_fit(tmp_path / "fit.json", fit))
    assert back.params() == fit.params()
    np.testing.assert_array_equal(back.covariance, fit.covariance)
    assert json.loads((tmp_path / "fit.json").read_text())["convention"] == CONVENTION_TAG


def test_noise_areas_nan_as_null(tmp_path):
    areas = NoiseAreas(1.0, 0.1, 2.0, 0.0, 0.5, 0.05, 0.5, 0.06)
    path = sio.write_json(tmp_path / "a.json", areas.to_dict())
    assert json.loads(path.read_text())["pna_inferred"] is None
    back = sio.load_noise_areas(path)
    assert math.isnan(back.pna_inferred) and back.bana == 0.5
    assert sio.noise_areas_csv(areas).splitlines()[1].startswith("a_total,")


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.json"
    sio.write_json(target, {"a": 1})
    with pytest.raises(TypeError):
        sio.write_atomic(target, 12345)
    assert json.loads(target.read_text()) == {"a": 1}
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.json"]


def test_plot_data_columns():
    text = sio.plot_data([1, 2], [3, 4], [0.1, 0.2], header="x y err")
    rows = [line.split() for line in text.splitlines()[1:]]
    assert rows == [["1", "3", "0.10000000000000001"], ["2", "4", "0.20000000000000001"]]
