import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from specsense import __version__
from specsense.cli import loglog_slope, main, parse_eps, parse_grid
from specsense.emitter import R3_CM1, R4_CM1, save_model, two_level_model


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))


def sidecar(path):
    return json.loads(open(str(path) + ".json").read())


# --- helpers ------------------------------------------------------------------------


def test_parse_grid():
    assert np.array_equal(parse_grid("1:3:3"), [1.0, 2.0, 3.0])
    assert np.array_equal(parse_grid("5:5:1"), [5.0])


@pytest.mark.parametrize("bad", ["1:2", "a:b:c", "1:2:0", "3:1:4"])
def test_parse_grid_rejects(bad):
    with pytest.raises(ValueError):
        parse_grid(bad)


def test_negative_grid_values_accepted(tmp_path, capsys):
    out = tmp_path / "neg.csv"
    assert run(capsys, "g2tau", "--tau", "-1:1:3", "--out", out)[0] == 0
    assert list(read_csv(out)[1][:, 0]) == [-1.0, 0.0, 1.0]


def test_parse_eps():
    assert parse_eps("eps=1e-3,3e-3") == [1e-3, 3e-3]
    assert parse_eps("2e-4") == [2e-4]
    with pytest.raises(ValueError):
        parse_eps("eps=-1")


def test_loglog_slope():
    x = np.array([1.0, 2.0, 4.0])
    assert loglog_slope(x, 3 * x**2) == pytest.approx(2.0, rel=1e-12)


# --- model ----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "dimer.json"
    assert main(["model", "export", "--out", str(path)]) == 0
    return path


def test_export_carries_splitting(exported):
    cfg = json.loads(exported.read_text())
    assert cfg["dim"] == 18
    assert cfg["metadata"]["delta_E_cm1"] == pytest.approx(1058.2, abs=0.1)


def test_export_is_bit_reproducible(exported, tmp_path, capsys):
    code, out, _ = run(capsys, "model", "export")
    assert code == 0 and out == exported.read_text()


def test_inspect_exported(exported, capsys):
    code, out, _ = run(capsys, "model", "inspect", "--model", exported)
    assert code == 0
    assert "dim: 18" in out and "excited_eigenstates: 12" in out
    assert "delta_E_cm1: 1058.12" in out


def test_inspect_malformed(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "dim": 2,\n  "hamiltonian": [[\n')
    code, out, err = run(capsys, "model", "inspect", "--model", bad)
    assert code == 1 and out == ""
    lines = err.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("specsense: error: ModelError:") and "line 4" in lines[0]


def test_computation_with_exported_model(exported, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run(capsys, "spectrum", "--model", exported, "--grid", "17455:17455:1", "--out", out)[0] == 0
    ref = tmp_path / "r.csv"
    assert run(capsys, "spectrum", "--grid", "17455:17455:1", "--out", ref)[0] == 0
    assert read_csv(out)[1][0, 1] == pytest.approx(read_csv(ref)[1][0, 1], rel=1e-12)


# --- spectrum -------------------------------------------------------------------------


def test_spectrum_default_grid_peaks(tmp_path, capsys):
    out = tmp_path / "spectrum.csv"
    assert run(capsys, "spectrum", "--out", out)[0] == 0
    header, data = read_csv(out)
    assert header == ["omega_cm1", "S"] and data.shape == (801, 2)
    w, S = data.T
    inner = np.flatnonzero((S[1:-1] > S[:-2]) & (S[1:-1] > S[2:])) + 1
    top = sorted(w[inner[np.argsort(S[inner])[-2:]]])
    step = w[1] - w[0]
    assert abs(top[0] - R3_CM1) <= step and abs(top[1] - R4_CM1) <= step, f"peaks at {top}"


def test_spectrum_single_point(tmp_path, capsys):
    out = tmp_path / "one.csv"
    assert run(capsys, "spectrum", "--grid", "18000:18000:1", "--out", out)[0] == 0
    assert read_csv(out)[1].shape == (1, 2)


def test_spectrum_oracle_column_below(tmp_path, capsys):
    out = tmp_path / "so.csv"
    assert run(capsys, "spectrum", "--grid", "17000:19000:9", "--oracle", "eps=1e-3", "--out", out)[0] == 0
    header, data = read_csv(out)
    assert header == ["omega_cm1", "S", "S_oracle_eps=0.001"]
    assert np.all(data[:, 2] <= data[:, 1])


def test_determinism_and_sidecar(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(capsys, "spectrum", "--grid", "17400:17500:11", "--out", p)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    meta = sidecar(a)
    assert meta["version"] == __version__
    assert len(meta["model_hash"]) == 16
    assert meta["tolerances"] == {"solver_residual": 1e-10, "quadrature": 1e-9}


def test_threads_consistent(tmp_path, capsys):
    a, b = tmp_path / "t1.csv", tmp_path / "t4.csv"
    assert run(capsys, "spectrum", "--grid", "17000:19000:41", "--out", a)[0] == 0
    assert run(capsys, "spectrum", "--grid", "17000:19000:41", "--threads", 4, "--out", b)[0] == 0
    x, y = read_csv(a)[1], read_csv(b)[1]
    assert np.abs(x - y).max() <= 1e-12 * np.abs(x).max()
    assert sidecar(b)["threads"] == 4


# --- g2map ----------------------------------------------------------------------------


def test_g2map_antibunched(tmp_path, capsys):
    out = tmp_path / "map.csv"
    assert run(capsys, "g2map", "--out", out)[0] == 0
    header, data = read_csv(out)
    assert header == ["omega1_cm1", "omega2_cm1", "g2"] and data.shape == (201, 3)
    assert np.all(data[:, 1] == R3_CM1)
    assert data[:, 2].max() < 1


def test_g2map_full_grid_symmetric(tmp_path, capsys):
    out = tmp_path / "map2.csv"
    assert run(capsys, "g2map", "--grid", "17300:18600:4", "--grid2", "17300:18600:4", "--out", out)[0] == 0
    g = read_csv(out)[1][:, 2].reshape(4, 4)
    assert np.abs(g - g.T).max() <= 1e-9


def test_g2map_oracle_scaling(tmp_path, capsys):
    out = tmp_path / "mapo.csv"
    code = run(capsys, "g2map", "--grid", "18515:18515:1", "--oracle", "eps=1e-3,3e-3", "--out", out)[0]
    assert code == 0
    header, data = read_csv(out)
    d1 = data[0, header.index("abs_delta_eps=0.001")]
    d3 = data[0, header.index("abs_delta_eps=0.003")]
    assert d3 / d1 == pytest.approx(9.0, rel=0.1)


# --- g2tau ----------------------------------------------------------------------------


def test_g2tau_default(tmp_path, capsys):
    out = tmp_path / "tau.csv"
    assert run(capsys, "g2tau", "--components", "--out", out)[0] == 0
    header, data = read_csv(out)
    assert header == ["tau_ps", "g2", "I0", "I1", "I2"] and data.shape == (201, 5)
    tau, g = data[:, 0], data[:, 1]
    assert g[100] < 1
    assert np.abs(g - g[::-1]).max() > 0.01
    assert abs(g[0] - 1) < abs(g[100] - 1) and abs(g[-1] - 1) < abs(g[100] - 1)
    # I0 is a pure exponential on each branch
    gamma = sidecar(out)["gamma_sensor"]
    for sel in (tau >= 0, tau <= 0):
        t, I0 = np.abs(tau[sel]), data[sel, 2]
        assert np.allclose(np.log(I0 / I0[t == 0][0]), -gamma * t, rtol=0, atol=1e-12)


def test_g2tau_oracle(tmp_path, capsys):
    out = tmp_path / "tauo.csv"
    code = run(capsys, "g2tau", "--tau", "-20:20:41", "--oracle", "eps=1e-3", "--out", out)[0]
    assert code == 0
    header, data = read_csv(out)
    assert header == ["tau_ps", "g2", "g2_oracle_eps=0.001"]
    dev = sidecar(out)["max_relative_deviation"]
    assert dev["0.001"] <= 0.01


# --- gM -------------------------------------------------------------------------------


def test_gM_three_sensors(tmp_path, capsys):
    out = tmp_path / "g3.csv"
    assert run(capsys, "gM", "--omegas", f"{R4_CM1},{R3_CM1},{R3_CM1}", "--out", out)[0] == 0
    header, data = read_csv(out)
    assert header == ["M", "gM"] and data[0, 0] == 3
    assert data[0, 1] == pytest.approx(0.021956, rel=1e-4)


# --- convergence ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def convergence(tmp_path_factory):
    out = tmp_path_factory.mktemp("conv") / "conv.csv"
    assert main(["convergence", "--out", str(out)]) == 0
    return out


def test_convergence_table(convergence):
    header, data = read_csv(convergence)
    assert header[:3] == ["eps_cm1", "S_oracle", "g2_oracle"]
    assert data.shape == (5, 7)
    assert np.all(data[:, 1] < data[:, 3]) and np.all(data[:, 2] > data[:, 4])


def test_convergence_g2_slope(convergence):
    assert sidecar(convergence)["slope_g2"] == pytest.approx(2.0, abs=0.3)


def test_convergence_spectrum_slope(convergence):
    assert sidecar(convergence)["slope_spectrum"] == pytest.approx(1.0, abs=0.3)


def test_convergence_warning_recorded(convergence):
    warnings = sidecar(convergence)["warnings"]
    assert len(warnings) == 1 and "0.01 cm^-1" in warnings[0]


def test_convergence_single_eps(tmp_path, capsys):
    out = tmp_path / "c1.csv"
    assert run(capsys, "convergence", "--oracle", "eps=1e-3", "--out", out)[0] == 0
    assert read_csv(out)[1].shape == (1, 7)
    meta = sidecar(out)
    assert "slope_spectrum" not in meta and meta["warnings"] == []


# --- errors ---------------------------------------------------------------------------


@pytest.mark.parametrize("argv", [
    ["spectrum", "--grid", "1:2"],
    ["g2tau", "--threads", "0"],
    ["spectrum", "--gamma-sensor", "-1"],
    ["nonsense"],
    [],
])
def test_usage_errors(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert len(err.strip().splitlines()) == 1 and err.startswith("specsense: error: UsageError:")


def test_missing_model_file(tmp_path, capsys):
    code, _, err = run(capsys, "spectrum", "--model", tmp_path / "none.json", "--grid", "1:1:1")
    assert code == 1 and "cannot read model file" in err


def test_vanishing_signal_error(tmp_path, capsys):
    # an unpumped emitter relaxes to its ground state and never emits
    model = tmp_path / "dark.json"
    save_model(two_level_model(1.0, 0.5), model)
    out = tmp_path / "dark.csv"
    code, _, err = run(capsys, "g2map", "--model", model, "--grid", "5:5:1", "--omega2", 5, "--out", out)
    assert code == 1 and err.startswith("specsense: error: VanishingSignalError:")


@pytest.mark.skipif(shutil.which("specsense") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["specsense", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
