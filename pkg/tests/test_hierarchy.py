import math
import warnings

import numpy as np
import pytest

from specsense.emitter import CM1_TO_RADPS, R3_CM1, R4_CM1, two_level_model
from specsense.hierarchy import (
    HierarchyError, HierarchySolver, MultiIndex, SensorSpec, VanishingSignalError, all_indices,
    g2_zero, gM_zero, index_shift, index_source, power_spectrum, real_trace, solve_hierarchy,
)
from specsense.liouville import devectorize, shifted_solve, steady_state, vectorize
from specsense.oracle import build_joint, oracle_gM_zero, oracle_spectrum

from conftest import EPS, GAMMA

GRID = np.linspace(17000.0, 19000.0, 801)


@pytest.fixture(scope="module")
def spectrum(dimer, solver):
    return power_spectrum(dimer, SensorSpec.from_cm1(R3_CM1, GAMMA), GRID, solver)


# --- indices ----------------------------------------------------------------------


def test_index_enumeration_ascending_weight():
    idx = all_indices(2)
    assert len(idx) == 16
    assert [k.weight for k in idx] == sorted(k.weight for k in idx)
    assert idx[0] == MultiIndex.zeros(2) and idx[-1] == MultiIndex.ones(2)


def test_multiindex_helpers():
    k = MultiIndex.from_pairs([(1, 0), (0, 1)])
    assert k.lower == (1, 0) and k.upper == (0, 1)
    assert k.adjoint() == MultiIndex((0, 1), (1, 0))
    assert k.weight == 2 and not k.is_diagonal()
    assert MultiIndex.single(3, 1) == MultiIndex((0, 1, 0), (0, 1, 0))


def test_sensor_requires_positive_gamma():
    with pytest.raises(ValueError):
        SensorSpec(1.0, 0.0)


def test_sensor_unit_helpers():
    s = SensorSpec.from_cm1(R3_CM1, GAMMA)
    assert s.omega == pytest.approx(R3_CM1 * CM1_TO_RADPS)
    assert s.omega_cm1 == pytest.approx(R3_CM1)
    assert s.at(2.0).omega == 2.0 and s.at(2.0).gamma == GAMMA


# --- solve_hierarchy ----------------------------------------------------------


def test_zero_index_is_steady_state(dimer, aux43):
    assert np.array_equal(aux43.steady_state, steady_state(dimer.liouvillian))
    assert np.trace(aux43.steady_state).real == pytest.approx(1.0, abs=1e-14)


def test_all_residuals_below_tolerance(solver, aux43):
    res = solver.residuals(aux43)
    assert len(res) == 16
    assert max(res.values()) <= 1e-10


def test_residuals_three_sensors(solver, s4, s3):
    aux = solver.solve([s4, s3, s3])
    assert len(aux) == 64
    assert max(solver.residuals(aux).values()) <= 1e-10


def test_cross_entry_shift_carries_frequency_difference(dimer, aux43, s4, s3):
    k = MultiIndex((1, 0), (0, 1))
    z = (s4.gamma + s3.gamma) / 2 + 1j * (s4.omega - s3.omega)
    assert index_shift(k, [s4, s3]) == pytest.approx(z, rel=1e-15)
    a = dimer.emission_op("a")
    X = aux43[k]
    rhs = 1j * a @ aux43[(0, 0), (0, 1)] - 1j * aux43[(1, 0), (0, 0)] @ a.conj().T
    r = dimer.liouvillian.apply(X) - z * X - rhs
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(rhs)


def test_conjugate_pair_solved_independently(dimer, s3):
    L = dimer.liouvillian
    a = dimer.emission_op("a")
    rho = steady_state(L)
    up = devectorize(shifted_solve(L, s3.gamma / 2 + 1j * s3.omega, vectorize(1j * a @ rho)))
    down = devectorize(shifted_solve(L, s3.gamma / 2 - 1j * s3.omega, vectorize(-1j * rho @ a.conj().T)))
    assert np.abs(up - down.conj().T).max() <= 1e-10 * np.abs(up).max()


def test_conjugate_symmetry_and_diagonal_hermiticity(aux43):
    for k in aux43:
        X = aux43[k]
        assert np.abs(aux43[k.adjoint()] - X.conj().T).max() <= 1e-10 * max(np.abs(X).max(), 1e-300)
        if k.is_diagonal():
            assert np.abs(X - X.conj().T).max() <= 1e-10 * np.abs(X).max()
            assert aux43.trace(k) >= 0


def test_targeted_solve_matches_full(solver, s4, s3, aux43):
    k = MultiIndex((1, 0), (1, 0))
    part = solver.solve([s4, s3], targets=[k])
    assert len(part) == 4
    assert np.abs(part[k] - aux43[k]).max() <= 1e-12 * np.abs(aux43[k]).max()


def test_functional_front_end(dimer, s3, solver):
    aux = solve_hierarchy(dimer, [s3], solver)
    assert aux.M == 1 and len(aux) == 4


def test_index_source_at_weight_one(dimer, aux43):
    a = dimer.emission_op("a")
    src = index_source(MultiIndex((1, 0), (0, 0)), aux43.entries, [a, a])
    assert np.allclose(src, 1j * a @ aux43.steady_state, atol=0)


def test_real_trace_rejects_imaginary_residue():
    with pytest.raises(HierarchyError, match="imaginary"):
        real_trace(np.diag([1.0, 1e-6j]))


def test_two_level_lorentzian_spectrum():
    # pumped two-level emitter: S(w) = pe / (2 pi) * W / ((w - w0)^2 + (W / 2)^2), W = g + P + G
    w0, g, P, G = 5.0, 0.4, 0.1, 0.3
    m = two_level_model(w0, g, P)
    solver = HierarchySolver(m)
    pe = P / (P + g)
    width = g + P + G
    for w in (4.0, 5.0, 5.3):
        S = solver.power_spectrum(SensorSpec(w, G), [w])[0]
        expected = pe / (2 * math.pi) * width / ((w - w0) ** 2 + (width / 2) ** 2)
        assert S == pytest.approx(expected, rel=1e-10)


# --- spectrum -------------------------------------------------------------------


def test_spectrum_non_negative(spectrum):
    assert spectrum.values.min() >= -1e-12


def test_spectrum_peak_positions(spectrum):
    step = GRID[1] - GRID[0]
    peaks = spectrum.local_maxima()
    top = sorted(GRID[peaks[np.argsort(spectrum.values[peaks])[-2:]]])
    assert abs(top[0] - R3_CM1) <= step and abs(top[1] - R4_CM1) <= step, f"peaks at {top}"


def test_spectrum_decays_toward_edges(spectrum):
    v = spectrum.values
    assert v[0] < 0.05 * v.max() and v[-1] < 0.05 * v.max()


def test_spectrum_threads_agree(dimer, solver):
    s = SensorSpec.from_cm1(R3_CM1, GAMMA)
    grid = GRID[::80]
    a = power_spectrum(dimer, s, grid, solver, threads=1).values
    b = power_spectrum(dimer, s, grid, solver, threads=4).values
    assert np.abs(a - b).max() <= 1e-12 * a.max()


def test_spectrum_metadata(spectrum):
    assert spectrum.metadata["quantity"] == "S"
    assert len(spectrum) == 801


def test_empty_grid_rejected(dimer, solver, s3):
    with pytest.raises(ValueError):
        power_spectrum(dimer, s3, [], solver)


def test_spectrum_matches_oracle_and_sits_above_it(dimer, solver, s3):
    S = solver.power_spectrum(s3, [s3.omega])[0]
    so = {}
    for eps in (EPS, EPS / 3):
        so[eps] = oracle_spectrum(build_joint(dimer, [s3], eps))
    assert abs(so[EPS] - S) / S <= EPS
    assert so[EPS] < so[EPS / 3] < S


# --- zero-delay correlations ------------------------------------------------------


def test_g2_zero_antibunched(solver, s4, s3):
    assert 0 <= solver.g2_zero(s4, s3) < 1


def test_g2_zero_exchange_symmetry(solver, s4, s3):
    assert solver.g2_zero(s4, s3) == pytest.approx(solver.g2_zero(s3, s4), abs=1e-9)


def test_gM_single_sensor_is_one(solver, s3):
    assert solver.gM_zero([s3]) == 1.0


def test_gM_two_sensors_is_g2(dimer, solver, s4, s3):
    assert gM_zero(dimer, [s4, s3], solver) == pytest.approx(g2_zero(dimer, s4, s3, solver), abs=1e-12)


def test_g2_zero_oracle_overestimates(dimer, solver, s4, s3):
    g = solver.g2_zero(s4, s3)
    go = [oracle_gM_zero(build_joint(dimer, [s4, s3], e)) for e in (3 * EPS, EPS)]
    assert go[0] > go[1] > g
    # tripling eps multiplies the gap by about 9
    assert (go[0] - g) / (go[1] - g) == pytest.approx(9.0, rel=0.1)


def test_g3_matches_oracle(dimer, solver, s4, s3):
    g3 = solver.gM_zero([s4, s3, s3])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        joint = build_joint(dimer, [s4, s3, s3], EPS)
    assert oracle_gM_zero(joint) == pytest.approx(g3, rel=1e-2)


def test_vanishing_signal_raises():
    m = two_level_model(1.0, 0.5)  # no pump: the emitter never emits
    s = SensorSpec(1.0, 0.1)
    with pytest.raises(VanishingSignalError):
        HierarchySolver(m).g2_zero(s, s)
