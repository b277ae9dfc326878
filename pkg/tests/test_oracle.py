import warnings

import numpy as np
import pytest

from specsense.emitter import CM1_TO_RADPS, EmitterModel, two_level_model
from specsense.hierarchy import SensorSpec
from specsense.liouville import LindbladChannel, steady_state
from specsense.oracle import (
    JointSystem, OracleError, OracleWarning, build_joint, eps_bound, excitation_labels,
    normal_order_check, oracle_g2_tau, oracle_gM_zero, oracle_spectrum,
)

from conftest import EPS


@pytest.fixture(scope="module")
def joint3(dimer, s3):
    return build_joint(dimer, [s3], EPS)


@pytest.fixture(scope="module")
def joint33(dimer, s3):
    return build_joint(dimer, [s3, s3], EPS)


def test_dimensions(joint3, joint43):
    assert joint3.dim == 36 and joint3.liouvillian.matrix.shape == (1296, 1296)
    assert joint43.dim == 72 and joint43.liouvillian.matrix.shape == (5184, 5184)
    assert isinstance(joint3, JointSystem) and joint3.M == 1


def test_eps_units(joint3):
    assert joint3.eps_cm1 == pytest.approx(1e-3, rel=1e-14)


def test_trace_preserving(joint3, joint43):
    assert joint3.liouvillian.is_trace_preserving(atol=1e-12)
    assert joint43.liouvillian.is_trace_preserving(atol=1e-12)


def test_tensor_order_emitter_first(joint43):
    occ = joint43.occupations
    assert occ.shape == (72, 2)
    assert list(map(tuple, occ[:4])) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_decoupled_limit(dimer, s3):
    joint = build_joint(dimer, [s3], 0.0)
    ground = np.diag([1.0, 0.0])
    expected = np.kron(steady_state(dimer.liouvillian), ground)
    assert np.abs(joint.steady_state() - expected).max() <= 1e-10


def test_zero_eps_spectrum_raises(dimer, s3):
    with pytest.raises(OracleError, match="0/0"):
        oracle_spectrum(build_joint(dimer, [s3], 0.0))


def test_negative_eps_rejected(dimer, s3):
    with pytest.raises(ValueError):
        build_joint(dimer, [s3], -1.0)


def test_dimension_cap(dimer, s3):
    with pytest.raises(OracleError, match="exceeds the cap"):
        build_joint(dimer, [s3] * 4, EPS)
    assert build_joint(dimer, [s3], EPS, max_dim=36).dim == 36
    with pytest.raises(OracleError):
        build_joint(dimer, [s3], EPS, max_dim=35)


def test_weak_coupling_warning(dimer, s3):
    bound = eps_bound(dimer, [s3])
    assert bound / CM1_TO_RADPS == pytest.approx(0.0487, abs=1e-4)
    with pytest.warns(OracleWarning, match="not small"):
        joint = build_joint(dimer, [s3], 0.5 * bound)
    assert joint.warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert build_joint(dimer, [s3], 0.05 * bound).warnings == ()


def test_steady_state_is_physical(joint3):
    rho = joint3.steady_state()
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert np.abs(rho - rho.conj().T).max() <= 1e-12
    assert np.linalg.eigvalsh(rho).min() >= -1e-12


def test_sensor_population_small(joint43):
    for m in range(2):
        assert joint43.population(m) * joint43.eps**2 < 1e-6


def test_population_matches_full_state(joint3):
    rho = joint3.steady_state()
    n = np.kron(np.eye(18), np.diag([0.0, 1.0]))
    assert np.trace(n @ rho).real / joint3.eps**2 == pytest.approx(joint3.population(0), rel=1e-6)


def test_excitation_labels(dimer):
    labels = excitation_labels(dimer)
    assert list(labels[:6]) == [0] * 6 and list(labels[6:]) == [1] * 12


def test_excitation_labels_absent_without_conserved_number():
    H = np.array([[0, 0.3], [0.3, 1.0]])
    m = EmitterModel(H, (LindbladChannel(np.array([[0, 1.0], [0, 0]]), 1.0),),
                     {"a": np.array([[0, 1.0], [0, 0]])})
    assert excitation_labels(m) is None


def test_oracle_without_labels_still_runs():
    # coherent drive mixes excitation numbers, so the full joint space is used
    H = np.array([[0, 0.3], [0.3, 5.0]])
    sm = np.array([[0, 1.0], [0, 0]])
    m = EmitterModel(H, (LindbladChannel(sm, 1.0),), {"a": sm})
    s = SensorSpec(5.0, 0.5)
    eps = 1e-3
    joint = build_joint(m, [s], eps)
    rho = joint.steady_state()
    n = np.kron(np.eye(2), np.diag([0.0, 1.0]))
    assert np.trace(n @ rho).real / eps**2 == pytest.approx(joint.population(0), rel=1e-6)


def test_two_level_spectrum_matches_lorentzian():
    w0, g, P, G = 5.0, 0.4, 0.1, 0.3
    s = SensorSpec(4.5, G)
    joint = build_joint(two_level_model(w0, g, P), [s], 1e-4)
    pe, W = P / (P + g), g + P + G
    expected = pe / (2 * np.pi) * W / ((s.omega - w0) ** 2 + (W / 2) ** 2)
    assert oracle_spectrum(joint) == pytest.approx(expected, rel=1e-6)


def test_spectrum_requires_one_sensor(joint43):
    with pytest.raises(OracleError):
        oracle_spectrum(joint43)


def test_gM_requires_two_sensors(joint3):
    with pytest.raises(OracleError):
        oracle_gM_zero(joint3)
    with pytest.raises(OracleError):
        oracle_g2_tau(joint3, [0.0])


def test_identical_sensors_exchange_symmetric(joint33):
    assert joint33.population(0) == pytest.approx(joint33.population(1), rel=1e-10)


def test_exchange_of_sensor_order(dimer, s4, s3, joint43):
    swapped = build_joint(dimer, [s3, s4], EPS)
    assert oracle_gM_zero(swapped) == pytest.approx(oracle_gM_zero(joint43), rel=1e-10)


def test_g2_tau_zero_equals_gM(joint43, oracle_curve43):
    g0 = oracle_curve43.values[np.argmin(np.abs(oracle_curve43.abscissa))]
    assert g0 == pytest.approx(oracle_gM_zero(joint43), abs=1e-10)


def test_g2_tau_identical_sensors_symmetric(joint33):
    taus = np.linspace(-10.0, 10.0, 21)
    v = oracle_g2_tau(joint33, taus).values
    assert np.abs(v - v[::-1]).max() <= 1e-5


def test_g2_tau_metadata(oracle_curve43):
    assert oracle_curve43.metadata["method"] == "oracle"
    assert oracle_curve43.metadata["eps_cm1"] == pytest.approx(1e-3)


# --- normal ordering -------------------------------------------------------------


def test_normal_order_identity_at_zero(joint43):
    r = normal_order_check(joint43, 0.0)
    assert abs(r["delta"]) <= 1e-12
    assert abs(r["scaled_delta"]) <= 1e-12 * abs(r["scaled_collapsed"])


def test_normal_order_inequality_after_delay(joint43, s4):
    r = normal_order_check(joint43, 2 / s4.gamma)
    assert abs(r["delta"]) > 1e-6 * abs(r["trace_collapsed"])


def test_normal_order_eps_sweep(dimer, s4, s3):
    tau = 2 / s4.gamma
    reports = [normal_order_check(build_joint(dimer, [s4, s3], e), tau) for e in (EPS, EPS / 10)]
    assert abs(reports[1]["trace_collapsed"]) < 1e-3 * abs(reports[0]["trace_collapsed"])
    assert abs(reports[1]["trace_numberop"]) < 1e-3 * abs(reports[0]["trace_numberop"])
    for r in reports:
        assert abs(r["trace_collapsed"] / r["trace_numberop"] - 1) > 1e-2


def test_normal_order_rejects_negative_tau(joint43):
    with pytest.raises(ValueError):
        normal_order_check(joint43, -1.0)
