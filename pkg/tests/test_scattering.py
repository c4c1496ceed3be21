"""Scattering tests: fidelity metric, matrix elements, dual-route agreement."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circring.ring import BiasPoint, TruncationSpec, build_ring_model, waveguide_coupling
from circring.scattering import (
    S_IDEAL_CCW,
    S_IDEAL_CW,
    column_powers,
    fidelity,
    lindblad_scattering_matrix,
    scatter,
    scattering_matrix,
    transmission_metrics,
)

THIRD = 1.0 / 3.0
SYM = (THIRD, THIRD, THIRD)
IDENTITY_FLOOR = 1.0 - np.sqrt(6.0) / 3.0   # fidelity of "no device" vs ideal


# ---------------------------------------------------------------------------
# Fidelity metric
# ---------------------------------------------------------------------------

def test_fidelity_of_exact_match_is_one():
    assert fidelity(S_IDEAL_CW, S_IDEAL_CW) == pytest.approx(1.0, abs=1e-15)


def test_fidelity_of_identity_against_ideal():
    assert fidelity(np.eye(3), S_IDEAL_CW) == pytest.approx(IDENTITY_FLOOR, abs=1e-12)


def test_fidelity_of_reversed_circulation():
    # the time-reversed circulator is as far from ideal as no circulator
    assert fidelity(S_IDEAL_CCW, S_IDEAL_CW) == pytest.approx(IDENTITY_FLOOR,
                                                              abs=1e-12)


def test_fidelity_rejects_zero_norm():
    with pytest.raises(ValueError):
        fidelity(np.zeros((3, 3)), S_IDEAL_CW)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_fidelity_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a = np.abs(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    b = np.abs(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    fab = fidelity(a, b)
    assert fab == pytest.approx(fidelity(b, a), abs=1e-12)
    assert fab <= 1.0 + 1e-12


def test_ideal_targets_are_transposes():
    assert np.array_equal(S_IDEAL_CCW, S_IDEAL_CW.T)
    assert np.array_equal(column_powers(S_IDEAL_CW), np.ones(3))


# ---------------------------------------------------------------------------
# Matrix at the calibrated operating point
# ---------------------------------------------------------------------------

def test_optimized_point_full_result(z50_model, z50_solution):
    res = scatter(z50_model, z50_solution.omega_d)
    assert res.fidelity_cw == pytest.approx(0.9994996187513553, abs=1e-9)
    assert res.fidelity_ccw == pytest.approx(0.18375, abs=1e-4)
    assert res.insertion_loss_db == pytest.approx(-0.00043243411125729893, abs=1e-9)
    assert res.reflection_db == pytest.approx(-64.93445283756824, abs=1e-6)
    assert res.isolation_db == pytest.approx(-63.690082884203676, abs=1e-6)
    p = np.abs(res.s_matrix) ** 2
    for i, j in ((0, 1), (1, 2), (2, 0)):
        assert p[i, j] > 0.9995
    mask = np.ones((3, 3), dtype=bool)
    mask[[0, 1, 2], [1, 2, 0]] = False
    assert np.max(p[mask]) < 1e-5
    assert res.column_powers == pytest.approx([0.9999011819147055] * 3, abs=1e-9)


def test_db_metrics_recompute(z50_model, z50_solution):
    s = scattering_matrix(z50_model, z50_solution.omega_d)
    il, refl, iso = transmission_metrics(s)
    p = np.abs(s) ** 2
    assert il == pytest.approx(10 * np.log10((p[0, 1] + p[1, 2] + p[2, 0]) / 3))
    assert refl == pytest.approx(10 * np.log10(np.trace(p) / 3))
    assert iso == pytest.approx(10 * np.log10((p[1, 0] + p[2, 1] + p[0, 2]) / 3))


def test_far_detuned_limits_to_identity(z50_model):
    s = scattering_matrix(z50_model, omega_d=0.05)
    assert np.max(np.abs(s - np.eye(3))) < 2e-4
    f = fidelity(np.abs(s), S_IDEAL_CW)
    assert f == pytest.approx(IDENTITY_FLOOR, abs=1e-3)


def test_identity_approach_is_monotone(z50_model):
    devs = [np.max(np.abs(scattering_matrix(z50_model, omega_d=w) - np.eye(3)))
            for w in (0.5, 0.4, 0.3, 0.2, 0.1, 0.05)]
    assert all(a > b for a, b in zip(devs, devs[1:]))


def test_flux_reversal_swaps_transmission(params_z50):
    tr = TruncationSpec(n_max=10, k_levels=4)
    for phi in (1.3, 2.11):
        fwd = build_ring_model(params_z50, BiasPoint(phi_x=phi, nx=SYM, n0=1), tr)
        rev = build_ring_model(
            params_z50, BiasPoint(phi_x=2.0 * np.pi - phi, nx=SYM, n0=1), tr)
        sf = np.abs(scattering_matrix(fwd, omega_d=0.76))
        sr = np.abs(scattering_matrix(rev, omega_d=0.76))
        assert np.max(np.abs(sr - sf.T)) < 1e-6


def test_missing_drive_frequency_rejected(params_z50, z50_solution):
    bare = build_ring_model(params_z50,
                            BiasPoint(phi_x=z50_solution.phi_x, nx=SYM, n0=1),
                            TruncationSpec(n_max=10, k_levels=4))
    with pytest.raises(ValueError):
        scattering_matrix(bare)


# ---------------------------------------------------------------------------
# Dual-route check against the driven-dissipative solver
# ---------------------------------------------------------------------------

def test_lindblad_agrees_at_operating_point(z50_model, z50_solution):
    s_fast = scattering_matrix(z50_model, z50_solution.omega_d)
    s_full = lindblad_scattering_matrix(z50_model, z50_solution.omega_d)
    assert np.max(np.abs(s_fast - s_full)) < 5e-4
    assert np.max(np.abs(column_powers(s_full) - 1.0)) < 1e-3


def test_lindblad_response_is_linear(z50_model, z50_solution):
    rate = waveguide_coupling(z50_model.params, z50_solution.omega_d)
    weak = lindblad_scattering_matrix(z50_model, z50_solution.omega_d,
                                      drive_amplitude=1e-3 * np.sqrt(rate))
    strong = lindblad_scattering_matrix(z50_model, z50_solution.omega_d,
                                        drive_amplitude=1e-2 * np.sqrt(rate))
    assert np.max(np.abs(weak - strong)) < 1e-4


def test_lindblad_rejects_zero_drive(z50_model, z50_solution):
    with pytest.raises(ValueError):
        lindblad_scattering_matrix(z50_model, z50_solution.omega_d,
                                   drive_amplitude=0.0)
