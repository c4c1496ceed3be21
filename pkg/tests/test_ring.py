"""Ring model unit tests: spectra, couplings, validation, symmetries."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from circring.ring import (
    BiasPoint,
    CircuitParams,
    TruncationError,
    TruncationSpec,
    build_ring_model,
    coupling_matrix_elements,
    decay_rates,
    waveguide_coupling,
)
from circring.scattering import scattering_matrix

THIRD = 1.0 / 3.0
SYM = (THIRD, THIRD, THIRD)
TR10 = TruncationSpec(n_max=10, k_levels=4)


# ---------------------------------------------------------------------------
# Charging-only limit and frozen spectra
# ---------------------------------------------------------------------------

def test_charging_only_spectrum_is_diagonal():
    """With negligible tunneling the Hamiltonian is the bare charging grid."""
    pars = CircuitParams(ej=(1e-30, 1e-30, 1e-30), ecs_ratio=0.35)
    model = build_ring_model(pars, BiasPoint(nx=(0.0, 0.0, 0.0), n0=0),
                             TruncationSpec(n_max=4, k_levels=4))
    h = model.hamiltonian
    off = h - np.diag(np.diag(h))
    assert np.max(np.abs(off)) < 1e-25
    assert model.ground_energy == pytest.approx(0.0, abs=1e-12)
    # lowest single-charge excitations all cost one charging quantum
    assert model.eigenvalues[1:4] == pytest.approx([0.35, 0.35, 0.35], abs=1e-9)


def test_spectrum_frozen_table_params():
    pars = CircuitParams()
    model = build_ring_model(pars, BiasPoint(phi_x=2.11, nx=SYM, n0=1),
                             TruncationSpec())
    want = [0.7635581980107029, 0.7691199117788965,
            1.2844281248959084, 1.3276699054867507]
    assert model.transition_energies == pytest.approx(want, abs=1e-9)
    assert model.ground_energy == pytest.approx(-1.3792115018931823, abs=1e-9)
    assert model.boundary_population < 1e-20
    assert model.eigenvalues[0] == 0.0


def test_spectrum_frozen_pinned_ratio(params_z50):
    model = build_ring_model(params_z50, BiasPoint(phi_x=2.11, nx=SYM, n0=1),
                             TruncationSpec())
    want = [0.7600386615031955, 0.7651964726102991,
            1.2835240257953853, 1.322176990527228]
    assert model.transition_energies == pytest.approx(want, abs=1e-9)


def test_two_near_degenerate_pairs(params_z50):
    """The low spectrum is two close pairs separated by a wide gap."""
    model = build_ring_model(params_z50, BiasPoint(phi_x=2.11, nx=SYM, n0=1),
                             TruncationSpec())
    w = model.transition_energies
    assert w[1] - w[0] < 0.05
    assert w[3] - w[2] < 0.08
    assert w[2] - w[1] > 0.3


def test_truncation_convergence(params_z50):
    bias = BiasPoint(phi_x=2.11, nx=SYM, n0=1)
    lo = build_ring_model(params_z50, bias, TruncationSpec(n_max=10)).eigenvalues[:5]
    hi = build_ring_model(params_z50, bias, TruncationSpec(n_max=14)).eigenvalues[:5]
    assert np.max(np.abs(lo - hi)) < 1e-10


def test_boundary_population_shrinks_with_basis(params_z50):
    bias = BiasPoint(phi_x=2.11, nx=SYM, n0=1)
    pops = [build_ring_model(params_z50, bias,
                             TruncationSpec(n_max=n)).boundary_population
            for n in (10, 12, 14)]
    assert pops[0] > pops[1] > pops[2]


def test_truncation_guard_raises():
    pars = CircuitParams(ecs_ratio=0.0125)
    with pytest.raises(TruncationError, match="boundary population"):
        build_ring_model(pars, BiasPoint(nx=SYM, n0=1), TruncationSpec(n_max=8))


# ---------------------------------------------------------------------------
# Derived circuit quantities
# ---------------------------------------------------------------------------

def test_total_charging_energy_from_capacitances():
    pars = CircuitParams()
    assert abs(pars.e_csigma_ghz / 4.58 - 1.0) < 0.01
    assert pars.ecs == pytest.approx(pars.e_csigma_ghz / pars.ej_ref_ghz, rel=1e-12)


def test_waveguide_coupling_values(params_z50, params_z200):
    g50 = waveguide_coupling(params_z50, 0.8)
    assert g50 == pytest.approx(0.0024341787510835248, rel=1e-12)
    assert abs(g50 - 0.0025) < 1e-4
    g200 = waveguide_coupling(params_z200, 0.77)
    assert g200 == pytest.approx(0.00937158819167157, rel=1e-12)
    assert abs(g200 - 0.01) < 7e-4


def test_waveguide_coupling_vanishes_without_coupler():
    # decoupled limit: shrinking the coupling capacitor kills the rate
    assert waveguide_coupling(CircuitParams(cc=1e-9), 0.8) < 1e-18
    with pytest.raises(ValueError):
        CircuitParams(cc=0.0)


def test_parameter_validation():
    with pytest.raises(ValueError):
        CircuitParams(ej=(1.0, -0.5, 1.0))
    with pytest.raises(ValueError):
        CircuitParams(zwg=0.0)
    with pytest.raises(ValueError):
        BiasPoint(nx=SYM, n0=0.5)
    with pytest.raises(ValueError):
        TruncationSpec(k_levels=1)
    with pytest.raises(ValueError):
        TruncationSpec(basis_kind="bogus")


# ---------------------------------------------------------------------------
# Coupling elements and decay rates
# ---------------------------------------------------------------------------

def test_symmetric_coupling_magnitudes_match(params_z50):
    for phi in (0.9, 1.7, 2.11, 2.9):
        m = coupling_matrix_elements(build_ring_model(
            params_z50, BiasPoint(phi_x=phi, nx=SYM, n0=1), TR10))
        spread = np.ptp(np.abs(m[:, :2]), axis=0)
        assert np.max(spread) < 1e-10


def test_coupling_magnitudes_frozen(params_z50):
    m = coupling_matrix_elements(build_ring_model(
        params_z50, BiasPoint(phi_x=2.11, nx=SYM, n0=1), TruncationSpec()))
    mags = np.abs(m)
    assert mags[:, 0] == pytest.approx([0.587690] * 3, abs=1e-5)
    assert mags[:, 1] == pytest.approx([0.592977] * 3, abs=1e-5)
    assert mags[:, 2] == pytest.approx([0.148507] * 3, abs=1e-5)
    # fourth level decouples from the drive at this bias
    assert np.max(mags[:, 3]) < 1e-10


def test_asymmetric_couplings_coincide_only_near_half_flux():
    pars = CircuitParams(ej=(1.0, 1.01, 0.99), ecs_ratio=0.35)

    def spread(phi):
        m = coupling_matrix_elements(build_ring_model(
            pars, BiasPoint(phi_x=phi, nx=SYM, n0=1), TR10))
        return float(np.max(np.ptp(np.abs(m[:, :2]), axis=0)))

    at_pi = spread(np.pi)
    assert at_pi < 0.15
    assert at_pi < 0.35 * spread(1.5)
    assert at_pi < 0.35 * spread(2.0)


def test_decay_rates_consistent_with_cross_spectrum(params_z50):
    model = build_ring_model(params_z50, BiasPoint(phi_x=2.11, nx=SYM, n0=1),
                             TruncationSpec())
    gamma, q = decay_rates(model)
    assert np.array_equal(np.diag(q).real, gamma)
    assert np.max(np.abs(np.diag(q).imag)) == 0.0
    want = [1.0361391425457080, 1.0548645344506600, 0.0661630940637815]
    assert gamma[:3] == pytest.approx(want, abs=1e-9)
    # the near-degenerate pair decays into orthogonal bath modes
    assert abs(q[0, 1]) < 1e-10 * gamma[0]


# ---------------------------------------------------------------------------
# Symmetries
# ---------------------------------------------------------------------------

def test_integer_offset_translation(params_z50):
    """Shifting any island offset and the total by the same integer is a
    relabeling of the charge lattice: spectrum and |S| are unchanged."""
    base = BiasPoint(phi_x=1.7, nx=(0.21, 0.43, 0.11), n0=0)
    ref = build_ring_model(params_z50, base, TR10)
    e0 = ref.eigenvalues[:8]
    s0 = np.abs(scattering_matrix(ref, omega_d=0.76))
    for j in range(3):
        for k in (1, -1, 2):
            nx = list(base.nx)
            nx[j] += k
            shifted = build_ring_model(
                params_z50,
                BiasPoint(phi_x=1.7, nx=tuple(nx), n0=base.n0 + k), TR10)
            assert np.max(np.abs(shifted.eigenvalues[:8] - e0)) < 1e-10
            s1 = np.abs(scattering_matrix(shifted, omega_d=0.76))
            assert np.max(np.abs(s1 - s0)) < 1e-8


def test_flux_periodicity(params_z50):
    for phi in (0.7, 2.11):
        a = build_ring_model(params_z50, BiasPoint(phi_x=phi, nx=SYM, n0=1),
                             TR10).eigenvalues[:8]
        b = build_ring_model(params_z50,
                             BiasPoint(phi_x=phi + 2.0 * np.pi, nx=SYM, n0=1),
                             TR10).eigenvalues[:8]
        assert np.max(np.abs(a - b)) < 1e-10


def test_half_flux_mirror_symmetry(params_z50):
    for d in (0.3, 0.9):
        a = build_ring_model(params_z50,
                             BiasPoint(phi_x=np.pi - d, nx=SYM, n0=1),
                             TR10).eigenvalues[:8]
        b = build_ring_model(params_z50,
                             BiasPoint(phi_x=np.pi + d, nx=SYM, n0=1),
                             TR10).eigenvalues[:8]
        assert np.max(np.abs(a - b)) < 1e-9


def test_gauge_fix_is_deterministic(params_z50):
    bias = BiasPoint(phi_x=2.11, nx=SYM, n0=1)
    a = build_ring_model(params_z50, bias, TR10)
    b = build_ring_model(params_z50, bias, TR10)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)
    # gauge: dominant component of every kept eigenvector is real positive
    idx = np.argmax(np.abs(a.eigenvectors), axis=0)
    lead = a.eigenvectors[idx, np.arange(a.eigenvectors.shape[1])]
    assert np.all(lead.real > 0)
    assert np.max(np.abs(lead.imag)) < 1e-12


# ---------------------------------------------------------------------------
# Structural properties over random inputs
# ---------------------------------------------------------------------------

bias_draw = st.tuples(
    st.floats(0.0, 2.0 * np.pi),
    st.tuples(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0)),
    st.integers(0, 1),
)
ej_draw = st.tuples(st.floats(0.85, 1.15), st.floats(0.85, 1.15),
                    st.floats(0.85, 1.15))


def _small_model(phi, nx, n0, ej):
    # n_max=9 keeps the boundary check satisfied across the whole draw range
    pars = CircuitParams(ej=ej, ecs_ratio=0.4)
    try:
        return build_ring_model(pars, BiasPoint(phi_x=phi, nx=nx, n0=n0),
                                TruncationSpec(n_max=9, k_levels=4))
    except TruncationError:
        assume(False)


@settings(max_examples=30, deadline=None)
@given(bias_draw, ej_draw)
def test_hamiltonian_hermitian_and_grounded(bias, ej):
    model = _small_model(*bias, ej)
    h = model.hamiltonian
    assert np.array_equal(h, h.conj().T)
    assert model.eigenvalues[0] == 0.0
    assert np.all(np.diff(model.eigenvalues) > -1e-12)


@settings(max_examples=30, deadline=None)
@given(bias_draw, ej_draw)
def test_charge_operators_sum_to_scalar(bias, ej):
    model = _small_model(*bias, ej)
    total = np.sum(model.q_diagonals, axis=0)
    assert np.ptp(total) < 1e-12
    assert total[0] == pytest.approx(sum(model.rescaled_bias), abs=1e-12)
