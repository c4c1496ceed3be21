"""Calibration tests: condition solver, optimizer behavior, diagnostics."""

import numpy as np
import pytest

from circring.calibrate import (
    OptimizeAbort,
    OptimizerSettings,
    SYMMETRIC_BIAS,
    diagnostics_at,
    optimize_fidelity,
    random_init,
    solve_conditions,
    transmon_limit_sweep,
)
from circring.ring import BiasPoint, CircuitParams, TruncationSpec
from circring.scattering import S_IDEAL_CW, fidelity, scattering_matrix
from circring.ring import build_ring_model

INV_SQRT3 = 1.0 / np.sqrt(3.0)
TR10 = TruncationSpec(n_max=10, k_levels=4)


# ---------------------------------------------------------------------------
# Semi-analytic condition solver
# ---------------------------------------------------------------------------

def test_solver_matched_line(z50_solution):
    assert z50_solution.phi_x == pytest.approx(1.8048345631127716, abs=1e-6)
    assert z50_solution.omega_d == pytest.approx(0.812616913966562, abs=1e-6)
    assert z50_solution.nx == pytest.approx((1 / 3, 1 / 3, 1 / 3))


def test_solver_high_impedance_line(z200_solution):
    assert z200_solution.phi_x == pytest.approx(2.126878200159079, abs=1e-6)
    assert z200_solution.omega_d == pytest.approx(0.7593836417854694, abs=1e-6)


def test_solver_point_is_optimal(params_z50, z50_solution, z50_model, trunc):
    """Optimizer warm-started at the solved point cannot do much better."""
    settings = OptimizerSettings(seed=0, scan_points=0)
    trace = optimize_fidelity(params_z50, z50_solution, settings, trunc)
    f_solver = fidelity(np.abs(scattering_matrix(z50_model, z50_solution.omega_d)),
                        S_IDEAL_CW)
    assert abs(trace.best_fidelity - f_solver) <= 1e-2
    assert abs(trace.best_bias.phi_x - z50_solution.phi_x) < 0.05
    assert abs(trace.best_bias.omega_d - z50_solution.omega_d) < 0.02


def test_warm_start_converges_fast(params_z50, z50_solution, trunc):
    settings = OptimizerSettings(seed=0, scan_points=0)
    trace = optimize_fidelity(params_z50, z50_solution, settings, trunc)
    assert trace.terminal == "converged"
    assert trace.best_fidelity >= 0.99
    assert len(trace.steps) <= 5


# ---------------------------------------------------------------------------
# Optimizer behavior
# ---------------------------------------------------------------------------

def test_trace_is_best_so_far(params_z50):
    settings = OptimizerSettings(seed=1, scan_points=60, max_steps=10)
    trace = optimize_fidelity(params_z50, SYMMETRIC_BIAS, settings, TR10)
    f = trace.fidelities()
    assert np.all(np.diff(f) >= 0)
    assert trace.best_fidelity == pytest.approx(f[-1])
    assert trace.n_evaluations > 0


def test_same_seed_reproduces_bitwise(params_z50):
    settings = OptimizerSettings(seed=3, scan_points=60, max_steps=8)
    a = optimize_fidelity(params_z50, SYMMETRIC_BIAS, settings, TR10)
    b = optimize_fidelity(params_z50, SYMMETRIC_BIAS, settings, TR10)
    assert a.n_evaluations == b.n_evaluations
    assert a.best_fidelity == b.best_fidelity
    assert a.best_bias == b.best_bias
    assert len(a.steps) == len(b.steps)
    for sa, sb in zip(a.steps, b.steps):
        assert sa.phi_x == sb.phi_x
        assert sa.nx == sb.nx
        assert sa.omega_d == sb.omega_d
        assert sa.fidelity == sb.fidelity


def test_trap_flag_on_hard_asymmetry():
    # 1% junction scatter caps fidelity near 0.6, below the trap threshold
    pars = CircuitParams(ej=(1.0, 1.01, 0.99), ecs_ratio=0.35)
    init = BiasPoint(phi_x=1.2, nx=(0.8, 0.1, 0.55), n0=1, omega_d=0.75)
    settings = OptimizerSettings(seed=2, scan_points=0, max_steps=6)
    trace = optimize_fidelity(pars, init, settings, TR10)
    assert trace.trapped
    assert trace.best_fidelity < 0.7


def test_abort_when_basis_too_small():
    pars = CircuitParams(ecs_ratio=0.0125)
    init = SYMMETRIC_BIAS.replace(phi_x=2.0, omega_d=0.76)
    settings = OptimizerSettings(seed=0, scan_points=0, max_steps=4)
    with pytest.raises(OptimizeAbort):
        optimize_fidelity(pars, init, settings, TruncationSpec(n_max=8))


def test_random_init_respects_ranges():
    settings = OptimizerSettings(seed=0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        bias = random_init(settings, rng)
        assert settings.init_phi_range[0] <= bias.phi_x <= settings.init_phi_range[1]
        assert settings.init_omega_range[0] <= bias.omega_d <= settings.init_omega_range[1]
        for v in bias.nx:
            assert 0.0 <= v <= 1.0
    again = random_init(settings, np.random.default_rng(7))
    first = random_init(settings, np.random.default_rng(7))
    assert again == first


# ---------------------------------------------------------------------------
# Diagnostics at the operating point
# ---------------------------------------------------------------------------

def test_diagnostics_hit_ideal_values(params_z50, z50_solution, trunc):
    d = diagnostics_at(params_z50, z50_solution, trunc)
    for x in d.x_k:
        assert abs(x - INV_SQRT3) < 2e-3
    assert abs(d.theta_k[0] - np.pi / 6) < 2e-3
    assert abs(d.theta_k[1] + np.pi / 6) < 2e-3
    assert abs(d.ratio_drive - 1.0) < 1e-2
    assert abs(d.ratio_coupling - np.sqrt(3.0)) < 0.2
    assert d.coupling_spread < 1e-2


def test_diagnostics_require_drive(params_z50):
    with pytest.raises(ValueError):
        diagnostics_at(params_z50, SYMMETRIC_BIAS.replace(phi_x=1.8), TR10)


# ---------------------------------------------------------------------------
# Transmon-limit sweep (single cheap point; the full scan runs in acceptance)
# ---------------------------------------------------------------------------

def test_transmon_sweep_charge_regime_point(params_z200):
    pts = transmon_limit_sweep(params_z200, [0.35], scan_points=31)
    assert len(pts) == 1
    p = pts[0]
    assert p.status == "ok"
    assert p.nonreciprocity > 0.5
    assert p.coupling_rate == pytest.approx(0.002473, abs=2e-5)


# ---------------------------------------------------------------------------
# Warm start dominates cold starts at matched seeds
# ---------------------------------------------------------------------------

def test_warm_start_beats_cold_budget(params_z50):
    sol = solve_conditions(params_z50, trunc=TR10)
    warm = optimize_fidelity(params_z50, sol,
                             OptimizerSettings(seed=0, scan_points=0), TR10)
    assert warm.best_fidelity >= 0.99

    costs = []
    for seed in range(5):
        settings = OptimizerSettings(seed=seed)
        rng = np.random.default_rng(seed)
        trace = optimize_fidelity(params_z50, random_init(settings, rng),
                                  settings, TR10)
        costs.append(trace.n_evaluations if trace.best_fidelity >= 0.99
                     else np.inf)
    assert warm.n_evaluations < np.median(costs)
