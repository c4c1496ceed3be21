"""Shared fixtures.

Solved operating points and sector models are expensive (seconds each), so
they are session-scoped and shared between the unit tests and the acceptance
battery. Everything downstream of them is deterministic.
"""

import numpy as np
import pytest

from circring.calibrate import solve_conditions
from circring.quasiparticle import QpEnvironment, build_sector_model, sector_rates
from circring.ring import BiasPoint, CircuitParams, TruncationSpec, build_ring_model

THIRD = 1.0 / 3.0
SYM_NX = (THIRD, THIRD, THIRD)

# Z = 200 ohm operating point, full precision (matches the solver fixture
# output; kept literal so quasiparticle tests do not depend on calibrate).
QP_BIAS = BiasPoint(phi_x=2.126878200159079, nx=SYM_NX, n0=1,
                    omega_d=0.7593836417854694)


@pytest.fixture(scope="session")
def params_z50():
    """50 ohm waveguide, charging energy pinned to 0.35 E_J."""
    return CircuitParams(zwg=50.0, ecs_ratio=0.35)


@pytest.fixture(scope="session")
def params_z200():
    return CircuitParams(zwg=200.0, ecs_ratio=0.35)


@pytest.fixture(scope="session")
def params_qp():
    # 10 GHz junctions, 2.376 K aluminum gap, 200 mK quasiparticle bath
    return CircuitParams(zwg=200.0, ej_ref_ghz=10.0, ecs_ratio=0.35,
                         gap=2.376, gap_unit="kelvin", t_qp=0.200)


@pytest.fixture(scope="session")
def trunc():
    return TruncationSpec()


@pytest.fixture(scope="session")
def trunc10():
    return TruncationSpec(n_max=10, k_levels=4)


@pytest.fixture(scope="session")
def z50_solution(params_z50, trunc):
    return solve_conditions(params_z50, trunc=trunc)


@pytest.fixture(scope="session")
def z200_solution(params_z200, trunc):
    return solve_conditions(params_z200, trunc=trunc)


@pytest.fixture(scope="session")
def z50_model(params_z50, z50_solution, trunc):
    return build_ring_model(params_z50, z50_solution, trunc)


@pytest.fixture(scope="session")
def qp_bias():
    return QP_BIAS


@pytest.fixture(scope="session")
def qp_model_even(params_qp, trunc):
    return build_sector_model(params_qp, QP_BIAS, trunc, total_parity="even")


@pytest.fixture(scope="session")
def qp_env(params_qp):
    return QpEnvironment.from_params(params_qp)


@pytest.fixture(scope="session")
def qp_rate_table(qp_model_even, qp_env):
    return sector_rates(qp_model_even, qp_env)
