"""circring: passive superconducting ring circulator simulation and calibration.

The library models a three-junction superconducting ring coupled capacitively
to three waveguides, computes its scattering response by adiabatic
elimination (with an independent Lindblad cross-check), calibrates optimal
circulation working points, and analyzes quasiparticle charge-parity sectors
and tunneling rates. The `circring` command line drives reproducible sweeps.
"""

__version__ = "0.1.0"

from .ring import (BiasPoint, CircuitParams, RingModel, TruncationError,
                   TruncationSpec, build_ring_model, coupling_matrix_elements,
                   decay_rates, rescaled_charge_biases, waveguide_coupling,
                   KLITZING_OHM)
from .scattering import (S_IDEAL_CCW, S_IDEAL_CW, ScatteringResult,
                         column_powers, fidelity, lindblad_scattering_matrix,
                         scatter, scattering_matrix, transmission_metrics)
from .calibrate import (ConditionDiagnostics, ConditionSolveError, MapPoint,
                        OptimizationTrace, OptimizeAbort, OptimizerSettings,
                        TraceStep, TransmonSweepPoint, asymmetry_tolerance_map,
                        condition_diagnostics, diagnostics_at, optimize_fidelity,
                        random_init, solve_conditions, transmon_limit_sweep,
                        SYMMETRIC_BIAS)
from .quasiparticle import (JumpTrajectory, QpEnvironment, QuadratureError,
                            SECTOR_PAIRS, X_QP_NONEQ, SectorLabel, SectorMapPoint,
                            SectorModel, SectorRates, SectorTransition,
                            build_sector_model, composed_spectra,
                            embed_sector_state, qp_density_closed_form,
                            qp_spectral_density, rate_to_hz,
                            sector_fidelity_map, sector_jump_process,
                            sector_rates, sector_scattering,
                            tunneling_operator)
from .config import ConfigError, RunConfig, parse_config, parse_config_text, serialize_config

__all__ = [
    "__version__",
    "BiasPoint", "CircuitParams", "RingModel", "TruncationError",
    "TruncationSpec", "build_ring_model", "coupling_matrix_elements",
    "decay_rates", "rescaled_charge_biases", "waveguide_coupling", "KLITZING_OHM",
    "S_IDEAL_CCW", "S_IDEAL_CW", "ScatteringResult", "column_powers",
    "fidelity", "lindblad_scattering_matrix", "scatter", "scattering_matrix",
    "transmission_metrics",
    "ConditionDiagnostics", "ConditionSolveError", "MapPoint",
    "OptimizationTrace", "OptimizeAbort", "OptimizerSettings", "TraceStep",
    "TransmonSweepPoint", "asymmetry_tolerance_map", "condition_diagnostics",
    "diagnostics_at", "optimize_fidelity", "random_init", "solve_conditions",
    "transmon_limit_sweep", "SYMMETRIC_BIAS",
    "JumpTrajectory", "QpEnvironment", "QuadratureError", "SECTOR_PAIRS",
    "X_QP_NONEQ",
    "SectorLabel", "SectorMapPoint", "SectorModel", "SectorRates",
    "SectorTransition", "build_sector_model", "composed_spectra",
    "embed_sector_state", "qp_density_closed_form", "qp_spectral_density",
    "rate_to_hz", "sector_fidelity_map", "sector_jump_process",
    "sector_rates", "sector_scattering", "tunneling_operator",
    "ConfigError", "RunConfig", "parse_config", "parse_config_text",
    "serialize_config",
]
