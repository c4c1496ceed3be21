"""Sweep orchestration and CSV output for the command-line interface.

Every subcommand maps a validated RunConfig to one or more CSV files plus a
metadata sidecar. CSV bodies are deterministic for a fixed config and seed:
floats render through one fixed format and rows keep grid order regardless
of how many worker threads evaluated them. Timestamps appear only in the
sidecar.
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from . import __version__
from .calibrate import (OptimizerSettings, asymmetry_tolerance_map,
                        optimize_fidelity, random_init, solve_conditions,
                        transmon_limit_sweep)
from .config import ConfigError, RunConfig, config_digest, serialize_config
from .quasiparticle import (QpEnvironment, SECTOR_PAIRS, build_sector_model,
                            composed_spectra, qp_spectral_density,
                            rate_to_hz, sector_fidelity_map, sector_jump_process,
                            sector_rates)
from .ring import BiasPoint, build_ring_model, waveguide_coupling
from .scattering import scatter


def resolve_threads(config: RunConfig, cli_threads: Optional[int]) -> int:
    """Thread count precedence: CLI flag, CIRCRING_THREADS, config, cores."""
    if cli_threads is not None:
        return max(1, cli_threads)
    env = os.environ.get("CIRCRING_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CIRCRING_THREADS must be an integer, got {env!r}",
                              field="CIRCRING_THREADS")
    if config.threads is not None:
        return max(1, config.threads)
    return os.cpu_count() or 1


def _pmap(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return ""
        return format(float(value), ".12g")
    return str(value)


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_sidecar(csv_path: Path, command: str, config_text: str,
                  seed: Optional[int]) -> Path:
    import scipy
    side = csv_path.with_suffix(csv_path.suffix + ".meta")
    lines = [
        f"# circring {__version__}",
        f"# command: {command}",
        f"# file: {csv_path.name}",
        f"# config-sha256: {config_digest(config_text)}",
        f"# seed: {'' if seed is None else seed}",
        f"# python: {sys.version.split()[0]}",
        f"# numpy: {np.__version__}",
        f"# scipy: {scipy.__version__}",
        f"# created: {datetime.now(timezone.utc).isoformat()}",
    ]
    side.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return side


def _task_float(task: dict, key: str, default: float) -> float:
    value = task.get(key, default)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"`task.{key}` must be a number, got {value!r}",
                          field=f"task.{key}")


def _task_int(task: dict, key: str, default: int) -> int:
    value = task.get(key, default)
    if isinstance(value, bool) or (not isinstance(value, int) and int(value) != value):
        raise ConfigError(f"`task.{key}` must be an integer, got {value!r}",
                          field=f"task.{key}")
    return int(value)


# ---------------------------------------------------------------------------
# Subcommand runners. Each returns the list of CSV paths it wrote.
# ---------------------------------------------------------------------------

def run_spectrum(config: RunConfig, out: Path, threads: int) -> list[Path]:
    task = config.task
    lo = _task_float(task, "phi_min", 0.0)
    hi = _task_float(task, "phi_max", 2.0 * np.pi)
    n = _task_int(task, "phi_points", 201)
    k = 4  # the model always retains at least four excited levels
    phis = np.linspace(lo, hi, n)

    def level_row(phi: float):
        model = build_ring_model(config.circuit, config.bias.replace(phi_x=float(phi)),
                                 config.truncation)
        return [phi] + [model.eigenvalues[i] for i in range(1, k + 1)]

    rows = _pmap(level_row, list(phis), threads)
    path = out / "spectrum.csv"
    write_csv(path, ["phi_x"] + [f"omega_{i}" for i in range(1, k + 1)], rows)
    return [path]


def run_scatter(config: RunConfig, out: Path, threads: int) -> list[Path]:
    task = config.task
    if config.bias.omega_d is None and "omega_points" not in task:
        raise ConfigError("scatter requires `bias.omega_d` or a task omega grid",
                          field="bias.omega_d")
    if "omega_points" in task:
        lo = _task_float(task, "omega_min", 0.5)
        hi = _task_float(task, "omega_max", 1.2)
        n = _task_int(task, "omega_points", 121)
        omegas = list(np.linspace(lo, hi, n))
    else:
        omegas = [config.bias.omega_d]

    model = build_ring_model(config.circuit, config.bias, config.truncation)

    def srow(omega_d: float):
        res = scatter(model, omega_d=float(omega_d))
        mags = np.abs(res.s_matrix)
        return ([omega_d]
                + [mags[i, j] for i in range(3) for j in range(3)]
                + [res.fidelity_cw, res.fidelity_ccw, res.insertion_loss_db,
                   res.reflection_db, res.isolation_db])

    rows = _pmap(srow, omegas, threads)
    header = (["omega_d"]
              + [f"s{i + 1}{j + 1}_abs" for i in range(3) for j in range(3)]
              + ["fidelity_cw", "fidelity_ccw", "insertion_loss_db",
                 "reflection_db", "isolation_db"])
    path = out / "scatter.csv"
    write_csv(path, header, rows)
    return [path]


def _optimizer_settings(config: RunConfig, seed: int) -> OptimizerSettings:
    task = config.task
    kw = {"seed": seed}
    for key in ("max_steps", "scan_points", "stall_window"):
        if key in task:
            kw[key] = _task_int(task, key, 0)
    for key in ("rel_tol", "restart_floor", "trap_threshold",
                "step_scale", "warm_step_scale"):
        if key in task:
            kw[key] = _task_float(task, key, 0.0)
    if "sense" in task:
        sense = task["sense"]
        if sense not in ("cw", "ccw"):
            raise ConfigError("`task.sense` must be `cw` or `ccw`", field="task.sense")
        kw["sense"] = sense
    return OptimizerSettings(**kw)


_TRACE_HEADER = ["step", "phi_x", "nx1", "nx2", "nx3", "omega_d", "fidelity",
                 "ratio_drive", "ratio_coupling", "x_1", "x_2",
                 "theta_1", "theta_2", "coupling_spread"]


def run_optimize(config: RunConfig, out: Path, threads: int) -> list[Path]:
    seed = config.require_seed()
    task = config.task
    n_seeds = _task_int(task, "n_seeds", 5)
    warm = bool(task.get("warm_start", False))

    def one_run(k: int):
        run_seed = seed + k
        settings = _optimizer_settings(config, run_seed)
        if warm:
            settings = replace(settings, scan_points=0)
            init = config.bias
            if init.omega_d is None:
                init = solve_conditions(config.circuit, symmetric=True,
                                        trunc=config.truncation)
        else:
            rng = np.random.default_rng(run_seed)
            init = random_init(settings, rng, n0=config.bias.n0)
        return optimize_fidelity(config.circuit, init, settings, config.truncation)

    traces = _pmap(one_run, list(range(n_seeds)), threads)

    paths = []
    for k, trace in enumerate(traces):
        rows = []
        for s in trace.steps:
            d = s.diagnostics
            rows.append([s.step, s.phi_x, *s.nx, s.omega_d, s.fidelity,
                         d.ratio_drive, d.ratio_coupling, *d.x_k, *d.theta_k,
                         d.coupling_spread])
        path = out / f"optimize_trace_seed{seed + k}.csv"
        write_csv(path, _TRACE_HEADER, rows)
        paths.append(path)

    summary_rows = []
    for k, trace in enumerate(traces):
        bias = trace.best_bias
        model = build_ring_model(config.circuit, bias, config.truncation)
        res = scatter(model, omega_d=bias.omega_d)
        summary_rows.append([
            seed + k, trace.terminal, len(trace.steps), trace.n_evaluations,
            trace.best_fidelity, bias.phi_x, *bias.nx, bias.omega_d,
            int(trace.trapped), int(trace.restarted),
            res.insertion_loss_db, res.reflection_db, res.isolation_db,
        ])
    summary = out / "optimize_summary.csv"
    write_csv(summary,
              ["seed", "terminal", "steps", "n_evaluations", "best_fidelity",
               "phi_x", "nx1", "nx2", "nx3", "omega_d", "trapped", "restarted",
               "insertion_loss_db", "reflection_db", "isolation_db"],
              summary_rows)
    paths.append(summary)
    return paths


def run_tolerance_map(config: RunConfig, out: Path, threads: int) -> list[Path]:
    seed = config.require_seed()
    task = config.task
    lo = _task_float(task, "de_min", -5.0)
    hi = _task_float(task, "de_max", 5.0)
    n = _task_int(task, "grid_points", 21)
    gamma_ref_omega_d = _task_float(task, "gamma_ref_omega_d", 0.70)
    settings = _optimizer_settings(config, seed)
    points = asymmetry_tolerance_map(
        config.circuit, (lo, hi), (lo, hi), (n, n), settings=settings,
        trunc=config.truncation, gamma_ref_omega_d=gamma_ref_omega_d)
    rows = [[p.de2_over_gamma, p.de3_over_gamma, p.f_opt, p.r_db, p.il_db,
             p.phi_x, p.omega_d, p.status] for p in points]
    path = out / "tolerance_map.csv"
    write_csv(path, ["de2_over_gamma", "de3_over_gamma", "f_opt", "r_db",
                     "il_db", "phi_x", "omega_d", "status"], rows)
    return [path]


def run_transmon_sweep(config: RunConfig, out: Path, threads: int) -> list[Path]:
    task = config.task
    if "ratios" in task:
        ratios = [float(r) for r in task["ratios"]]
        if not ratios:
            raise ConfigError("`task.ratios` must be non-empty", field="task.ratios")
    else:
        lo = _task_float(task, "ratio_min", 0.02)
        hi = _task_float(task, "ratio_max", 0.35)
        n = _task_int(task, "ratio_points", 12)
        if task.get("spacing", "log") == "log":
            ratios = list(np.geomspace(lo, hi, n))
        else:
            ratios = list(np.linspace(lo, hi, n))

    points = transmon_limit_sweep(config.circuit, ratios, trunc=config.truncation)
    rows = [[p.ratio, p.nonreciprocity, p.coupling_rate, p.phi_x, p.omega_d,
             p.status] for p in points]
    path = out / "transmon_sweep.csv"
    write_csv(path, ["ratio", "nonreciprocity", "coupling_rate", "phi_x",
                     "omega_d", "status"], rows)
    return [path]


def _qp_environment(config: RunConfig) -> QpEnvironment:
    x_qp = config.task.get("x_qp")
    if x_qp is not None:
        x_qp = _task_float(config.task, "x_qp", 0.0)
    return QpEnvironment.from_params(config.circuit, x_qp=x_qp)


def run_qp_map(config: RunConfig, out: Path, threads: int) -> list[Path]:
    task = config.task
    total_parity = task.get("total_parity", "even")
    phis = np.linspace(_task_float(task, "phi_min", 0.0),
                       _task_float(task, "phi_max", 2.0 * np.pi),
                       _task_int(task, "phi_points", 41))
    omegas = np.linspace(_task_float(task, "omega_min", 0.5),
                         _task_float(task, "omega_max", 1.2),
                         _task_int(task, "omega_points", 41))

    def one_phi(phi: float):
        return sector_fidelity_map(config.circuit, config.bias, [phi], omegas,
                                   config.truncation, total_parity)

    chunks = _pmap(one_phi, list(phis), threads)
    rows = [[p.phi_x, p.omega_d, p.sector, p.fidelity, p.s21_abs, p.s31_abs,
             p.status] for chunk in chunks for p in chunk]
    path = out / "qp_map.csv"
    write_csv(path, ["phi_x", "omega_d", "sector", "fidelity", "s21_abs",
                     "s31_abs", "status"], rows)
    return [path]


def run_qp_rates(config: RunConfig, out: Path, threads: int) -> list[Path]:
    task = config.task
    total_parity = task.get("total_parity", "even")
    env = _qp_environment(config)
    model = build_sector_model(config.circuit, config.bias, config.truncation,
                               total_parity)
    cutoff = _task_int(task, "state_cutoff", config.truncation.k_levels)
    rates = sector_rates(model, env, state_cutoff=cutoff)
    scale = rate_to_hz(1.0, config.circuit.ej_ref_ghz) / 1e3

    rows = [[t.from_pair, t.to_pair, t.junction, t.k_from, t.k_to, t.omega,
             t.element_sq, t.rate, t.rate * scale] for t in rates.transitions]
    trans_path = out / "qp_rates_transitions.csv"
    write_csv(trans_path, ["from_sector", "to_sector", "junction", "k_from",
                           "k_to", "omega", "element_sq", "rate_ej", "rate_khz"],
              rows)

    ground = rates.ground_rate_khz
    ground_rows = [[SECTOR_PAIRS[i], SECTOR_PAIRS[j], ground[i, j]]
                   for i in range(4) for j in range(4) if i != j]
    ground_path = out / "qp_rates_ground.csv"
    write_csv(ground_path, ["from_sector", "to_sector", "rate_khz"], ground_rows)
    return [trans_path, ground_path]


def run_qp_spectra(config: RunConfig, out: Path, threads: int) -> list[Path]:
    task = config.task
    total_parity = task.get("total_parity", "even")
    phis = np.linspace(_task_float(task, "phi_min", 0.0),
                       _task_float(task, "phi_max", 2.0 * np.pi),
                       _task_int(task, "phi_points", 81))
    k = _task_int(task, "k_levels", 4)

    def one_phi(phi: float):
        return composed_spectra(config.circuit, config.bias, [phi],
                                config.truncation, total_parity, k_levels=k)

    chunks = _pmap(one_phi, list(phis), threads)
    rows = [list(rec) for chunk in chunks for rec in chunk]
    path = out / "qp_spectra.csv"
    write_csv(path, ["phi_x", "sector", "k", "omega_k"], rows)
    return [path]


def run_qp_jump(config: RunConfig, out: Path, threads: int) -> list[Path]:
    seed = config.require_seed()
    task = config.task
    total_parity = task.get("total_parity", "even")
    duration = _task_float(task, "duration_s", 1.0)
    start = task.get("start_sector", "EE")
    if start not in SECTOR_PAIRS:
        raise ConfigError("`task.start_sector` must be one of EE/EO/OE/OO",
                          field="task.start_sector")
    env = _qp_environment(config)
    model = build_sector_model(config.circuit, config.bias, config.truncation,
                               total_parity)
    rates = sector_rates(model, env,
                         state_cutoff=_task_int(task, "state_cutoff",
                                                config.truncation.k_levels))
    rate_hz = rates.ground_rate_hz

    waveguide_rate = None
    fidelities = None
    if config.bias.omega_d is not None:
        waveguide_rate = rate_to_hz(
            waveguide_coupling(config.circuit, config.bias.omega_d),
            config.circuit.ej_ref_ghz)
        from .scattering import fidelity as _fid, S_IDEAL_CW, scattering_matrix
        fidelities = []
        for idx in range(4):
            s = scattering_matrix(model.models[idx], config.bias.omega_d)
            fidelities.append(_fid(np.abs(s) ** 2, S_IDEAL_CW))

    traj = sector_jump_process(rate_hz, duration, seed,
                               start=SECTOR_PAIRS.index(start),
                               sector_fidelity=fidelities,
                               waveguide_rate=waveguide_rate)

    bounds = np.concatenate([[0.0], traj.jump_times, [duration]])
    rows = []
    for k, sector_idx in enumerate(traj.sectors):
        fid = traj.segment_fidelity[k] if traj.segment_fidelity is not None else None
        rows.append([k, bounds[k], bounds[k + 1], SECTOR_PAIRS[sector_idx], fid])
    traj_path = out / "qp_jump_trajectory.csv"
    write_csv(traj_path, ["segment", "t_start", "t_end", "sector", "fidelity"], rows)

    occ_path = out / "qp_jump_occupancy.csv"
    write_csv(occ_path, ["sector", "fraction"],
              [[SECTOR_PAIRS[i], traj.occupancy[i]] for i in range(4)])
    return [traj_path, occ_path]


RUNNERS = {
    "spectrum": run_spectrum,
    "scatter": run_scatter,
    "optimize": run_optimize,
    "tolerance-map": run_tolerance_map,
    "transmon-sweep": run_transmon_sweep,
    "qp-map": run_qp_map,
    "qp-rates": run_qp_rates,
    "qp-spectra": run_qp_spectra,
    "qp-jump": run_qp_jump,
}

STOCHASTIC = {"optimize", "tolerance-map", "qp-jump"}
