"""Run configuration: YAML parsing, validation, normalization, serialization.

All internal math runs in units of the reference Josephson energy. Configs
may declare `energy_unit: ghz`, in which case the junction energies and the
drive frequency are read as absolute gigahertz and normalized on load by the
reference scale `circuit.ej_ref_ghz`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .ring import BiasPoint, CircuitParams, TruncationSpec


class ConfigError(ValueError):
    """Bad configuration; carries the offending field name when known."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    circuit: CircuitParams
    bias: BiasPoint
    truncation: TruncationSpec
    seed: Optional[int]
    threads: Optional[int]
    task: dict

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("this task is stochastic and requires `seed`", field="seed")
        return self.seed


_CIRCUIT_KEYS = {"ej", "cj", "cx", "cc", "zwg", "gap", "gap_unit",
                 "t_base", "t_qp", "ej_ref_ghz", "ecs_ratio"}
_BIAS_KEYS = {"phi_x", "nx", "n0", "omega_d"}
_TRUNC_KEYS = {"n_max", "k_levels", "basis_kind"}
_TOP_KEYS = {"energy_unit", "circuit", "bias", "truncation", "seed", "threads", "task"}


def _check_keys(section: dict, allowed: set, where: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key `{key}` in `{where}`", field=f"{where}.{key}")


def _coerce_float(value: Any, field: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"`{field}` must be a number, got {value!r}", field=field)


def _coerce_int(value: Any, field: str) -> int:
    if isinstance(value, bool) or (not isinstance(value, int) and int(value) != value):
        raise ConfigError(f"`{field}` must be an integer, got {value!r}", field=field)
    return int(value)


def parse_config_text(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"config parse error{where}: {exc}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, _TOP_KEYS, "config")

    energy_unit = raw.get("energy_unit", "ej")
    if energy_unit not in ("ej", "ghz"):
        raise ConfigError(f"`energy_unit` must be `ej` or `ghz`, got {energy_unit!r}",
                          field="energy_unit")

    circuit_raw = dict(raw.get("circuit", {}))
    _check_keys(circuit_raw, _CIRCUIT_KEYS, "circuit")
    if "ej" in circuit_raw:
        ej = circuit_raw["ej"]
        if not isinstance(ej, (list, tuple)) or len(ej) != 3:
            raise ConfigError("`circuit.ej` must be a list of three energies",
                              field="circuit.ej")
        circuit_raw["ej"] = tuple(_coerce_float(v, "circuit.ej") for v in ej)
    for key in ("cj", "cx", "cc", "zwg", "gap", "t_base", "t_qp", "ej_ref_ghz"):
        if key in circuit_raw:
            circuit_raw[key] = _coerce_float(circuit_raw[key], f"circuit.{key}")
    if "ecs_ratio" in circuit_raw and circuit_raw["ecs_ratio"] is not None:
        circuit_raw["ecs_ratio"] = _coerce_float(circuit_raw["ecs_ratio"],
                                                 "circuit.ecs_ratio")
    try:
        circuit = CircuitParams(**circuit_raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid circuit parameters: {exc}", field="circuit")

    if energy_unit == "ghz":
        circuit = circuit.with_ej(tuple(e / circuit.ej_ref_ghz for e in circuit.ej))

    bias_raw = dict(raw.get("bias", {}))
    _check_keys(bias_raw, _BIAS_KEYS, "bias")
    if "nx" in bias_raw:
        nx = bias_raw["nx"]
        if not isinstance(nx, (list, tuple)) or len(nx) != 3:
            raise ConfigError("`bias.nx` must be a list of three charge offsets",
                              field="bias.nx")
        bias_raw["nx"] = tuple(_coerce_float(v, "bias.nx") for v in nx)
    if "phi_x" in bias_raw:
        bias_raw["phi_x"] = _coerce_float(bias_raw["phi_x"], "bias.phi_x")
    if "n0" in bias_raw:
        bias_raw["n0"] = _coerce_int(bias_raw["n0"], "bias.n0")
    if "omega_d" in bias_raw and bias_raw["omega_d"] is not None:
        omega_d = _coerce_float(bias_raw["omega_d"], "bias.omega_d")
        if energy_unit == "ghz":
            omega_d /= circuit.ej_ref_ghz
        bias_raw["omega_d"] = omega_d
    try:
        bias = BiasPoint(**bias_raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid bias point: {exc}", field="bias")

    trunc_raw = dict(raw.get("truncation", {}))
    _check_keys(trunc_raw, _TRUNC_KEYS, "truncation")
    for key in ("n_max", "k_levels"):
        if key in trunc_raw:
            trunc_raw[key] = _coerce_int(trunc_raw[key], f"truncation.{key}")
    try:
        truncation = TruncationSpec(**trunc_raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid truncation spec: {exc}", field="truncation")

    seed = raw.get("seed")
    if seed is not None:
        seed = _coerce_int(seed, "seed")
    threads = raw.get("threads")
    if threads is not None:
        threads = _coerce_int(threads, "threads")
        if threads < 1:
            raise ConfigError("`threads` must be at least 1", field="threads")

    task = raw.get("task", {})
    if task is None:
        task = {}
    if not isinstance(task, dict):
        raise ConfigError("`task` must be a mapping", field="task")

    return RunConfig(circuit=circuit, bias=bias, truncation=truncation,
                     seed=seed, threads=threads, task=task)


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def serialize_config(config: RunConfig) -> str:
    """YAML rendering that reparses to an identical RunConfig."""
    data: dict[str, Any] = {
        "energy_unit": "ej",
        "circuit": {
            "ej": list(config.circuit.ej),
            "cj": config.circuit.cj, "cx": config.circuit.cx,
            "cc": config.circuit.cc, "zwg": config.circuit.zwg,
            "gap": config.circuit.gap, "gap_unit": config.circuit.gap_unit,
            "t_base": config.circuit.t_base, "t_qp": config.circuit.t_qp,
            "ej_ref_ghz": config.circuit.ej_ref_ghz,
        },
        "bias": {
            "phi_x": config.bias.phi_x, "nx": list(config.bias.nx),
            "n0": config.bias.n0,
        },
        "truncation": {
            "n_max": config.truncation.n_max,
            "k_levels": config.truncation.k_levels,
            "basis_kind": config.truncation.basis_kind,
        },
    }
    if config.circuit.ecs_ratio is not None:
        data["circuit"]["ecs_ratio"] = config.circuit.ecs_ratio
    if config.bias.omega_d is not None:
        data["bias"]["omega_d"] = config.bias.omega_d
    if config.seed is not None:
        data["seed"] = config.seed
    if config.threads is not None:
        data["threads"] = config.threads
    if config.task:
        data["task"] = config.task
    return yaml.safe_dump(data, sort_keys=False)


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
