"""Experiment configuration: schema, validation, and object construction.

Configs are JSON documents with five blocks (``cellSystem``, ``weight``,
``grids``, ``sampling``, ``output``); unknown keys are rejected and every
numeric table is length-checked against the declared alphabet and depth,
with errors naming the offending block.  The canonical serialization of the
fully-defaulted config is hashed so every output file can carry a short
provenance stamp.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .pressure import extrapolate_pressure, finite_pressure
from .reference import DEFAULT_DEPTH_SCHEDULE, default_config
from .symbolic import CellSystem, row_word_count
from .weights import (
    CylinderWeight,
    LetterRowWeight,
    RowSumRowWeight,
    UniformRowWeight,
    make_constant_cell,
    make_matrix_cocycle,
    normalize_to_gibbs,
    SkewProductWeight,
)

__all__ = [
    "CONFIG_SCHEMA",
    "ConfigError",
    "ExperimentConfig",
    "build_system",
    "build_weight",
    "config_sha256",
    "load_config",
    "load_raw",
    "parse_config",
]

#: Dyadic offsets added on both sides of each refinement center of a q-grid.
REFINE_OFFSETS = (0.03125, 0.0625, 0.125)

_POSITIVE_ARRAY = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "number", "exclusiveMinimum": 0},
}

CONFIG_SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "required": ["cellSystem", "weight"],
    "properties": {
        "cellSystem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["r1", "r2", "allowed"],
            "properties": {
                "r1": {"type": "integer", "minimum": 2},
                "r2": {"type": "integer", "minimum": 2},
                "allowed": {
                    "type": "array",
                    "minItems": 2,
                    "items": {
                        "type": "array",
                        "minItems": 2,
                        "maxItems": 2,
                        "items": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "weight": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constantCell", "matrixCocycle", "skewProduct"]},
                "depth": {"type": "integer", "minimum": 1},
                "values": _POSITIVE_ARRAY,
                "truncated": {
                    "type": "object",
                    "additionalProperties": _POSITIVE_ARRAY,
                },
                "dimension": {"type": "integer", "minimum": 1},
                "matrices": {"type": "array", "minItems": 1, "items": _POSITIVE_ARRAY},
                "rho": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["values"],
                    "properties": {
                        "depth": {"type": "integer", "minimum": 1},
                        "values": _POSITIVE_ARRAY,
                    },
                },
                "theta1": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["uniform", "letters", "rowSum"]},
                        "values": _POSITIVE_ARRAY,
                        "q": {"type": "number"},
                    },
                },
                "normalize": {"type": "boolean"},
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "qGrid": {
                    "oneOf": [
                        {"type": "array", "minItems": 1, "items": {"type": "number"}},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["start", "stop", "count"],
                            "properties": {
                                "start": {"type": "number"},
                                "stop": {"type": "number"},
                                "count": {"type": "integer", "minimum": 1},
                                "refine": {
                                    "type": "array",
                                    "items": {"type": "number"},
                                },
                            },
                        },
                    ]
                },
                "depthSchedule": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "integer", "minimum": 1},
                },
            },
        },
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nSamples": {"type": "integer", "minimum": 0},
                "depth": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 1},
                "masterSeed": {"type": "integer", "minimum": 0},
                "q": {"type": "number"},
                "variant": {"enum": ["psiQ", "psiTildeQ"]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "formats": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"enum": ["csv", "json", "pgm", "plot"]},
                },
            },
        },
    },
}


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending block."""


def config_sha256(data: dict) -> str:
    """Hash of the canonical (sorted, compact) JSON serialization."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_system(block: dict) -> CellSystem:
    try:
        return CellSystem(
            r1=block["r1"],
            r2=block["r2"],
            allowed=tuple((a1, a2) for a1, a2 in block["allowed"]),
        )
    except ValueError as exc:
        raise ConfigError(f"cellSystem: {exc}") from exc


def _table_or_error(values, expected: int, label: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (expected,):
        raise ConfigError(f"{label}: expected {expected} positive values, got {arr.size}")
    return np.log(arr)


def _reject_stray(block: dict, kind: str, used: set[str]) -> None:
    stray = set(block) - used - {"kind", "normalize"}
    if stray:
        raise ConfigError(
            f"weight: key(s) {sorted(stray)} are not used by kind {kind!r}"
        )


def _build_constant_cell(block: dict, system: CellSystem) -> CylinderWeight:
    _reject_stray(block, "constantCell", {"depth", "values", "truncated"})
    depth = int(block.get("depth", 1))
    nc = system.n_cells
    if "values" not in block:
        raise ConfigError("weight: constantCell requires a 'values' table")
    window = _table_or_error(block["values"], nc**depth, "weight.values")
    truncated = {}
    for key, values in (block.get("truncated") or {}).items():
        try:
            length = int(key)
        except ValueError as exc:
            raise ConfigError(f"weight.truncated: non-integer length key {key!r}") from exc
        if not 1 <= length < depth:
            raise ConfigError(
                f"weight.truncated: length {length} outside 1..{depth - 1}"
            )
        truncated[length] = _table_or_error(
            values, nc**length, f"weight.truncated[{key}]"
        )
    try:
        return make_constant_cell(system, depth, window.reshape((nc,) * depth), truncated)
    except ValueError as exc:
        raise ConfigError(f"weight: {exc}") from exc


def _build_matrix_cocycle(block: dict, system: CellSystem) -> CylinderWeight:
    _reject_stray(block, "matrixCocycle", {"dimension", "matrices"})
    if "dimension" not in block or "matrices" not in block:
        raise ConfigError("weight: matrixCocycle requires 'dimension' and 'matrices'")
    dim = int(block["dimension"])
    mats = block["matrices"]
    if len(mats) != system.n_cells:
        raise ConfigError(
            f"weight.matrices: expected one matrix per allowed cell "
            f"({system.n_cells}), got {len(mats)}"
        )
    stack = np.empty((system.n_cells, dim, dim))
    for i, flat in enumerate(mats):
        arr = np.asarray(flat, dtype=float)
        if arr.shape != (dim * dim,):
            raise ConfigError(
                f"weight.matrices[{i}]: expected {dim * dim} row-major entries, "
                f"got {arr.size}"
            )
        stack[i] = arr.reshape(dim, dim)
    try:
        return make_matrix_cocycle(system, dim, stack)
    except ValueError as exc:
        raise ConfigError(f"weight: {exc}") from exc


def _build_skew_product(block: dict, system: CellSystem) -> CylinderWeight:
    _reject_stray(block, "skewProduct", {"rho", "theta1"})
    if "rho" not in block or "theta1" not in block:
        raise ConfigError("weight: skewProduct requires 'rho' and 'theta1'")
    rho_block = block["rho"]
    depth = int(rho_block.get("depth", 1))
    nc = system.n_cells
    window = _table_or_error(rho_block["values"], nc**depth, "weight.rho.values")
    rho = make_constant_cell(system, depth, window.reshape((nc,) * depth))
    theta = block["theta1"]
    kind = theta["kind"]
    if kind == "uniform":
        row = UniformRowWeight(system.r1)
    elif kind == "letters":
        if "values" not in theta:
            raise ConfigError("weight.theta1: letters kind requires 'values'")
        row = LetterRowWeight(
            system.r1,
            _table_or_error(theta["values"], system.r1, "weight.theta1.values"),
        )
    else:
        row = RowSumRowWeight(rho, q=float(theta.get("q", 1.0)))
    try:
        return SkewProductWeight(rho, row)
    except ValueError as exc:
        raise ConfigError(f"weight: {exc}") from exc


def build_weight(
    block: dict, system: CellSystem, depth_schedule: tuple[int, ...] = DEFAULT_DEPTH_SCHEDULE
) -> CylinderWeight:
    """Construct the cylinder weight described by a config block.

    With ``normalize: true`` the raw pressure is extrapolated over the depth
    schedule and the weight is shifted to (approximately) zero pressure.
    """
    kind = block["kind"]
    builders = {
        "constantCell": _build_constant_cell,
        "matrixCocycle": _build_matrix_cocycle,
        "skewProduct": _build_skew_product,
    }
    weight = builders[kind](block, system)
    if block.get("normalize", False):
        feasible = [n for n in depth_schedule if row_word_count(system, n) <= 1 << 20]
        if len(feasible) < 2:
            raise ConfigError("weight.normalize: depth schedule too shallow to estimate pressure")
        estimate = extrapolate_pressure(
            {n: finite_pressure(weight, n) for n in feasible[-3:]}
        )
        weight = normalize_to_gibbs(weight, estimate.value)
    return weight


def _build_q_grid(spec) -> np.ndarray:
    if isinstance(spec, dict):
        base = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["count"]))
        extras = [
            center + sign * offset
            for center in spec.get("refine", [])
            for sign in (-1.0, 1.0)
            for offset in REFINE_OFFSETS
        ]
        grid = np.unique(np.concatenate([base, np.asarray(extras, dtype=float)]))
    else:
        grid = np.unique(np.asarray(spec, dtype=float))
    if grid.size == 0:
        raise ConfigError("grids.qGrid: empty grid")
    return grid


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: constructed objects plus provenance hash."""

    raw: dict
    system: CellSystem
    weight: CylinderWeight
    q_grid: np.ndarray
    depth_schedule: tuple[int, ...]
    n_samples: int
    sample_depth: int
    sample_horizon: int | None
    master_seed: int
    sample_q: float
    sample_variant: str
    output_dir: str
    formats: tuple[str, ...]
    sha256: str


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a config dictionary and build the experiment objects."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from exc
    filled = dict(default_config())
    filled.update({k: v for k, v in data.items()})
    system = build_system(filled["cellSystem"])

    grids = filled.get("grids", {})
    schedule = tuple(int(n) for n in grids.get("depthSchedule", DEFAULT_DEPTH_SCHEDULE))
    if list(schedule) != sorted(set(schedule)):
        raise ConfigError("grids.depthSchedule: must be strictly increasing")
    q_grid = _build_q_grid(grids.get("qGrid", default_config()["grids"]["qGrid"]))

    weight = build_weight(filled["weight"], system, schedule)

    sampling = {**default_config()["sampling"], **filled.get("sampling", {})}
    output = {**default_config()["output"], **filled.get("output", {})}
    canonical = {
        "cellSystem": filled["cellSystem"],
        "weight": filled["weight"],
        "grids": {
            "qGrid": [float(q) for q in q_grid],
            "depthSchedule": list(schedule),
        },
        "sampling": sampling,
        "output": output,
    }
    return ExperimentConfig(
        raw=canonical,
        system=system,
        weight=weight,
        q_grid=q_grid,
        depth_schedule=schedule,
        n_samples=int(sampling["nSamples"]),
        sample_depth=int(sampling["depth"]),
        sample_horizon=int(sampling["horizon"]) if "horizon" in sampling else None,
        master_seed=int(sampling["masterSeed"]),
        sample_q=float(sampling["q"]),
        sample_variant=str(sampling["variant"]),
        output_dir=str(output["directory"]),
        formats=tuple(output["formats"]),
        sha256=config_sha256(canonical),
    )


def load_raw(path: str | Path) -> dict:
    """Read a JSON config file into a dict, with line/column diagnostics."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON config file."""
    return parse_config(load_raw(path))
