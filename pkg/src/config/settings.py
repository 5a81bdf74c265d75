"""Experiment configuration: dataclass blocks loaded from and saved to JSON."""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin
from dataclasses import dataclass, field, fields, asdict
import json
import logging
import os

import numpy as np

from src.core.errors import ConfigInvalid

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "GAUGELAB_OUTPUT_DIR"

EXPERIMENTS = (
    "gauge-equivalence",
    "algebra-verify",
    "hermiticity",
    "n1-spectrum",
    "eckart-spring",
    "eckart-order",
    "residual-verify",
    "orbit-invariants",
)

POTENTIAL_KINDS = ("spring", "coulomb2d", "harmonic_trap")
CHART_TYPES = ("none", "linear", "linear_cm", "eckart", "principal_axes")

# Per-experiment parameters and their defaults; unknown keys are rejected.
EXPERIMENT_PARAMS: Dict[str, Dict[str, Any]] = {
    "gauge-equivalence": {
        "positions": None,
        "velocities": None,
        "body_tol": 1e-6,
        "lz_drift_tol": 1e-9,
    },
    "algebra-verify": {
        "gauge_kinds": ["linear", "linear_cm", "principal_axes"],
        "n_points": 100,
        "tol": 1e-10,
        "constraint_tol": 1e-12,
        "checks": ["identities", "constraints"],
        "n_workers": 1,
    },
    "hermiticity": {
        "gauge_kinds": ["linear", "linear_cm", "principal_axes"],
        "trials": 20,
        "ell_z": 0,
        "factor": 5.0,
        "checks": ["hermiticity"],
        "representation_points": 50,
        "representation_tol": 1e-8,
    },
    "n1-spectrum": {
        "ells": [-3, -2, -1, 0, 1, 2, 3],
        "n_radial": 4,
        "n_points": 2000,
        "rel_tol": 1e-5,
    },
    "eckart-spring": {
        "epsilons": [0.02, 0.03, 0.05],
        "ells": [0, 1, 2],
        "ns": [0, 1, 2],
        "m1": 1.0,
        "m2": 1.0,
        "k": 1.0,
        "n_points": 4000,
        "slope_tol": 0.02,
        "coeff_tol": 0.05,
        "min_exponent": 2.5,
        "max_fit_residual": 1e-2,
        "n_workers": 1,
    },
    "eckart-order": {
        "scales": [1e-2, 5e-3, 2.5e-3, 1.25e-3],
        "n_draws": 10,
        "min_exponent": 0.95,
        "max_exponent": 0.1,
    },
    "residual-verify": {
        "n_points": 100,
        "tol": 1e-9,
        "integer_tol": 1e-10,
        "dalpha": 1e-4,
        "generator_tol": 1e-8,
        "invariant_tol": 1e-12,
        "period_tol": 1e-10,
        "lambdas": [1, -2, 0],
        "ns": [2, 0, -1],
    },
    "orbit-invariants": {
        "n_starts": 5,
        "n_alphas": 64,
        "invariant_tol": 1e-12,
        "period_tol": 1e-10,
        "group_tol": 1e-12,
    },
}


@dataclass
class PotentialConfig:
    """One radial potential: kind plus its parameters."""
    kind: str = "spring"
    params: Dict[str, float] = field(default_factory=dict)


@dataclass
class SystemConfig:
    """Particle system configuration."""
    masses: List[float] = field(default_factory=lambda: [1.0, 2.0, 3.0])
    hbar: float = 1.0
    pair_potential: Optional[PotentialConfig] = None
    body_potential: Optional[PotentialConfig] = None


@dataclass
class ChartConfig:
    """Gauge chart configuration.

    ``linear`` and ``linear_cm`` take coefficient lists A and B, ``eckart``
    takes an equilibrium shape Z as [[x, y], ...]. Empty lists mean the
    experiment draws coefficients from its seed.
    """
    type: str = "none"
    A: List[float] = field(default_factory=list)
    B: List[float] = field(default_factory=list)
    Z: List[List[float]] = field(default_factory=list)


@dataclass
class QuadratureConfig:
    """Surface quadrature configuration."""
    order: int = 24
    levels: int = 2
    tol: float = 1e-8


@dataclass
class IntegratorConfig:
    """Step controller and sampling configuration."""
    rtol: float = 1e-11
    atol: float = 1e-13
    t_final: float = 10.0
    n_samples: int = 400
    max_steps: int = 200000


BLOCKS = {
    "system": SystemConfig,
    "chart": ChartConfig,
    "quadrature": QuadratureConfig,
    "integrator": IntegratorConfig,
}

_TYPE_NAMES = {
    float: "number",
    int: "integer",
    str: "string",
}


def _type_name(annotation) -> str:
    if annotation in _TYPE_NAMES:
        return _TYPE_NAMES[annotation]
    origin, args = get_origin(annotation), get_args(annotation)
    if origin is Union and PotentialConfig in args:
        return "potential|null"
    if origin is list:
        return "array of [number, number]" if get_origin(args[0]) is list else "array of number"
    if origin is dict:
        return "object of number"
    return str(annotation)


def _check_number(value, path: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(f"expected a number, got {value!r}", field=path)
    if integer and int(value) != value:
        raise ConfigInvalid(f"expected an integer, got {value!r}", field=path)
    if not np.isfinite(value):
        raise ConfigInvalid(f"value must be finite, got {value!r}", field=path)
    return int(value) if integer else float(value)


def _check_numbers(value, path: str) -> List[float]:
    if not isinstance(value, list):
        raise ConfigInvalid(f"expected a list, got {value!r}", field=path)
    return [_check_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _check_keys(data: Dict, allowed, path: str) -> None:
    if not isinstance(data, dict):
        raise ConfigInvalid(f"expected an object, got {type(data).__name__}", field=path or None)
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        prefix = f"{path}." if path else ""
        raise ConfigInvalid(f"unknown key(s) {unknown}, expected a subset of {sorted(allowed)}",
                            field=f"{prefix}{unknown[0]}")


def _check_param(value, default, path: str):
    """Check one ``params`` entry against the type of its default."""
    if default is None:
        if value is None:
            return None
        if not isinstance(value, list):
            raise ConfigInvalid(f"expected a list or null, got {value!r}", field=path)
        return [_check_numbers(v, f"{path}[{i}]") if isinstance(v, list) else _check_number(v, f"{path}[{i}]")
                for i, v in enumerate(value)]
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigInvalid(f"expected a list, got {value!r}", field=path)
        if default and isinstance(default[0], str):
            for i, v in enumerate(value):
                if not isinstance(v, str):
                    raise ConfigInvalid(f"expected a string, got {v!r}", field=f"{path}[{i}]")
            return list(value)
        integer = bool(default) and isinstance(default[0], int)
        return [_check_number(v, f"{path}[{i}]", integer=integer) for i, v in enumerate(value)]
    checked = _check_number(value, path, integer=isinstance(default, int))
    if path.startswith("params.n_") and checked < 1:
        raise ConfigInvalid(f"must be at least 1, got {checked}", field=path)
    return checked


def _parse_potential(data, path: str) -> Optional[PotentialConfig]:
    if data is None:
        return None
    _check_keys(data, ("kind", "params"), path)
    kind = data.get("kind", "spring")
    if kind not in POTENTIAL_KINDS:
        raise ConfigInvalid(f"unknown potential kind {kind!r}, expected one of {POTENTIAL_KINDS}",
                            field=f"{path}.kind")
    params = data.get("params", {})
    _check_keys(params, _POTENTIAL_PARAMS[kind], f"{path}.params")
    missing = [p for p in _POTENTIAL_PARAMS[kind] if p not in params]
    if missing:
        raise ConfigInvalid(f"missing parameter(s) {missing}", field=f"{path}.params.{missing[0]}")
    return PotentialConfig(kind, {k: _check_number(v, f"{path}.params.{k}") for k, v in params.items()})


_POTENTIAL_PARAMS = {
    "spring": ("k", "a"),
    "coulomb2d": ("g",),
    "harmonic_trap": ("omega",),
}


def _parse_block(cls, data, path: str):
    """Build one dataclass block, checking every field against its annotation."""
    _check_keys(data, [f.name for f in fields(cls)], path)
    values = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value, where = data[f.name], f"{path}.{f.name}"
        kind = _type_name(f.type)
        if kind == "number":
            values[f.name] = _check_number(value, where)
        elif kind == "integer":
            values[f.name] = _check_number(value, where, integer=True)
        elif kind == "string":
            if not isinstance(value, str):
                raise ConfigInvalid(f"expected a string, got {value!r}", field=where)
            values[f.name] = value
        elif kind == "potential|null":
            values[f.name] = _parse_potential(value, where)
        elif kind == "array of number":
            values[f.name] = _check_numbers(value, where)
        elif kind == "array of [number, number]":
            if not isinstance(value, list):
                raise ConfigInvalid(f"expected a list of points, got {value!r}", field=where)
            rows = []
            for i, row in enumerate(value):
                row = _check_numbers(row, f"{where}[{i}]")
                if len(row) != 2:
                    raise ConfigInvalid("expected [x, y]", field=f"{where}[{i}]")
                rows.append(row)
            values[f.name] = rows
    return cls(**values)


def _validate_system(system: SystemConfig) -> None:
    if not system.masses:
        raise ConfigInvalid("at least one mass is required", field="system.masses")
    for i, m in enumerate(system.masses):
        if m <= 0:
            raise ConfigInvalid(f"mass must be positive, got {m}", field=f"system.masses[{i}]")
    if system.hbar <= 0:
        raise ConfigInvalid("hbar must be positive", field="system.hbar")


def _validate_chart(chart: ChartConfig, system: SystemConfig) -> None:
    if chart.type not in CHART_TYPES:
        raise ConfigInvalid(f"unknown chart type {chart.type!r}, expected one of {CHART_TYPES}",
                            field="chart.type")
    n = len(system.masses)
    if chart.type in ("linear", "linear_cm") and (chart.A or chart.B):
        if len(chart.A) != n or len(chart.B) != n:
            raise ConfigInvalid(f"A and B need {n} entries each", field="chart.A")
        masses = np.asarray(system.masses, dtype=float)
        A, B = np.asarray(chart.A, dtype=float), np.asarray(chart.B, dtype=float)
        raw = float(np.sum(masses * (A * A + B * B)))
        if chart.type == "linear_cm":
            # the run re-centers the coefficients onto sum m A = sum m B = 0
            A = A - np.dot(masses, A) / masses.sum()
            B = B - np.dot(masses, B) / masses.sum()
        r2 = float(np.sum(masses * (A * A + B * B)))
        if r2 <= 1e-24 * raw or r2 <= 0:
            raise ConfigInvalid("chart norm R^2 must be positive", field="chart.B")
    if chart.type == "eckart" and chart.Z:
        if len(chart.Z) != n:
            raise ConfigInvalid(f"Z needs {n} points", field="chart.Z")
        z = np.asarray(chart.Z, dtype=float)
        if np.allclose(z, z[0]):
            raise ConfigInvalid("equilibrium shape must not be a single point", field="chart.Z")


@dataclass
class ExperimentConfig:
    """Container for one experiment run."""
    experiment: str
    seed: int = 0
    output_dir: str = "results"
    system: SystemConfig = field(default_factory=SystemConfig)
    chart: ChartConfig = field(default_factory=ChartConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def load_defaults(cls, experiment: str) -> 'ExperimentConfig':
        """Default configuration for a named experiment."""
        return cls.from_dict({"experiment": experiment})

    @classmethod
    def from_dict(cls, data: Dict) -> 'ExperimentConfig':
        """Validate a parsed document and build the configuration.

        Raises:
            ConfigInvalid: with the dotted path of the offending field
        """
        _check_keys(data, [f.name for f in fields(cls)], "")
        name = data.get("experiment")
        if name not in EXPERIMENTS:
            raise ConfigInvalid(f"unknown experiment {name!r}, valid names: {', '.join(EXPERIMENTS)}",
                                field="experiment")
        seed = _check_number(data.get("seed", 0), "seed", integer=True)
        output_dir = data.get("output_dir", "results")
        if not isinstance(output_dir, str):
            raise ConfigInvalid("expected a string", field="output_dir")
        blocks = {key: _parse_block(block, data.get(key, {}), key) for key, block in BLOCKS.items()}
        _validate_system(blocks["system"])
        _validate_chart(blocks["chart"], blocks["system"])
        for key in ("rtol", "atol", "t_final"):
            if getattr(blocks["integrator"], key) <= 0:
                raise ConfigInvalid("must be positive", field=f"integrator.{key}")
        if blocks["quadrature"].order < 2 or blocks["quadrature"].levels < 2:
            raise ConfigInvalid("need order >= 2 and levels >= 2", field="quadrature.order")

        defaults = EXPERIMENT_PARAMS[name]
        given = data.get("params", {})
        _check_keys(given, defaults, "params")
        params = {**defaults, **{k: _check_param(v, defaults[k], f"params.{k}") for k, v in given.items()}}
        return cls(experiment=name, seed=seed, output_dir=output_dir, params=params, **blocks)

    @classmethod
    def load_from_file(cls, config_path: Path) -> 'ExperimentConfig':
        """Load a configuration from a JSON file.

        Args:
            config_path: Path to configuration file

        Returns:
            ExperimentConfig instance
        """
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigInvalid(f"config file not found: {config_path}")
        try:
            with open(config_path, 'r') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"Failed to parse config {config_path}: {e}")
            raise ConfigInvalid(f"line {e.lineno} column {e.colno}: {e.msg}") from e
        config = cls.from_dict(data)
        logger.info(f"Loaded {config.experiment} config from {config_path}")
        return config

    def to_dict(self) -> Dict:
        return asdict(self)

    def save_to_file(self, config_path: Path) -> None:
        """Save the configuration to a JSON file.

        Args:
            config_path: Path to save configuration
        """
        try:
            config_path = Path(config_path)
            config_path.parent.mkdir(parents=True, exist_ok=True)
            with open(config_path, 'w') as f:
                json.dump(self.to_dict(), f, indent=2)
            logger.info(f"Config saved to {config_path}")
        except Exception as e:
            logger.error(f"Failed to save config: {e}")
            raise

    def resolved_output_dir(self, override: Optional[str] = None) -> Path:
        """Output directory: explicit override, then the environment, then the config."""
        return Path(override or os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)


def emit_schema() -> Dict:
    """Machine-readable description of everything ``ExperimentConfig.from_dict`` accepts."""
    blocks = {}
    for key, block in BLOCKS.items():
        defaults = asdict(block())
        blocks[key] = {f.name: {"type": _type_name(f.type), "default": defaults[f.name]}
                       for f in fields(block)}
    return {
        "format": "json",
        "top_level": {
            "experiment": {"type": "string", "enum": list(EXPERIMENTS)},
            "seed": {"type": "integer", "default": 0},
            "output_dir": {"type": "string", "default": "results",
                           "env_override": OUTPUT_DIR_ENV},
        },
        "blocks": blocks,
        "potential": {"kind": list(POTENTIAL_KINDS),
                      "params": {k: list(v) for k, v in _POTENTIAL_PARAMS.items()}},
        "chart_types": list(CHART_TYPES),
        "params": {name: dict(defaults) for name, defaults in EXPERIMENT_PARAMS.items()},
    }
