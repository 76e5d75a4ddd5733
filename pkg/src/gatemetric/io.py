"""JSON matrix files and experiment configuration.

Matrices are stored as ``{"rows": r, "cols": c, "data": [[re, im], ...]}`` in
row-major order. Floats are written with 17 significant digits so a file
written here re-parses to bit-identical values.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .control import ObjectiveConfig, OptimizerConfig, ShapeFunction
from .dynamics import (
    CHAIN_1Q2E_OMEGA,
    TRIANGLE_2Q1E_OMEGA,
    SpinSystem,
    chain_1q2e,
    cnot_gate,
    hadamard_gate,
    triangle_2q1e,
)


class ConfigError(ValueError):
    """Malformed matrix file or experiment configuration."""


def _fmt(x: float) -> str:
    s = format(float(x), ".17g")
    # keep a float marker so -0.0 and integral values parse back as floats
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps_matrix(m) -> str:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    pairs = ", ".join(f"[{_fmt(z.real)}, {_fmt(z.imag)}]" for z in m.ravel())
    return f'{{"rows": {m.shape[0]}, "cols": {m.shape[1]}, "data": [{pairs}]}}\n'


def matrix_from_obj(obj, where: str = "matrix") -> np.ndarray:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object with rows, cols, data")
    for key in ("rows", "cols", "data"):
        if key not in obj:
            raise ConfigError(f"{where}: missing field '{key}'")
    rows, cols, data = obj["rows"], obj["cols"], obj["data"]
    if not (isinstance(rows, int) and isinstance(cols, int)) or rows < 1 or cols < 1:
        raise ConfigError(f"{where}: 'rows' and 'cols' must be positive integers")
    if not isinstance(data, list) or len(data) != rows * cols:
        raise ConfigError(f"{where}: 'data' must hold rows*cols = {rows * cols} entries")
    out = np.empty(rows * cols, dtype=complex)
    for i, pair in enumerate(data):
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pair)
        ):
            raise ConfigError(f"{where}: data[{i}] must be a [re, im] pair of numbers")
        if not all(math.isfinite(v) for v in pair):
            raise ConfigError(f"{where}: data[{i}] is not finite")
        out[i] = complex(pair[0], pair[1])
    return out.reshape(rows, cols)


def loads_matrix(text: str, where: str = "matrix") -> np.ndarray:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: invalid JSON ({exc})") from exc
    return matrix_from_obj(obj, where)


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read matrix file {path}: {exc}") from exc
    return loads_matrix(text, str(path))


def write_matrix(path, m) -> None:
    Path(path).write_text(dumps_matrix(m))


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model", "gamma_list", "target"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["topology"],
            "additionalProperties": False,
            "properties": {
                "topology": {"enum": ["chain-1q2e", "triangle-2q1e", "custom"]},
                "omega": {"type": "array", "items": _POS, "minItems": 1},
                "mu": {"type": "array", "items": _NUM, "minItems": 1},
                "gamma_qq": {"type": "number", "minimum": 0},
                "q": _POS_INT,
                "e": {"type": "integer", "minimum": 0},
                "couplings": {"type": "array", "items": {"type": "array", "items": _NUM}},
            },
        },
        "gamma_list": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "target": {
            "oneOf": [
                {"enum": ["hadamard", "cnot"]},
                {
                    "type": "object",
                    "required": ["file"],
                    "additionalProperties": False,
                    "properties": {"file": {"type": "string", "minLength": 1}},
                },
            ]
        },
        "t_f": _POS,
        "steps": _POS_INT,
        "alpha": _POS,
        "shape": {"enum": ["sine", "constant"]},
        "epsilon_delta": _POS,
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": _POS_INT,
                "restarts": _POS_INT,
                "step_init": _POS,
                "armijo_c": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "backtrack": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_backtracks": _POS_INT,
                "tol": {"type": "number", "minimum": 0},
                "window": _POS_INT,
                "init_amplitude": {"type": "number", "minimum": 0},
                "switch_delta": {"type": "number", "minimum": 0},
                "step_rule": {"enum": ["bb", "doubling"]},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "workers": _POS_INT,
        "output": {"type": "string", "minLength": 1},
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description: model, couplings to sweep, target and settings."""

    topology: str
    gamma_list: tuple
    target: np.ndarray = field(repr=False)
    target_name: str
    objective: ObjectiveConfig = field(repr=False)
    optimizer: OptimizerConfig
    model: dict = field(default_factory=dict)
    seed: int = 0
    workers: int | None = None
    output: str | None = None

    def system(self, gamma: float) -> SpinSystem:
        """The spin system at coupling ``gamma``."""
        m = self.model
        if self.topology == "chain-1q2e":
            return chain_1q2e(gamma, omega=m.get("omega", CHAIN_1Q2E_OMEGA), mu=m.get("mu", (1.0,)))
        if self.topology == "triangle-2q1e":
            return triangle_2q1e(
                gamma,
                omega=m.get("omega", TRIANGLE_2Q1E_OMEGA),
                mu=m.get("mu", (1.0, 1.0)),
                gamma_qq=m.get("gamma_qq", 0.0),
            )
        q, e = m["q"], m["e"]
        pattern = np.asarray(m["couplings"], dtype=float)
        return SpinSystem(q, e, tuple(m["omega"]), tuple(m.get("mu", [1.0] * q)), gamma * pattern)


def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def parse_config(obj, base_dir=None) -> ExperimentConfig:
    """Validate a decoded config object; errors name the offending field."""
    try:
        jsonschema.validate(obj, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config field '{_error_path(err)}': {err.message}") from err
    model = dict(obj["model"])
    topology = model.pop("topology")
    if topology == "custom":
        for key in ("q", "e", "omega", "couplings"):
            if key not in model:
                raise ConfigError(f"config field 'model.{key}': required for custom topology")
    else:
        for key in ("q", "e", "couplings"):
            if key in model:
                raise ConfigError(f"config field 'model.{key}': only allowed for custom topology")
    if topology == "chain-1q2e" and "gamma_qq" in model:
        raise ConfigError("config field 'model.gamma_qq': only used by triangle-2q1e")

    target_spec = obj["target"]
    if isinstance(target_spec, str):
        target = hadamard_gate() if target_spec == "hadamard" else cnot_gate()
        target_name = target_spec
    else:
        path = Path(target_spec["file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        target = read_matrix(path)
        target_name = str(target_spec["file"])

    shape = ShapeFunction(obj.get("shape", "sine"))
    obj_kw = {k: obj[k] for k in ("alpha", "t_f", "steps", "epsilon_delta") if k in obj}
    opt_kw = dict(obj.get("optimizer", {}))
    seed = obj.get("seed", 0)
    try:
        objective = ObjectiveConfig(target=target, shape=shape, **obj_kw)
        optimizer = OptimizerConfig(seed=seed, **opt_kw)
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc
    cfg = ExperimentConfig(
        topology=topology,
        gamma_list=tuple(float(g) for g in obj["gamma_list"]),
        target=target,
        target_name=target_name,
        objective=objective,
        optimizer=optimizer,
        model=model,
        seed=seed,
        workers=obj.get("workers"),
        output=obj.get("output"),
    )
    # build once so model/target mismatches surface as config errors
    try:
        sys = cfg.system(cfg.gamma_list[0])
        objective.full_target(sys.dims)
    except ValueError as exc:
        raise ConfigError(f"config field 'model': {exc}") from exc
    return cfg


CONFIG_DIR = Path(__file__).resolve().parent / "configs"


def bundled_configs() -> list[str]:
    """Names of the configs shipped with the package."""
    return sorted(p.name for p in CONFIG_DIR.glob("*.json"))


def load_config(path) -> ExperimentConfig:
    """Load a config file; a bare name that does not exist locally falls back to the bundled configs."""
    path = Path(path)
    if not path.exists() and path.parent == Path(".") and (CONFIG_DIR / path.name).exists():
        path = CONFIG_DIR / path.name
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON ({exc})") from exc
    return parse_config(obj, base_dir=path.parent)


def resolve_workers(flag: int | None, configured: int | None = None) -> int:
    """Worker count from the flag, then the config, then ``GATEMETRIC_WORKERS``, then the core count."""
    if flag is not None:
        return max(int(flag), 1)
    if configured is not None:
        return max(int(configured), 1)
    env = os.environ.get("GATEMETRIC_WORKERS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError as exc:
            raise ConfigError(f"GATEMETRIC_WORKERS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1
