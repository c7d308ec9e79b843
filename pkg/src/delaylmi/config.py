"""Run configuration: JSON loading, schema validation and object construction."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (BoundedDelaySubsystem, ControllerGains, DelaySystem, ModelError, PlantModel,
                    build_closed_loop)
from .sdp import SolverConfig
from .simverify import DelaySignal

TASKS = ("analyze", "design", "simulate", "sweep", "export-sdpa", "check-certificate")


class ConfigError(ValueError):
    """Invalid configuration; ``details`` lists individual diagnostics."""

    def __init__(self, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.details = details or []


def load_schema(name: str = "config.schema.json") -> dict:
    text = resources.files("delaylmi").joinpath("schemas", name).read_text()
    return json.loads(text)


def validate(data: dict, schema_name: str = "config.schema.json") -> None:
    import jsonschema

    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        details = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                   for e in errors]
        raise ConfigError("configuration does not match the schema", details)


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: dict) -> str:
    return "sha256:" + hashlib.sha256(canonical_json(data).encode()).hexdigest()


def _rectangular(name: str, value) -> None:
    if isinstance(value, list) and value and isinstance(value[0], list):
        widths = {len(r) for r in value}
        if len(widths) != 1:
            raise ConfigError(f"{name} is not rectangular (row lengths {sorted(widths)})")


@dataclass
class RunConfig:
    task: str
    data: dict
    base: Path = field(default_factory=Path.cwd)

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base / q

    # -- delays and models

    def delays(self) -> tuple[int, int, int]:
        d = self.data.get("delays")
        if d is None:
            raise ConfigError("missing 'delays'")
        d_m, d_M = d["d_m"], d["d_M"]
        d_n = d.get("d_n", d_m)
        if not d_m <= d_n <= d_M:
            raise ConfigError(f"need d_m <= d_n <= d_M, got {d_m}, {d_n}, {d_M}")
        return d_m, d_n, d_M

    def plant(self) -> PlantModel:
        p = self.data.get("plant")
        if p is None:
            raise ConfigError("missing 'plant'")
        return PlantModel(p["A_p"], p["B_p"])

    def gains(self) -> ControllerGains:
        g = self.data["gains"]
        return ControllerGains(np.atleast_2d(g["K"]), np.atleast_2d(g["F"]), g["L"])

    def _matrix(self, name: str, n: int):
        s = self.data["system"]
        return np.asarray(s[name], dtype=float) if name in s else np.zeros((n, n))

    def system(self) -> DelaySystem:
        d_m, d_n, d_M = self.delays()
        if "system" in self.data:
            A = np.asarray(self.data["system"]["A"], dtype=float)
            n = A.shape[0] if A.ndim == 2 else 0
            return DelaySystem(A, self._matrix("A_n", n), self._matrix("A_d", n), d_m, d_n, d_M)
        if "plant" in self.data and "gains" in self.data:
            return build_closed_loop(self.plant(), self.gains(), d_m, d_n, d_M)
        raise ConfigError("need 'system' or 'plant' with 'gains'")

    def bounded(self) -> BoundedDelaySubsystem:
        if "system" not in self.data:
            raise ConfigError("the bounded-delay problem needs 'system'")
        d_m, _, d_M = self.delays()
        A = np.asarray(self.data["system"]["A"], dtype=float)
        n = A.shape[0] if A.ndim == 2 else 0
        return BoundedDelaySubsystem(A, self._matrix("A_m", n), self._matrix("A_M", n),
                                     self._matrix("A_d", n), d_m, d_M)

    def epsilon(self) -> float:
        return float(self.data.get("epsilon", -0.5))

    def solver(self) -> SolverConfig:
        return SolverConfig(**self.section("solver"))

    def signal(self, d_m: int, d_M: int, seed: int | None = None) -> DelaySignal:
        s = self.section("simulation").get("signal", {"kind": "uniform-random"})
        kind = s["kind"]
        if kind == "constant":
            return DelaySignal.constant(s.get("value", d_M), d_m, d_M)
        if kind == "extremal-toggle":
            return DelaySignal.toggle(s.get("period", 1), d_m, d_M)
        if kind == "explicit":
            return DelaySignal.explicit(s.get("sequence", []), d_m, d_M)
        return DelaySignal.random(self.seed if seed is None else seed, d_m, d_M)

    def check_models(self) -> None:
        """Build every model the task needs so errors surface before any solve."""
        if self.task in ("analyze", "simulate"):
            self.system()
        elif self.task in ("design", "sweep"):
            self.plant()
            if self.task == "sweep" and "sweep" not in self.data:
                raise ConfigError("missing 'sweep'")
        elif self.task in ("export-sdpa", "check-certificate"):
            kind = self.problem_kind()
            if kind == "bounded":
                self.bounded()
            elif kind == "design":
                self.plant()
                self.delays()
            else:
                self.system()
            if self.task == "check-certificate" and "certificate" not in self.data:
                raise ConfigError("missing 'certificate'")
        if self.task == "simulate":
            sim = self.section("simulation")
            d_m, _, d_M = self.delays()
            self.signal(d_m, d_M)
            if "initial" in sim:
                _rectangular("simulation/initial", sim["initial"])
        self.solver()

    def problem_kind(self) -> str:
        if "problem" in self.data:
            return self.data["problem"]
        if "system" in self.data or "gains" in self.data:
            return "switched"
        return "design"


def _check_matrices(data, prefix="") -> None:
    if isinstance(data, dict):
        for k, v in data.items():
            _check_matrices(v, f"{prefix}{k}/")
    elif isinstance(data, list) and data and isinstance(data[0], list):
        _rectangular(prefix.rstrip("/"), data)


def load_config(path, task: str, seed: int | None = None) -> RunConfig:
    """Read, validate and sanity-check a configuration file for ``task``."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(data, task, seed, base=path.parent)


def config_from_dict(data: dict, task: str, seed: int | None = None, base=None) -> RunConfig:
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    validate(data)
    if data.get("task", task) != task:
        raise ConfigError(f"configuration is for task {data['task']!r}, not {task!r}")
    _check_matrices(data)
    data = copy.deepcopy(data)
    data["task"] = task
    if seed is not None:
        data["seed"] = int(seed)
    cfg = RunConfig(task, data, Path(base) if base is not None else Path.cwd())
    try:
        cfg.check_models()
    except (ModelError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    return cfg
