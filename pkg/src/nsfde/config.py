"""JSON experiment configuration: parsing, validation and command-line overrides."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .functionals import FunctionalSpec, PointwiseMap
from .measures import DelayMeasure, Segment
from .picard import Problem

TASKS = ("solve", "certify", "picard-diagnostics", "counterexample", "gronwall-demo")


@dataclass(frozen=True)
class Numerics:
    h: float
    seed: int
    tol: float = 1e-8
    max_iter: int = 200
    n_paths: int = 1
    mu: float | None = None  # None picks the schedule parameter from k0


@dataclass(frozen=True)
class ExperimentConfig:
    problem: Problem | None
    numerics: Numerics
    task: str
    output: str
    raw: dict = field(repr=False)
    options: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _get(d, key, field_name, kind=None, default=...):
    if key not in d:
        if default is ...:
            raise ConfigError(field_name, "missing required field")
        return default
    val = d[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigError(field_name, f"expected a finite number, got {val!r}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(field_name, f"expected an integer, got {val!r}")
        return val
    return val


def _spec(lit, tau, dim, name):
    try:
        return FunctionalSpec.from_literal(lit, tau, dim)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as err:
        raise ConfigError(name, str(err)) from err


def _psi(lit, tau, dim, h):
    """Initial segment from ``{"constant": c}``, ``{"linear": [a, b]}`` (a + b s) or ``{"values": [...]}``."""
    if lit is None:
        raise ConfigError("problem.psi", "missing required field")
    if "constant" in lit:
        c = np.broadcast_to(np.asarray(lit["constant"], dtype=float), (dim,)).copy()
        return lambda s: c
    if "linear" in lit:
        a, b = (float(v) for v in lit["linear"])
        return lambda s: np.full(dim, a + b * s)
    if "values" in lit:
        vals = np.asarray(lit["values"], dtype=float)
        try:
            return Segment(tau, h, vals)
        except ValueError as err:
            raise ConfigError("problem.psi.values", str(err)) from err
    raise ConfigError("problem.psi", "expected one of 'constant', 'linear', 'values'")


def _divides(a, b):
    n = round(a / b)
    return n >= 1 and abs(n * b - a) <= 1e-9 * max(a, 1.0)


def parse_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a config dictionary; ``overrides`` may set seed, n_paths, h and output."""
    raw = json.loads(json.dumps(raw))
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    num = raw.setdefault("numerics", {})
    for key, target in (("seed", "seed"), ("n_paths", "n_paths"), ("h", "h")):
        if key in overrides:
            num[target] = overrides[key]
    if "output" in overrides:
        raw["output"] = overrides["output"]

    task = _get(raw, "task", "task")
    if task not in TASKS:
        raise ConfigError("task", f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    h = _get(num, "h", "numerics.h", float)
    if h <= 0:
        raise ConfigError("numerics.h", "grid step must be positive")
    if "seed" not in num:
        raise ConfigError("numerics.seed", "a seed is required; there is no nondeterministic default")
    seed = _get(num, "seed", "numerics.seed", int)
    if seed < 0:
        raise ConfigError("numerics.seed", "seed must be nonnegative")
    numerics = Numerics(
        h=h, seed=seed,
        tol=_get(num, "tol", "numerics.tol", float, 1e-8),
        max_iter=_get(num, "max_iter", "numerics.max_iter", int, 200),
        n_paths=_get(num, "n_paths", "numerics.n_paths", int, 1),
        mu=_get(num, "mu", "numerics.mu", float, None),
    )
    if numerics.n_paths < 1:
        raise ConfigError("numerics.n_paths", "need at least one path")
    if numerics.mu is not None and not 0 < numerics.mu < 1:
        raise ConfigError("numerics.mu", "mu must lie in (0, 1)")
    output = raw.get("output", "out")

    problem = None
    if "problem" in raw:
        pr = raw["problem"]
        tau = _get(pr, "tau", "problem.tau", float)
        if tau <= 0:
            raise ConfigError("problem.tau", "delay horizon must be positive")
        if not _divides(tau, h):
            raise ConfigError("numerics.h", f"grid step {h} does not divide tau {tau}")
        dim = _get(pr, "dim", "problem.dim", int, 1)
        m = _get(pr, "noise_dim", "problem.noise_dim", int, 1)
        T = _get(pr, "T", "problem.T", float)
        if T <= 0 or not _divides(T, h):
            raise ConfigError("problem.T", f"horizon must be positive and a multiple of h={h}")
        D = _spec(pr.get("D"), tau, dim, "problem.D")
        f = _spec(pr.get("f"), tau, dim, "problem.f")
        g = _spec(pr.get("g"), tau, dim * m, "problem.g")
        problem = Problem(D, f, g, _psi(pr.get("psi"), tau, dim, h), T, m)
    elif task != "gronwall-demo" and task != "counterexample":
        raise ConfigError("problem", "missing required field")
    options = {k: v for k, v in raw.items() if k not in ("problem", "numerics", "task", "output")}
    return ExperimentConfig(problem, numerics, task, output, raw, options)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as err:
        raise ConfigError("config", f"cannot read {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError("config", f"invalid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be an object")
    return parse_config(raw, overrides)


def measure_option(lit, tau, name) -> DelayMeasure:
    try:
        return DelayMeasure.from_literal(lit, tau)
    except (ValueError, KeyError, TypeError) as err:
        raise ConfigError(name, str(err)) from err


def map_option(lit, name) -> PointwiseMap:
    try:
        return PointwiseMap.from_literal(lit)
    except (ValueError, KeyError, TypeError) as err:
        raise ConfigError(name, str(err)) from err
