"""Flat ``section.key = value`` experiment configs.

Values are parsed as JSON when possible (numbers, bracketed lists,
booleans) and kept as bare strings otherwise.  ``#`` starts a comment.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Optional

from .errors import ConfigError
from .models import CUSTOM_TABLE, KINDS, MECHANICAL, DiscreteAction, LagrangianModel


@dataclass
class ModelConfig:
    kind: str = MECHANICAL
    dimension: int = 1
    mass: float = 1.0
    potential: list = field(default_factory=list)

    def build(self) -> LagrangianModel:
        if self.kind == CUSTOM_TABLE:
            raise ConfigError("custom-table models are only available through the Python API")
        terms = tuple((tuple(k) if isinstance(k, (list, tuple)) else (k,), a, b) for k, a, b in self.potential)
        try:
            return LagrangianModel(self.dimension, self.kind, self.mass, terms)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc


@dataclass
class GridConfig:
    n: Optional[int] = None
    c_h: float = 1.0
    exponent: float = 2.0


@dataclass
class ActionConfig:
    tau: Optional[float] = None
    tau_schedule: Optional[list] = None
    p: list = field(default_factory=list)


@dataclass
class SolverConfig:
    delta: Optional[float] = None
    delta_schedule: list = field(default_factory=lambda: [0.4 * 2.0**-k for k in range(8)])
    tol: float = 1e-3
    discount_tol: float = 1e-9
    max_iter: Optional[int] = None
    safety: float = 1.5
    mather_tol: float = 1e-9


@dataclass
class OutputConfig:
    directory: Optional[str] = None
    precision: int = 17


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    action: ActionConfig = field(default_factory=ActionConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def p_vector(self):
        p = self.action.p or [0.0] * self.model.dimension
        return tuple(float(c) for c in p)

    def taus(self):
        if self.action.tau_schedule:
            return [float(t) for t in self.action.tau_schedule]
        if self.action.tau is None:
            raise ConfigError("action.tau or action.tau_schedule is required")
        return [float(self.action.tau)]

    def action_for(self, tau) -> DiscreteAction:
        return DiscreteAction(self.model.build(), tau, self.p_vector())

    def grid_for(self, tau):
        from .grid import PeriodicGrid

        if self.grid.n is not None:
            return PeriodicGrid(self.model.dimension, int(self.grid.n))
        return PeriodicGrid.for_step(tau, self.model.dimension, self.grid.c_h, self.grid.exponent)


SECTIONS = {"model": ModelConfig, "grid": GridConfig, "action": ActionConfig, "solver": SolverConfig,
            "output": OutputConfig}


def _parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} lacks a section prefix")
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        block = getattr(cfg, section)
        if name not in {f.name for f in fields(block)}:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(block, name, _parse_value(value))
    validate_config(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _strictly_monotone(seq, decreasing=True):
    pairs = list(zip(seq, seq[1:]))
    return all(b < a for a, b in pairs) if decreasing else all(b > a for a, b in pairs)


def validate_config(cfg: ExperimentConfig):
    m = cfg.model
    if m.kind not in KINDS:
        raise ConfigError(f"model.kind must be one of {KINDS}")
    if not isinstance(m.dimension, int) or m.dimension < 1:
        raise ConfigError("model.dimension must be a positive integer")
    if not isinstance(m.mass, (int, float)) or m.mass <= 0:
        raise ConfigError("model.mass must be positive")
    for term in m.potential:
        if not (isinstance(term, list) and len(term) == 3):
            raise ConfigError("model.potential entries must be [k, a_cos, a_sin]")
    taus = cfg.action.tau_schedule or ([cfg.action.tau] if cfg.action.tau is not None else [])
    for t in taus:
        if not isinstance(t, (int, float)) or not (0 < t <= 1):
            raise ConfigError(f"tau values must lie in (0, 1], got {t!r}")
    if cfg.action.tau_schedule and not _strictly_monotone(cfg.action.tau_schedule):
        raise ConfigError("action.tau_schedule must be strictly decreasing")
    if cfg.action.p and len(cfg.action.p) != m.dimension:
        raise ConfigError("action.p must have one entry per dimension")
    s = cfg.solver
    if not s.delta_schedule or not _strictly_monotone(s.delta_schedule):
        raise ConfigError("solver.delta_schedule must be strictly decreasing")
    if not all(0 < d <= 1 for d in s.delta_schedule):
        raise ConfigError("solver.delta_schedule entries must lie in (0, 1]")
    for name in ("tol", "discount_tol", "mather_tol"):
        if not getattr(s, name) > 0:
            raise ConfigError(f"solver.{name} must be positive")
    if s.safety < 1:
        raise ConfigError("solver.safety must be >= 1")
    g = cfg.grid
    if g.n is not None and (not isinstance(g.n, int) or g.n < 4):
        raise ConfigError("grid.n must be an integer >= 4")
    if not g.c_h > 0:
        raise ConfigError("grid.c_h must be positive")
    return cfg


def check_window(cfg: ExperimentConfig, tau, bounds):
    """Window precondition h <= tau * R for a tau/grid pairing."""
    grid = cfg.grid_for(tau)
    if grid.spacing > tau * bounds.window_radius:
        raise ConfigError(f"grid spacing {grid.spacing:.3g} exceeds the window tau*R = {tau * bounds.window_radius:.3g}")
    return grid


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for section in SECTIONS:
        block = getattr(cfg, section)
        for f in fields(block):
            value = getattr(block, f.name)
            if value is None:
                continue
            lines.append(f"{section}.{f.name} = {json.dumps(value) if not isinstance(value, str) else value}")
    return "\n".join(lines) + "\n"
