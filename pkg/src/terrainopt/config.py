"""Run configuration: one JSON document with sections
``terrain``, ``vehicle``, ``stability``, ``planner`` and ``cem``.

Values given on the command line take precedence over the file.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .cem import CemConfig
from .kinematics import VehicleGeometry
from .planner import PlannerConfig
from .stability import StabilityConfig
from .trajectory import CostConfig


@dataclass(frozen=True)
class TerrainSettings:
    n_frequencies: int = 100
    seed: int = 0
    ridge: float = 1e-8
    refine_steps: int = 0


@dataclass(frozen=True)
class StabilitySettings:
    epsilon: float = 0.05
    w_theta: float = 0.05
    force: tuple = None  # None: gravity on the vehicle mass


@dataclass(frozen=True)
class PlannerSettings:
    eta: float = 0.05
    iters: int = 100
    momentum: float = 0.9
    tol: float = 1e-6
    max_halvings: int = 10
    order: int = 10
    steps: int = 50
    horizon: float = 10.0
    use_stability: bool = True
    jacobian_mode: str = "exact"
    w_accel: float = 1.0
    w_curv: float = 1.0
    eps_curv: float = 1e-6


@dataclass(frozen=True)
class RunConfig:
    terrain: TerrainSettings = field(default_factory=TerrainSettings)
    vehicle: VehicleGeometry = field(default_factory=VehicleGeometry)
    stability: StabilitySettings = field(default_factory=StabilitySettings)
    planner: PlannerSettings = field(default_factory=PlannerSettings)
    cem: CemConfig = field(default_factory=CemConfig)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        sections = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(sections)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, sub in d.items():
            kind = sections[name].default_factory
            kwargs[name] = _build(kind, sub, name)
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if hasattr(v, "to_dict") else asdict(v)
        return out

    def overlay(self, section, **values):
        """Copy with ``values`` applied to ``section``; ``None`` entries are skipped."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        current = getattr(self, section)
        known = {f.name for f in fields(current)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown {section} keys: {sorted(unknown)}")
        return replace(self, **{section: replace(current, **values)})

    # -- conversions to the library configs -------------------------------------

    def stability_config(self):
        s = self.stability
        if s.force is None:
            return StabilityConfig.gravity(self.vehicle.mass, s.epsilon, s.w_theta)
        return StabilityConfig(s.epsilon, s.w_theta, tuple(s.force))

    def cost_config(self):
        p = self.planner
        return CostConfig(p.eps_curv, p.w_accel, p.w_curv)

    def planner_config(self):
        p = self.planner
        return PlannerConfig(eta=p.eta, max_iters=p.iters, momentum=p.momentum, tol=p.tol,
                             max_halvings=p.max_halvings, use_stability=p.use_stability,
                             stability=self.stability_config(), cost=self.cost_config(),
                             jacobian_mode=p.jacobian_mode)


def _build(kind, values, name):
    if not isinstance(values, dict):
        raise ValueError(f"config section {name!r} must be an object")
    if kind is VehicleGeometry:
        return VehicleGeometry.from_dict(values)
    known = {f.name for f in fields(kind)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {name} keys: {sorted(unknown)}")
    if "force" in values and values["force"] is not None:
        values = dict(values, force=tuple(values["force"]))
    return kind(**values)
