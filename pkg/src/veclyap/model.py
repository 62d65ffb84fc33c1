"""Composite interconnected control-affine plants and the scenario registry.

A composite system is  x' = f(x) + g(x) u  with per-subsystem outputs
y_i = h_i(x_i).  The drift blocks f_i may read the whole state (that is the
interconnection), the input map g is block diagonal, and each output map is
local to its own subsystem, so decentralized feedback only ever sees y_i.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - annotations only, avoids import cycles
    from .comparison import ComparisonMap
    from .lyapunov import VectorLyapunov
    from .synthesis import DecentralizedController, DerivedConstants, SynthesisData


class ScenarioError(ValueError):
    """Unknown scenario, bad override, or invalid parameter value."""


def _as_dims(dims, low, what):
    dims = tuple(int(d) for d in dims)
    if any(d < low for d in dims):
        raise ScenarioError(f"{what} must all be >= {low}, got {dims}")
    return dims


@dataclass(frozen=True)
class StatePartition:
    """How the stacked state/input/output vectors split across subsystems."""

    subsystem_dims: tuple
    input_dims: tuple
    output_dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "subsystem_dims",
                           _as_dims(self.subsystem_dims, 1, "subsystem dims"))
        object.__setattr__(self, "input_dims",
                           _as_dims(self.input_dims, 0, "input dims"))
        object.__setattr__(self, "output_dims",
                           _as_dims(self.output_dims, 1, "output dims"))
        sizes = {len(self.subsystem_dims), len(self.input_dims), len(self.output_dims)}
        if len(sizes) != 1:
            raise ScenarioError("partition lists must share one length per subsystem")

    @property
    def count(self):
        return len(self.subsystem_dims)

    @property
    def n(self):
        return sum(self.subsystem_dims)

    @property
    def m(self):
        return sum(self.input_dims)

    @property
    def l(self):
        return sum(self.output_dims)

    @staticmethod
    def _slices(dims):
        out, k = [], 0
        for d in dims:
            out.append(slice(k, k + d))
            k += d
        return tuple(out)

    def state_slices(self):
        return self._slices(self.subsystem_dims)

    def input_slices(self):
        return self._slices(self.input_dims)

    def output_slices(self):
        return self._slices(self.output_dims)


@dataclass(frozen=True)
class CompositeSystem:
    """Interconnected control-affine plant x' = f(x) + g(x) u, y_i = h_i(x_i).

    drift        : (n,) -> (n,) full-state drift f
    input_map    : (n,) -> (n, m) block-diagonal gain g (m may be 0)
    output_maps  : per-subsystem callables x_i -> y_i
    domain_radius: radius of the ball on which the certificates are claimed
    output_coords: per-subsystem local index of the measured coordinate when
                   h_i is a coordinate projection (used by fiber samplers);
                   None when outputs are not single coordinates
    """

    partition: StatePartition
    drift: Callable
    input_map: Callable
    output_maps: tuple
    domain_radius: float
    output_coords: Optional[tuple] = None

    def __post_init__(self):
        if self.domain_radius <= 0.0:
            raise ScenarioError("domain radius must be positive")
        if len(self.output_maps) != self.partition.count:
            raise ScenarioError("one output map per subsystem required")
        if self.output_coords is not None and \
                len(self.output_coords) != self.partition.count:
            raise ScenarioError("one output coordinate per subsystem required")


def eval_dynamics(system, x, u=None):
    """Evaluate f(x) + g(x) u for stacked state x and stacked input u."""
    x = np.asarray(x, dtype=float)
    part = system.partition
    if x.shape != (part.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({part.n},)")
    dx = np.asarray(system.drift(x), dtype=float)
    if part.m == 0:
        if u is not None and np.size(u) != 0:
            raise ValueError("system has no inputs but u was given")
        return dx
    if u is None:
        u = np.zeros(part.m)
    u = np.asarray(u, dtype=float)
    if u.shape != (part.m,):
        raise ValueError(f"input has shape {u.shape}, expected ({part.m},)")
    return dx + system.input_map(x) @ u


def eval_output(system, x):
    """Concatenate the per-subsystem outputs h_i(x_i)."""
    x = np.asarray(x, dtype=float)
    part = system.partition
    if x.shape != (part.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({part.n},)")
    blocks = [np.atleast_1d(np.asarray(h(x[s]), dtype=float))
              for h, s in zip(system.output_maps, part.state_slices())]
    return np.concatenate(blocks)


@dataclass(frozen=True)
class Scenario:
    """A fully wired plant: system, storage functions, comparison map, defaults.

    Immutable after construction; safe to share across concurrent runs.
    """

    name: str
    system: CompositeSystem
    lyapunov: "VectorLyapunov"
    comparison: "ComparisonMap"
    synthesis_data: Optional["SynthesisData"]
    default_controller: Optional["DecentralizedController"]
    default_initial_state: np.ndarray
    default_horizon: tuple  # (T, dt)
    parameters: dict = field(default_factory=dict)
    convergence_threshold: float = 1e-3
    check_radius: Optional[float] = None
    derived: Optional["DerivedConstants"] = None

    def __post_init__(self):
        x0 = np.asarray(self.default_initial_state, dtype=float)
        object.__setattr__(self, "default_initial_state", x0)
        if x0.shape != (self.system.partition.n,):
            raise ScenarioError("default initial state has the wrong dimension")
        if np.linalg.norm(x0) > self.system.domain_radius + 1e-12:
            raise ScenarioError("default initial state lies outside the domain ball")
        T, dt = self.default_horizon
        if T <= 0.0 or dt <= 0.0:
            raise ScenarioError("horizon and step must be positive")


# --- registry ---------------------------------------------------------------

_REGISTRY = {}
_BUILTINS_LOADED = False


def register_scenario(name, builder):
    """Register a builder  overrides-dict -> Scenario  under a name."""
    _REGISTRY[str(name)] = builder


def _load_builtins():
    global _BUILTINS_LOADED
    if not _BUILTINS_LOADED:
        from . import scenarios  # noqa: F401  (registers itself on import)
        _BUILTINS_LOADED = True


def scenario_names():
    _load_builtins()
    return sorted(_REGISTRY)


def build_scenario(name, overrides=None):
    """Build a registered scenario, applying scalar parameter overrides."""
    _load_builtins()
    if name not in _REGISTRY:
        raise ScenarioError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(_REGISTRY))}")
    return _REGISTRY[name](dict(overrides or {}))


def check_overrides(overrides, defaults, positive=()):
    """Validate override keys/values against a defaults map; return merged."""
    merged = dict(defaults)
    for key, val in overrides.items():
        if key not in defaults:
            raise ScenarioError(f"unknown override key {key!r}; "
                                f"declared parameters: {', '.join(sorted(defaults))}")
        merged[key] = float(val)
    for key in positive:
        if merged[key] <= 0.0:
            raise ScenarioError(f"parameter {key!r} must be positive, got {merged[key]}")
    return merged


def load_run_spec(path):
    """Read a JSON run spec: {name, base?, parameters, initial_state, horizon}.

    A spec with a "base" key names a registered scenario to derive from; the
    spec's own name then labels the variant (and can be registered with
    register_run_spec so it shows up in the scenario table).
    """
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if not isinstance(spec, dict):
        raise ScenarioError("run spec must be a JSON object")
    known = {"name", "base", "parameters", "initial_state", "horizon"}
    unknown = set(spec) - known
    if unknown:
        raise ScenarioError(f"unknown run spec keys: {sorted(unknown)}")
    return spec


def register_run_spec(spec):
    """Register the custom scenario described by a run spec with a base."""
    if "base" not in spec:
        raise ScenarioError("only run specs with a 'base' define a new scenario")
    if "name" not in spec:
        raise ScenarioError("a derived scenario needs its own name")
    if spec["name"] == spec["base"]:
        raise ScenarioError("a derived scenario cannot be its own base")
    frozen = dict(spec)

    def builder(overrides):
        merged = dict(frozen.get("parameters", {}))
        merged.update(overrides)
        return replace(apply_run_spec({**frozen, "parameters": merged}),
                       name=frozen["name"])

    register_scenario(frozen["name"], builder)
    return frozen["name"]


def apply_run_spec(spec, name=None):
    """Build the scenario named by a run spec and apply its state/horizon."""
    scen_name = spec.get("name", name)
    if scen_name is None and "base" not in spec:
        raise ScenarioError("run spec needs a scenario name")
    if name is not None and scen_name != name:
        raise ScenarioError(f"run spec names {scen_name!r} but {name!r} was requested")
    if "base" in spec:
        scen = build_scenario(spec["base"], spec.get("parameters", {}))
        if scen_name:
            scen = replace(scen, name=scen_name)
    else:
        scen = build_scenario(scen_name, spec.get("parameters", {}))
    updates = {}
    if "initial_state" in spec:
        updates["default_initial_state"] = np.asarray(spec["initial_state"], dtype=float)
    if "horizon" in spec:
        hz = spec["horizon"]
        T = float(hz.get("T", scen.default_horizon[0]))
        dt = float(hz.get("dt", scen.default_horizon[1]))
        updates["default_horizon"] = (T, dt)
    return replace(scen, **updates) if updates else scen
