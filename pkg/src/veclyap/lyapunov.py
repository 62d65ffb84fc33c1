"""Vector Lyapunov functions, Lie derivatives, and sampled condition checks.

The checks here are falsifiers, not proofs: a pass means "no violation found
on the sampled set", a fail comes with a concrete witness state.  Strict
inequalities are tested as lhs - rhs <= -tolerance because strictness at
measure-zero margins is not machine-checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import eval_output
from .sampling import ball_points, interval_points

_ORIGIN_EXCLUSION = 1e-12


@dataclass(frozen=True)
class StorageFunction:
    """One subsystem's storage: value x_i -> (width,) and its gradient rows.

    width > 1 means a vector storage function for a single subsystem (the
    coupled-oscillator scenario uses width 2); grad returns the (width, dim)
    Jacobian in that case.
    """

    dim: int
    width: int
    value: Callable
    grad: Callable

    def eval_value(self, xi):
        v = np.atleast_1d(np.asarray(self.value(xi), dtype=float))
        if v.shape != (self.width,):
            raise ValueError(f"storage value has shape {v.shape}, "
                             f"expected ({self.width},)")
        return v

    def eval_grad(self, xi):
        g = np.asarray(self.grad(xi), dtype=float)
        g = g.reshape(self.width, self.dim)
        return g


@dataclass(frozen=True)
class VectorLyapunov:
    """Per-subsystem storage functions stacked into one vector V(x)."""

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def total_width(self):
        return sum(c.width for c in self.components)

    def state_slices(self):
        out, k = [], 0
        for c in self.components:
            out.append(slice(k, k + c.dim))
            k += c.dim
        return tuple(out)

    def value_slices(self):
        out, k = [], 0
        for c in self.components:
            out.append(slice(k, k + c.width))
            k += c.width
        return tuple(out)

    @property
    def n(self):
        return sum(c.dim for c in self.components)


def eval_v(V, x):
    """Stacked storage vector (V_1(x_1), ..., V_N(x_N))."""
    x = np.asarray(x, dtype=float)
    if x.shape != (V.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({V.n},)")
    return np.concatenate([c.eval_value(x[s])
                           for c, s in zip(V.components, V.state_slices())])


def lie_derivative(V, system, x, u=None):
    """Componentwise grad V_i(x_i) . (f_i(x) + g_i(x) u_i)."""
    part = system.partition
    if tuple(c.dim for c in V.components) != part.subsystem_dims:
        raise ValueError("storage functions do not match the system partition")
    x = np.asarray(x, dtype=float)
    if x.shape != (part.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({part.n},)")
    dx = np.asarray(system.drift(x), dtype=float)
    if part.m > 0 and u is not None and np.size(u) > 0:
        u = np.asarray(u, dtype=float)
        if u.shape != (part.m,):
            raise ValueError(f"input has shape {u.shape}, expected ({part.m},)")
        dx = dx + system.input_map(x) @ u
    return np.concatenate([c.eval_grad(x[s]) @ dx[s]
                           for c, s in zip(V.components, V.state_slices())])


def gradient_consistency(V, points, h=1e-6):
    """Worst relative error of analytic gradients vs central differences."""
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        for comp, s in zip(V.components, V.state_slices()):
            xi = x[s]
            g = comp.eval_grad(xi)
            fd = np.empty_like(g)
            for j in range(comp.dim):
                step = np.zeros(comp.dim)
                step[j] = h
                fd[:, j] = (comp.eval_value(xi + step)
                            - comp.eval_value(xi - step)) / (2.0 * h)
            scale = np.maximum(np.abs(g), 1.0)
            worst = max(worst, float(np.max(np.abs(fd - g) / scale)))
    return worst


# --- sampled OCVLF checks ----------------------------------------------------

@dataclass(frozen=True)
class OcvlfCheckConfig:
    output_samples: int = 32
    fiber_samples: int = 96
    control_radius: float = 64.0
    control_resolution: int = 65
    tolerance: float = 1e-9
    radius: Optional[float] = None   # None -> the system's domain radius
    seed: int = 0

    def __post_init__(self):
        if self.output_samples < 1 or self.fiber_samples < 1 \
                or self.control_resolution < 1:
            raise ValueError("sample counts must be >= 1")
        if self.control_radius <= 0.0:
            raise ValueError("control box radius must be positive")
        if self.tolerance < 0.0:
            raise ValueError("tolerance must be nonnegative")


@dataclass
class CheckReport:
    """Outcome of one sampled check.

    worst_violation is max(lhs - rhs) over the samples, so negative values
    mean the inequality held with margin.  The pass rule is uniformly
    worst_violation <= tolerance; strict checks store a negative tolerance.
    """

    name: str
    passed: bool
    worst_violation: float
    tolerance: float
    samples: int
    witness_state: Optional[np.ndarray] = None
    witness_output: Optional[np.ndarray] = None
    witness_control: Optional[np.ndarray] = None
    flags: dict = field(default_factory=dict)

    @classmethod
    def from_violation(cls, name, worst, tolerance, samples, **kw):
        return cls(name=name, passed=bool(worst <= tolerance),
                   worst_violation=float(worst), tolerance=float(tolerance),
                   samples=int(samples), **kw)

    def to_dict(self):
        def arr(a):
            return None if a is None else [float(v) for v in np.atleast_1d(a)]
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "witness_state": arr(self.witness_state),
            "witness_output": arr(self.witness_output),
            "witness_control": arr(self.witness_control),
            "flags": {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v)
                      for k, v in self.flags.items()},
        }


def apply_comparison(cmap, v):
    """Evaluate a comparison map given as ComparisonMap, matrix, or callable."""
    if callable(cmap):
        return np.asarray(cmap(v), dtype=float)
    return np.asarray(cmap, dtype=float) @ v


def _fiber_states(system, sub, y, unit_free, radius):
    """States in the radius ball whose subsystem output equals y.

    Outputs of the built-in scenarios are coordinate projections, so the
    fiber is the affine slice {output coordinate = y} intersected with the
    ball: free coordinates live in a ball of radius sqrt(radius^2 - y^2).
    """
    part = system.partition
    if system.output_coords is None:
        raise ValueError("fiber sampling needs coordinate outputs "
                         "(system.output_coords is not set)")
    offset = sum(part.subsystem_dims[:sub])
    coord = offset + system.output_coords[sub]
    free_r2 = radius * radius - y * y
    if free_r2 < 0.0:
        return None
    free = unit_free * math.sqrt(free_r2)
    states = np.empty((free.shape[0], part.n))
    keep = [j for j in range(part.n) if j != coord]
    states[:, keep] = free
    states[:, coord] = y
    return states


def _golden_min(envelope, lo, hi, iters=60):
    """Golden-section minimum of a unimodal scalar function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = envelope(c), envelope(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = envelope(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = envelope(d)
    u = c if fc < fd else d
    return u, min(fc, fd)


def _best_control(a_coeff, b_coeff, grid):
    """Minimize max_j (a_j + b_j u) over u; exact up to grid + refinement.

    The envelope is convex piecewise-linear in a scalar u, so a coarse grid
    plus golden-section refinement around the best bracket is reliable.
    """
    a = a_coeff.ravel()
    if b_coeff is None:      # uncontrolled subsystem: nothing to search
        j = int(np.argmax(a))
        return None, float(a[j]), j
    b = b_coeff.ravel()
    vals = np.max(a[:, None] + b[:, None] * grid[None, :], axis=0)
    kbest = int(np.argmin(vals))
    lo = grid[max(kbest - 1, 0)]
    hi = grid[min(kbest + 1, len(grid) - 1)]

    def envelope(u):
        return float(np.max(a + b * u))

    u, val = _golden_min(envelope, lo, hi)
    if vals[kbest] < val:
        u, val = float(grid[kbest]), float(vals[kbest])
    j = int(np.argmax(a + b * u))
    return float(u), val, j


def _subsystem_coeffs(V, system, states, sub, vslice):
    """Affine-in-u pieces of (Lie derivative - comparison bound) per state.

    Returns a (points, width) array for the drift part and, when the
    subsystem has one input, a (points, width) array of input coefficients.
    """
    part = system.partition
    m_i = part.input_dims[sub]
    in_slice = part.input_slices()[sub]
    a_rows, b_rows = [], []
    for x in states:
        a_rows.append(lie_derivative(V, system, x)[vslice])
        if m_i == 1:
            u = np.zeros(part.m)
            u[in_slice] = 1.0
            b_rows.append(lie_derivative(V, system, x, u)[vslice] - a_rows[-1])
    a = np.asarray(a_rows)
    b = np.asarray(b_rows) if m_i == 1 else None
    return a, b


def check_ocvlf(V, cmap, system, cfg=None):
    """Sampled falsifier for the output-feedback vector Lyapunov conditions.

    Per subsystem and sampled nonzero output y: search for one control that
    makes the Lie derivative sit strictly under the comparison bound on the
    whole sampled fiber at once.  On the zero-output fiber the drift alone
    must satisfy the bound (origin excluded).  Returns one report per
    subsystem; passes are evidence, failures carry a witness.
    """
    cfg = cfg or OcvlfCheckConfig()
    part = system.partition
    radius = cfg.radius if cfg.radius is not None else system.domain_radius
    grid = np.linspace(-cfg.control_radius, cfg.control_radius,
                       cfg.control_resolution)
    vslices = V.value_slices()
    reports = []
    for i in range(part.count):
        if part.input_dims[i] > 1:
            raise NotImplementedError("control search supports scalar inputs")
        unit_free = ball_points(part.n - 1, cfg.fiber_samples, 1.0,
                                cfg.seed + 101 * i + 1)
        worst = -math.inf
        witness = (None, None, None)
        n_samples = 0
        empty_fibers = 0
        worst_ii = -math.inf
        worst_iii = -math.inf

        # condition on nonzero-output fibers: one u per fiber
        ys = interval_points(cfg.output_samples, -radius, radius,
                             cfg.seed + 101 * i + 2)
        for y in ys:
            states = _fiber_states(system, i, float(y), unit_free, radius)
            if states is None or states.shape[0] == 0:
                empty_fibers += 1
                continue
            bounds = np.array([apply_comparison(cmap, eval_v(V, x))[vslices[i]]
                               for x in states])
            a, b = _subsystem_coeffs(V, system, states, i, vslices[i])
            a = a - bounds
            u, val, jflat = _best_control(a, b, grid)
            n_samples += states.shape[0]
            worst_ii = max(worst_ii, val)
            if val > worst:
                worst = val
                jpt = jflat // V.components[i].width
                witness = (states[jpt],
                           np.atleast_1d(np.asarray(y, dtype=float)),
                           None if u is None else np.atleast_1d(u))

        # zero-output fiber: drift only, origin excluded
        states = _fiber_states(system, i, 0.0, unit_free, radius)
        keep = np.linalg.norm(states, axis=1) >= _ORIGIN_EXCLUSION
        states = states[keep]
        for x in states:
            val = float(np.max(lie_derivative(V, system, x)[vslices[i]]
                               - apply_comparison(cmap, eval_v(V, x))[vslices[i]]))
            n_samples += 1
            worst_iii = max(worst_iii, val)
            if val > worst:
                worst = val
                witness = (x, np.zeros(1), None)

        reports.append(CheckReport.from_violation(
            name=f"ocvlf_subsystem_{i + 1}",
            worst=worst, tolerance=-cfg.tolerance, samples=n_samples,
            witness_state=witness[0], witness_output=witness[1],
            witness_control=witness[2],
            flags={"empty_fibers": empty_fibers,
                   "worst_nonzero_fiber": worst_ii,
                   "worst_zero_fiber": worst_iii,
                   "radius": radius}))
    return reports


def check_small_control(V, cmap, system, mu, cfg=None):
    """Like check_ocvlf, but controls are confined to the ball |u| < mu(y).

    mu is one callable (shared) or a per-subsystem sequence of callables,
    each continuous positive definite; spot-checked at 0 and a few points.
    Zero-output fibers are skipped: the property quantifies over nonzero
    outputs only.
    """
    cfg = cfg or OcvlfCheckConfig()
    part = system.partition
    radius = cfg.radius if cfg.radius is not None else system.domain_radius
    mus = list(mu) if isinstance(mu, (list, tuple)) else [mu] * part.count
    if len(mus) != part.count:
        raise ValueError("one control bound per subsystem required")
    for m_fn in mus:
        if abs(float(m_fn(0.0))) != 0.0:
            raise ValueError("control bound must vanish at zero output")
        if any(float(m_fn(y)) <= 0.0 for y in (0.5, -0.5, 1.0)):
            raise ValueError("control bound must be positive away from zero")
    vslices = V.value_slices()
    reports = []
    for i in range(part.count):
        if part.input_dims[i] > 1:
            raise NotImplementedError("control search supports scalar inputs")
        unit_free = ball_points(part.n - 1, cfg.fiber_samples, 1.0,
                                cfg.seed + 211 * i + 1)
        ys = interval_points(cfg.output_samples, -radius, radius,
                             cfg.seed + 211 * i + 2)
        worst = -math.inf
        witness = (None, None, None)
        n_samples = 0
        empty_fibers = 0
        for y in ys:
            states = _fiber_states(system, i, float(y), unit_free, radius)
            if states is None or states.shape[0] == 0:
                empty_fibers += 1
                continue
            bounds = np.array([apply_comparison(cmap, eval_v(V, x))[vslices[i]]
                               for x in states])
            a, b = _subsystem_coeffs(V, system, states, i, vslices[i])
            a = a - bounds
            if b is None:
                grid = None
                u, val, jflat = _best_control(a, None, None)
            else:
                cap = float(mus[i](float(y))) * (1.0 - 1e-12)
                grid = np.linspace(-cap, cap, cfg.control_resolution)
                u, val, jflat = _best_control(a, b, grid)
            n_samples += states.shape[0]
            if val > worst:
                worst = val
                jpt = jflat // V.components[i].width
                witness = (states[jpt],
                           np.atleast_1d(np.asarray(y, dtype=float)),
                           None if u is None else np.atleast_1d(u))
        reports.append(CheckReport.from_violation(
            name=f"small_control_subsystem_{i + 1}",
            worst=worst, tolerance=-cfg.tolerance, samples=n_samples,
            witness_state=witness[0], witness_output=witness[1],
            witness_control=witness[2],
            flags={"empty_fibers": empty_fibers, "radius": radius}))
    return reports
