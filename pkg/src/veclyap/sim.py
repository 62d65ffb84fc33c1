"""Closed-loop simulation with fixed-step RK4 and adaptive Cash-Karp RK45.

Controllers are static output feedback, so the closed loop is an ordinary
autonomous vector field: every integrator stage re-evaluates the controller
on the stage output.  Trajectories record state, applied input, output, and
(optionally) the storage vector at every accepted step and can be written to
CSV or resampled onto a uniform grid.
"""

from __future__ import annotations

import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import eval_dynamics, eval_output
from .lyapunov import eval_v

# Cash-Karp embedded pair (5th order propagation, 4th order error estimate)
_CK_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0),
    (-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0),
    (1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0,
     44275.0 / 110592.0, 253.0 / 4096.0),
)
_CK_B5 = np.array([37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0,
                   0.0, 512.0 / 1771.0])
_CK_B4 = np.array([2825.0 / 27648.0, 0.0, 18575.0 / 48384.0,
                   13525.0 / 55296.0, 277.0 / 14336.0, 1.0 / 4.0])


class IntegrationFault(RuntimeError):
    """Simulation aborted; .partial holds the trajectory up to the fault."""

    def __init__(self, reason, time=None, state=None, partial=None):
        super().__init__(reason)
        self.reason = reason
        self.time = time
        self.state = state
        self.partial = partial


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration settings; dt is the fixed RK4 step and the RK45 output cap."""

    T: float
    dt: float = 1e-3
    method: str = "rk4"
    rtol: float = 1e-8
    atol: float = 1e-10
    dt_min: float = 1e-10
    dt_max: Optional[float] = None
    guard_factor: Optional[float] = 10.0

    def __post_init__(self):
        if self.T <= 0.0 or self.dt <= 0.0:
            raise ValueError("horizon and step must be positive")
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.guard_factor is not None and self.guard_factor <= 1.0:
            raise ValueError("guard factor must exceed 1 (or be None)")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    lyapunov: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    @property
    def final_state(self):
        return self.states[-1]

    def state_norms(self):
        return np.linalg.norm(self.states, axis=1)

    def resample(self, grid):
        """Linear interpolation onto a new time grid (for CSV uniformity)."""
        grid = np.asarray(grid, dtype=float)
        if grid[0] < self.times[0] - 1e-12 or grid[-1] > self.times[-1] + 1e-12:
            raise ValueError("resample grid exceeds the recorded span")

        def interp(block):
            return np.column_stack([np.interp(grid, self.times, block[:, j])
                                    for j in range(block.shape[1])])

        return Trajectory(
            times=grid, states=interp(self.states),
            inputs=interp(self.inputs) if self.inputs.shape[1] else
            np.zeros((len(grid), 0)),
            outputs=interp(self.outputs),
            lyapunov=None if self.lyapunov is None else interp(self.lyapunov),
            metadata={**self.metadata, "resampled": True})

    def write_csv(self, path):
        """Write t,x*,u*,y*,V* columns; atomic replace so readers never see
        a half-written file."""
        n = self.states.shape[1]
        m = self.inputs.shape[1]
        l = self.outputs.shape[1]
        cols = ["t"]
        cols += [f"x{i + 1}" for i in range(n)]
        cols += [f"u{i + 1}" for i in range(m)]
        cols += [f"y{i + 1}" for i in range(l)]
        blocks = [self.times[:, None], self.states, self.inputs, self.outputs]
        if self.lyapunov is not None:
            cols += [f"V{i + 1}" for i in range(self.lyapunov.shape[1])]
            blocks.append(self.lyapunov)
        table = np.hstack(blocks)
        out_dir = os.path.dirname(os.path.abspath(path)) or "."
        fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".csv.part")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(",".join(cols) + "\n")
                for row in table:
                    fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _closed_loop_rhs(system, controller):
    if controller is None or system.partition.m == 0:
        return lambda x: eval_dynamics(system, x)

    def rhs(x):
        u = controller(eval_output(system, x))
        return eval_dynamics(system, x, u)

    return rhs


def _guard_radius(system, cfg):
    if cfg.guard_factor is None:
        return None
    return cfg.guard_factor * system.domain_radius


def _record(system, controller, lyap, t, x, rows):
    y = eval_output(system, x)
    u = (controller(y) if controller is not None and system.partition.m
         else np.zeros(system.partition.m))
    rows["t"].append(t)
    rows["x"].append(x.copy())
    rows["u"].append(np.atleast_1d(u))
    rows["y"].append(y)
    if lyap is not None:
        rows["v"].append(eval_v(lyap, x))


def _finish(rows, lyap, metadata):
    return Trajectory(
        times=np.asarray(rows["t"], dtype=float), states=np.asarray(rows["x"]),
        inputs=np.asarray(rows["u"]), outputs=np.asarray(rows["y"]),
        lyapunov=None if lyap is None else np.asarray(rows["v"]),
        metadata=metadata)


def _check_state(x, t, guard, rows, lyap, metadata):
    if not np.all(np.isfinite(x)):
        partial = _finish(rows, lyap, {**metadata, "fault": "non-finite"})
        raise IntegrationFault("state became non-finite", time=t, state=x,
                               partial=partial)
    if guard is not None and float(np.linalg.norm(x)) > guard:
        partial = _finish(rows, lyap, {**metadata, "fault": "guard"})
        raise IntegrationFault(
            f"state norm exceeded the divergence guard ({guard:.6g}) at t={t:.6g}",
            time=t, state=x, partial=partial)


def integrate(system, controller, x0, cfg, lyapunov=None):
    """Simulate the closed loop from x0 over cfg.T.

    Starting outside the certificate ball is allowed (the certificates then
    say nothing) and only warned about; crossing guard_factor times the
    domain radius raises IntegrationFault with the partial trajectory
    attached.
    """
    x0 = np.asarray(x0, dtype=float)
    part = system.partition
    if x0.shape != (part.n,):
        raise ValueError(f"initial state has shape {x0.shape}, expected ({part.n},)")
    if float(np.linalg.norm(x0)) > system.domain_radius + 1e-12:
        warnings.warn("initial state lies outside the certified domain ball",
                      stacklevel=2)
    rhs = _closed_loop_rhs(system, controller)
    guard = _guard_radius(system, cfg)
    rows = {"t": [], "x": [], "u": [], "y": [], "v": []}
    lyap = lyapunov
    meta = {"method": cfg.method, "T": cfg.T, "dt": cfg.dt,
            "guard_factor": cfg.guard_factor,
            "domain_radius": system.domain_radius}

    if cfg.method == "rk4":
        steps = int(round(cfg.T / cfg.dt))
        if abs(steps * cfg.dt - cfg.T) > 1e-9 * max(1.0, cfg.T):
            raise ValueError("T must be an integer multiple of dt for rk4")
        x = x0.copy()
        _record(system, controller, lyap, 0.0, x, rows)
        h = cfg.dt
        for k in range(steps):
            k1 = rhs(x)
            k2 = rhs(x + 0.5 * h * k1)
            k3 = rhs(x + 0.5 * h * k2)
            k4 = rhs(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = (k + 1) * h
            _check_state(x, t, guard, rows, lyap, meta)
            _record(system, controller, lyap, t, x, rows)
        meta["accepted"] = steps
        meta["rejected"] = 0
        return _finish(rows, lyap, meta)

    # adaptive Cash-Karp
    dt_max = cfg.dt_max if cfg.dt_max is not None else cfg.T / 10.0
    t, x = 0.0, x0.copy()
    h = min(cfg.dt, dt_max, cfg.T)
    accepted = rejected = 0
    _record(system, controller, lyap, t, x, rows)
    stages = [None] * 6
    while t < cfg.T - 1e-14:
        h = min(h, cfg.T - t)
        stages[0] = rhs(x)
        for s in range(1, 6):
            xs = x + h * sum(a * ks for a, ks in zip(_CK_A[s], stages[:s]))
            stages[s] = rhs(xs)
        x5 = x + h * sum(b * ks for b, ks in zip(_CK_B5, stages))
        x4 = x + h * sum(b * ks for b, ks in zip(_CK_B4, stages))
        err = x5 - x4
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x5))
        ratio = float(np.max(np.abs(err) / scale))
        if not math.isfinite(ratio):
            _check_state(x5, t + h, guard, rows, lyap, meta)  # raises or...
            ratio = math.inf
        if ratio <= 1.0:
            t += h
            x = x5
            accepted += 1
            _check_state(x, t, guard, rows, lyap, meta)
            _record(system, controller, lyap, t, x, rows)
        else:
            rejected += 1
        factor = 0.9 * (ratio ** -0.2 if ratio > 0.0 else 5.0)
        h *= min(5.0, max(0.2, factor))
        h = min(h, dt_max)
        if h < cfg.dt_min:
            partial = _finish(rows, lyap, {**meta, "fault": "dt_min"})
            raise IntegrationFault(
                f"step size collapsed below {cfg.dt_min:g} at t={t:.6g}",
                time=t, state=x, partial=partial)
    meta["accepted"] = accepted
    meta["rejected"] = rejected
    return _finish(rows, lyap, meta)


def settling_time(traj, threshold):
    """Smallest recorded time after which the state norm stays <= threshold.

    Returns None when the trajectory never settles, 0.0 when it already
    starts (and stays) inside the threshold.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    norms = traj.state_norms()
    above = np.nonzero(norms > threshold)[0]
    if len(above) == 0:
        return 0.0
    last = int(above[-1])
    if last == len(norms) - 1:
        return None
    return float(traj.times[last + 1])


@dataclass
class BatchRun:
    initial_state: np.ndarray
    final_norm: Optional[float]
    settled_at: Optional[float]
    fault: Optional[str]
    trajectory: Trajectory


def batch_run(scenario, initial_states, cfg=None, controller=None,
              settle_threshold=None):
    """Simulate many initial conditions; faults are recorded, not raised.

    Returns (runs, summary) where summary aggregates convergence counts and
    the worst final norm over the non-faulted runs.
    """
    initial_states = [np.asarray(x0, dtype=float) for x0 in initial_states]
    if not initial_states:
        raise ValueError("batch_run needs at least one initial state")
    cfg = cfg or IntegratorConfig(T=scenario.default_horizon[0],
                                  dt=scenario.default_horizon[1])
    controller = controller or scenario.default_controller
    thr = (settle_threshold if settle_threshold is not None
           else scenario.convergence_threshold)
    runs = []
    for x0 in initial_states:
        try:
            traj = integrate(scenario.system, controller, x0, cfg,
                             lyapunov=scenario.lyapunov)
            fault = None
        except IntegrationFault as exc:
            traj, fault = exc.partial, exc.reason
        final = (float(np.linalg.norm(traj.states[-1]))
                 if fault is None else None)
        settled = settling_time(traj, thr) if fault is None else None
        runs.append(BatchRun(initial_state=x0, final_norm=final,
                             settled_at=settled, fault=fault, trajectory=traj))
    finals = [r.final_norm for r in runs if r.final_norm is not None]
    summary = {
        "count": len(runs),
        "faulted": sum(1 for r in runs if r.fault is not None),
        "converged": sum(1 for r in runs
                         if r.final_norm is not None and r.final_norm <= thr),
        "threshold": thr,
        "max_final_norm": max(finals) if finals else None,
    }
    return runs, summary
