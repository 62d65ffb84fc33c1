"""Certificate verification along simulated trajectories.

A verification run re-simulates the closed loop and then audits, on the
recorded samples, everything the certificates promise: pointwise dissipation
against the comparison map (with an independent finite-difference cross-check
of the analytic derivatives), domination of the storage vector by the
comparison flow started from the same initial storage, the structural
comparison-matrix properties, and final convergence.  Reports carry enough
provenance (package version, seed, config hash) to reproduce a run bit for
bit; no timestamps, so identical runs produce identical reports.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _pkg_version
from .comparison import (ComparisonIntegrationFault, ComparisonMap,
                         check_domination, check_quasimonotone, is_metzler,
                         simulate_comparison, spectral_abscissa)
from .lyapunov import CheckReport, apply_comparison, eval_v, lie_derivative
from .sim import IntegrationFault, IntegratorConfig, integrate


def monitor_dissipation(traj, system, V, cmap, tol=1e-9, fd_fraction=0.01):
    """Check Vdot(x_k, u_k) <= (comparison o V)(x_k) at recorded samples.

    Samples outside the domain ball are skipped (the certificates say
    nothing there) but counted in the flags.  A small deterministic subset
    of samples additionally cross-checks the analytic derivative against a
    central difference of the recorded storage values, guarding against a
    wrong gradient implementation silently passing the main inequality.
    """
    lam_v = np.asarray([apply_comparison(cmap, eval_v(V, x))
                        for x in traj.states])
    lie = {}
    worst = -np.inf
    wit_idx = None
    skipped = 0
    rho = system.domain_radius
    for k, x in enumerate(traj.states):
        if float(np.linalg.norm(x)) > rho + 1e-12:
            skipped += 1
            continue
        u = traj.inputs[k] if traj.inputs.shape[1] else None
        lie[k] = lie_derivative(V, system, x, u)
        val = float(np.max(lie[k] - lam_v[k]))
        if val > worst:
            worst, wit_idx = val, k
    checked = len(lie)
    if checked == 0:
        return CheckReport(name="dissipation_monitor", passed=False,
                           worst_violation=np.inf, tolerance=tol, samples=0,
                           flags={"skipped_out_of_domain": skipped,
                                  "error": "no in-domain samples"})

    # finite-difference audit of the analytic derivatives on interior samples
    v_rec = (traj.lyapunov if traj.lyapunov is not None
             else np.asarray([eval_v(V, x) for x in traj.states]))
    interior = [k for k in lie if 0 < k < len(traj.times) - 1]
    stride = max(1, int(1.0 / max(fd_fraction, 1e-6)))
    fd_worst = 0.0
    fd_ok = True
    for k in interior[::stride]:
        span = traj.times[k + 1] - traj.times[k - 1]
        fd = (v_rec[k + 1] - v_rec[k - 1]) / span
        err = float(np.max(np.abs(fd - lie[k])))
        allow = 0.01 * (1.0 + float(np.max(np.abs(lie[k])))
                        + float(np.max(np.abs(fd))))
        fd_worst = max(fd_worst, err - allow)
        if err > allow:
            fd_ok = False
    rep = CheckReport.from_violation(
        name="dissipation_monitor", worst=worst, tolerance=tol,
        samples=checked, witness_state=traj.states[wit_idx],
        flags={"skipped_out_of_domain": skipped,
               "witness_time": float(traj.times[wit_idx]),
               "fd_consistent": fd_ok,
               "fd_worst_excess": fd_worst})
    rep.passed = rep.passed and fd_ok
    return rep


def _comparison_structure_checks(cmap, width, seed=0):
    """Metzler/Hurwitz for linear maps; sampled quasimonotonicity plus an
    empirical decay run otherwise."""
    if isinstance(cmap, ComparisonMap) and not cmap.is_linear:
        qm = check_quasimonotone(cmap, dim=width, seed=seed)
        qm.name = "comparison_quasimonotone"
        try:
            ztr = simulate_comparison(cmap, np.ones(width), T=20.0, dt=1e-3)
            tail = float(np.linalg.norm(ztr.states[-1]))
            sat = ztr.saturated
        except ComparisonIntegrationFault:
            tail, sat = np.inf, True
        decay = CheckReport.from_violation(
            name="comparison_decay", worst=tail - 1e-3, tolerance=0.0,
            samples=1, flags={"empirical": True, "saturated": sat})
        return [qm, decay]
    M = cmap.matrix if isinstance(cmap, ComparisonMap) else np.asarray(cmap)
    off = M[~np.eye(M.shape[0], dtype=bool)]
    metzler = CheckReport.from_violation(
        name="comparison_metzler", worst=float(-off.min()) if off.size else 0.0,
        tolerance=0.0, samples=1, flags={"is_metzler": is_metzler(M)})
    alpha = spectral_abscissa(M)
    hurwitz = CheckReport.from_violation(
        name="comparison_hurwitz", worst=alpha, tolerance=-1e-9, samples=1,
        flags={"spectral_abscissa": alpha})
    return [metzler, hurwitz]


@dataclass
class VerificationReport:
    scenario: str
    checks: list
    overall: bool
    provenance: dict = field(default_factory=dict)
    trajectory: object = None       # the audited run; not serialized
    comparison_run: object = None   # the comparison flow; not serialized

    def to_dict(self):
        return {"scenario": self.scenario, "overall": self.overall,
                "provenance": dict(self.provenance),
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def summary_text(self):
        lines = [f"scenario: {self.scenario}"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"  {c.name}: {status} "
                         f"(worst={c.worst_violation:.6g}, tol={c.tolerance:.6g},"
                         f" samples={c.samples})")
        lines.append(f"overall: {'PASS' if self.overall else 'FAIL'}")
        return "\n".join(lines)


def _config_hash(payload):
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def verify_closed_loop(scenario, controller=None, x0=None, cfg=None,
                       domination_tol=1e-6, dissipation_tol=1e-9, seed=0):
    """Run the closed loop and audit every trajectory-level certificate.

    Integration faults do not abort verification: the affected checks are
    reported failed with the fault reason and the structural checks still
    run.  overall is the conjunction of all individual checks.
    """
    controller = controller if controller is not None else scenario.default_controller
    x0 = (np.asarray(x0, dtype=float) if x0 is not None
          else scenario.default_initial_state)
    cfg = cfg or IntegratorConfig(T=scenario.default_horizon[0],
                                  dt=scenario.default_horizon[1])
    V = scenario.lyapunov
    checks = []

    fault = None
    try:
        traj = integrate(scenario.system, controller, x0, cfg, lyapunov=V)
    except IntegrationFault as exc:
        traj, fault = exc.partial, exc.reason

    if fault is None:
        final = float(np.linalg.norm(traj.states[-1]))
        checks.append(CheckReport.from_violation(
            name="convergence", worst=final - scenario.convergence_threshold,
            tolerance=0.0, samples=len(traj.times),
            flags={"final_norm": final,
                   "threshold": scenario.convergence_threshold}))
    else:
        checks.append(CheckReport(
            name="convergence", passed=False, worst_violation=np.inf,
            tolerance=0.0, samples=len(traj.times) if traj is not None else 0,
            flags={"fault": fault}))

    ztr = None
    if traj is not None and len(traj.times) > 2:
        checks.append(monitor_dissipation(traj, scenario.system, V,
                                          scenario.comparison,
                                          tol=dissipation_tol))
        z0 = eval_v(V, x0)
        try:
            ztr = simulate_comparison(scenario.comparison, z0,
                                      T=float(traj.times[-1]), dt=cfg.dt)
            dom = check_domination(traj.times, traj.lyapunov, ztr,
                                   tol=domination_tol)
        except ComparisonIntegrationFault as exc:
            dom = CheckReport(name="domination", passed=False,
                              worst_violation=np.inf, tolerance=domination_tol,
                              samples=0, flags={"fault": exc.reason})
        checks.append(dom)

    checks.extend(_comparison_structure_checks(scenario.comparison,
                                               V.total_width, seed=seed))

    overall = all(c.passed for c in checks)
    provenance = {
        "version": _pkg_version,
        "seed": int(seed),
        "config_hash": _config_hash({
            "scenario": scenario.name,
            "parameters": scenario.parameters,
            "x0": [float(v) for v in x0],
            "T": cfg.T, "dt": cfg.dt, "method": cfg.method,
            "domination_tol": domination_tol,
            "dissipation_tol": dissipation_tol,
        }),
    }
    return VerificationReport(scenario=scenario.name, checks=checks,
                              overall=overall, provenance=provenance,
                              trajectory=traj, comparison_run=ztr)
