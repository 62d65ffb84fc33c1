"""Command-line front-end: reproducible runs with file outputs.

Commands
--------
list-scenarios   table of registered scenarios (name, dims, defaults)
simulate         integrate a closed loop and write the trajectory CSV
synthesize       build a controller, audit its preconditions, dump provenance
check-matrix     print the comparison-matrix certificates
verify           full trajectory-level verification; JSON report + figures

Exit codes: 0 success, 1 verification/integration failure, 2 usage or
configuration errors.  The default sampling seed is 0, overridable by the
CVLF_SEED environment variable and then by an explicit --seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from .comparison import is_hurwitz, is_m_matrix_negation, is_metzler
from .lyapunov import OcvlfCheckConfig
from .model import (ScenarioError, apply_run_spec, build_scenario,
                    load_run_spec, register_run_spec, scenario_names)
from .sim import IntegrationFault, IntegratorConfig, integrate
from .synthesis import SigmaDesign, check_synthesis_conditions, make_controller
from .verify import verify_closed_loop

_SIGMA_CHOICES = ("zero", "sontag", "classic")


def _classic_sigma(y, p1t, p2):
    """Quartic variant sqrt(p1^2 + |p2|^4), the textbook universal formula."""
    n2 = float(np.dot(p2, p2))
    return math.sqrt(float(p1t) ** 2 + n2 * n2)


def _sigma_design(label):
    if label == "zero":
        return SigmaDesign.zero()
    if label == "sontag":
        return SigmaDesign.sontag_like()
    return SigmaDesign.custom(_classic_sigma)


def _resolve_seed(args):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    return int(os.environ.get("CVLF_SEED", "0"))


def _atomic_write_text(path, text):
    out_dir = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_scenario(args):
    """Build the scenario from --scenario/--config plus the --k gain flag."""
    spec = load_run_spec(args.config) if getattr(args, "config", None) else None
    name = getattr(args, "scenario", None)
    if spec is None and name is None:
        raise ScenarioError("either --scenario or --config is required")
    scen = apply_run_spec(spec, name=name) if spec is not None \
        else build_scenario(name)
    k = getattr(args, "k", None)
    if k is None:
        return scen
    gain_key = "k" if "k" in scen.parameters else "kappa"
    if spec is not None:
        params = dict(spec.get("parameters", {}))
        params[gain_key] = float(k)
        return apply_run_spec({**spec, "parameters": params}, name=name)
    return build_scenario(name, {gain_key: float(k)})


def _controller_for(scen, args, seed):
    """Default controller, or a re-synthesized one when --sigma is given."""
    label = getattr(args, "sigma", None)
    if label is None:
        return scen.default_controller, None
    if scen.synthesis_data is None:
        raise ScenarioError(
            f"scenario {scen.name!r} has a user-supplied control law; "
            f"--sigma only applies to scenarios with synthesis data")
    design = _sigma_design(label)
    ctrl = make_controller(scen.synthesis_data, design,
                           provenance={"scenario": scen.name, "seed": seed})
    return ctrl, design


def _integrator_config(scen, args):
    T = args.T if getattr(args, "T", None) is not None else scen.default_horizon[0]
    dt = args.dt if getattr(args, "dt", None) is not None else scen.default_horizon[1]
    return IntegratorConfig(T=float(T), dt=float(dt),
                            method=getattr(args, "method", "rk4") or "rk4")


def _cmd_list_scenarios(args):
    if getattr(args, "config", None):
        spec = load_run_spec(args.config)
        if "base" in spec:
            register_run_spec(spec)
    names = scenario_names()
    if not names:
        print("no scenarios registered")
        return 0
    rows = []
    for name in names:
        scen = build_scenario(name)
        part = scen.system.partition
        params = ", ".join(f"{k}={v:g}" for k, v in sorted(scen.parameters.items()))
        rows.append((name, part.n, part.m, part.l, params))
    w = max(len(r[0]) for r in rows)
    print(f"{'scenario':<{w}}  {'n':>3} {'m':>3} {'l':>3}  parameters")
    for name, n, m, l, params in rows:
        print(f"{name:<{w}}  {n:>3} {m:>3} {l:>3}  {params}")
    return 0


def _cmd_simulate(args):
    seed = _resolve_seed(args)
    scen = _load_scenario(args)
    ctrl, _ = _controller_for(scen, args, seed)
    cfg = _integrator_config(scen, args)
    try:
        traj = integrate(scen.system, ctrl, scen.default_initial_state, cfg,
                         lyapunov=scen.lyapunov)
    except IntegrationFault as exc:
        print(f"integration fault: {exc.reason}", file=sys.stderr)
        if exc.partial is not None and args.out:
            exc.partial.write_csv(args.out)
            print(f"partial trajectory written to {args.out}", file=sys.stderr)
        return 1
    if cfg.method == "rk45":
        # uniform grid for the CSV so downstream tools see a fixed schema
        grid = np.arange(0.0, cfg.T + 0.5 * cfg.dt, cfg.dt)
        out_traj = traj.resample(grid)
    else:
        out_traj = traj
    if args.out:
        out_traj.write_csv(args.out)
    final = float(np.linalg.norm(traj.states[-1]))
    print(f"scenario {scen.name}: {len(out_traj.times)} samples over T={cfg.T:g} "
          f"({cfg.method}), |x(T)| = {final:.6e}")
    if traj.metadata.get("rejected"):
        print(f"adaptive steps: {traj.metadata['accepted']} accepted, "
              f"{traj.metadata['rejected']} rejected")
    if args.out:
        print(f"trajectory written to {args.out}")
    if getattr(args, "plot", False):
        if not args.out:
            print("--plot needs --out to anchor the figure path", file=sys.stderr)
            return 2
        from . import plots
        base = os.path.splitext(args.out)[0]
        fig = plots.render_state_response(out_traj, base + "_states.png",
                                          title=scen.name)
        print(f"figure written to {fig}")
    return 0


def _cmd_synthesize(args):
    seed = _resolve_seed(args)
    scen = _load_scenario(args)
    if scen.synthesis_data is None:
        raise ScenarioError(f"scenario {scen.name!r} has no synthesis data")
    label = getattr(args, "sigma", None) or "zero"
    design = _sigma_design(label)
    ctrl = make_controller(scen.synthesis_data, design,
                           provenance={"scenario": scen.name, "seed": seed})
    cfg = OcvlfCheckConfig(seed=seed)
    checks = check_synthesis_conditions(scen.system, scen.lyapunov,
                                        scen.comparison, scen.synthesis_data,
                                        cfg)
    payload = {
        "scenario": scen.name,
        "controller": ctrl.provenance,
        "sigma": label,
        "parameters": scen.parameters,
        "checks": {name: rep.to_dict() for name, rep in checks.items()},
        "seed": seed,
    }
    if scen.derived is not None:
        payload["derived_constants"] = scen.derived.to_dict()
        payload["gain_bounds"] = [float(v) for v in
                                  np.atleast_1d(scen.derived.gain_bounds())]
    ok = all(rep.passed for rep in checks.values())
    payload["preconditions_pass"] = ok
    if args.out:
        _atomic_write_text(args.out, json.dumps(payload, indent=2, sort_keys=True))
        print(f"controller provenance written to {args.out}")
    for name, rep in sorted(checks.items()):
        status = "PASS" if rep.passed else "FAIL"
        print(f"  {name}: {status} (worst={rep.worst_violation:.6g}, "
              f"samples={rep.samples})")
    print(f"synthesis preconditions: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _cmd_check_matrix(args):
    scen = _load_scenario(args)
    cmap = scen.comparison
    if not cmap.is_linear:
        print("comparison map is not linear; matrix certificates do not apply",
              file=sys.stderr)
        return 2
    M = cmap.matrix
    metzler = is_metzler(M)
    mmat = is_m_matrix_negation(M)
    hurwitz = is_hurwitz(M)
    print(f"Metzler: {str(metzler).lower()}, "
          f"M-matrix(-Lambda): {str(mmat).lower()}, "
          f"Hurwitz: {str(hurwitz).lower()}")
    return 0 if (metzler and mmat and hurwitz) else 1


def _cmd_verify(args):
    seed = _resolve_seed(args)
    scen = _load_scenario(args)
    ctrl, _ = _controller_for(scen, args, seed)
    cfg = _integrator_config(scen, args)
    report = verify_closed_loop(scen, controller=ctrl, cfg=cfg, seed=seed)
    print(report.summary_text())
    traj = report.trajectory
    if args.out and traj is not None and len(traj.times) > 1:
        traj.write_csv(args.out)
        print(f"trajectory written to {args.out}")
    if args.report:
        _atomic_write_text(args.report, report.to_json())
        print(f"report written to {args.report}")
        if not getattr(args, "no_figures", False) and traj is not None \
                and len(traj.times) > 1:
            from . import plots
            base = os.path.splitext(args.report)[0]
            written = [plots.render_state_response(
                traj, base + "_states.png", title=scen.name)]
            if report.comparison_run is not None:
                written.append(plots.render_domination(
                    traj, report.comparison_run, base + "_domination.png",
                    title=scen.name))
            for path in written:
                print(f"figure written to {path}")
    return 0 if report.overall else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="veclyap",
        description="Decentralized output-feedback synthesis and verification "
                    "via vector Lyapunov functions")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sigma=True, integ=True, out=None):
        p.add_argument("--scenario", help="registered scenario name")
        p.add_argument("--config", help="JSON run spec (overrides file)")
        p.add_argument("--k", type=float, default=None,
                       help="override the scenario's output gain")
        p.add_argument("--seed", type=int, default=None,
                       help="sampling seed (default: CVLF_SEED or 0)")
        if sigma:
            p.add_argument("--sigma", choices=_SIGMA_CHOICES, default=None,
                           help="re-synthesize the controller with this "
                                "design function")
        if integ:
            p.add_argument("--T", type=float, default=None, help="horizon")
            p.add_argument("--dt", type=float, default=None,
                           help="step (rk4) / output grid (rk45)")
            p.add_argument("--method", choices=("rk4", "rk45"), default="rk4")
        if out:
            p.add_argument("--out", help=out)

    p_list = sub.add_parser("list-scenarios", help="print the scenario table")
    p_list.add_argument("--config", help="JSON run spec; a spec with a 'base' "
                                         "key registers a derived scenario")
    p_list.set_defaults(func=_cmd_list_scenarios)

    p_sim = sub.add_parser("simulate", help="integrate the closed loop")
    common(p_sim, out="trajectory CSV path")
    p_sim.add_argument("--plot", action="store_true",
                       help="render a state-response figure next to the CSV")
    p_sim.set_defaults(func=_cmd_simulate)

    p_syn = sub.add_parser("synthesize",
                           help="build a controller and audit preconditions")
    common(p_syn, integ=False, out="provenance JSON path")
    p_syn.set_defaults(func=_cmd_synthesize)

    p_chk = sub.add_parser("check-matrix",
                           help="print comparison-matrix certificates")
    common(p_chk, sigma=False, integ=False)
    p_chk.set_defaults(func=_cmd_check_matrix)

    p_ver = sub.add_parser("verify", help="trajectory-level verification")
    common(p_ver, out="trajectory CSV path")
    p_ver.add_argument("--report", help="verification report JSON path")
    p_ver.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering next to the report")
    p_ver.set_defaults(func=_cmd_verify)
    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
