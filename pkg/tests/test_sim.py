import warnings
from pathlib import Path

import numpy as np
import pytest

import veclyap as vl
from veclyap.sampling import ball_points

GOLDEN = Path(__file__).parent / "data" / "golden_10step.csv"


def test_integrator_config_validation():
    with pytest.raises(ValueError, match="positive"):
        vl.IntegratorConfig(T=0.0)
    with pytest.raises(ValueError, match="positive"):
        vl.IntegratorConfig(T=1.0, dt=-1e-3)
    with pytest.raises(ValueError, match="unknown method"):
        vl.IntegratorConfig(T=1.0, method="euler")
    with pytest.raises(ValueError, match="tolerances"):
        vl.IntegratorConfig(T=1.0, method="rk45", rtol=0.0)
    with pytest.raises(ValueError, match="guard factor"):
        vl.IntegratorConfig(T=1.0, guard_factor=1.0)
    assert vl.IntegratorConfig(T=1.0, guard_factor=None).guard_factor is None


def test_cascade_decay_frozen(example1):
    cfg = vl.IntegratorConfig(T=20.0, dt=1e-3)
    traj = vl.integrate(example1.system, example1.default_controller,
                        example1.default_initial_state, cfg,
                        lyapunov=example1.lyapunov)
    assert traj.times.shape == (20001,)
    final = float(np.linalg.norm(traj.final_state))
    assert np.isclose(final, 1.7068840472684952e-9, rtol=1e-12)
    # storage values decay monotonically enough to end tiny as well
    assert float(traj.lyapunov[-1].sum()) < 1e-17


def test_golden_ten_step_csv(example1, tmp_path):
    cfg = vl.IntegratorConfig(T=0.01, dt=1e-3)
    traj = vl.integrate(example1.system, example1.default_controller,
                        example1.default_initial_state, cfg,
                        lyapunov=example1.lyapunov)
    out = tmp_path / "ten.csv"
    traj.write_csv(out)
    assert out.read_bytes() == GOLDEN.read_bytes()


def test_resample(example1):
    cfg = vl.IntegratorConfig(T=1.0, dt=1e-3)
    traj = vl.integrate(example1.system, example1.default_controller,
                        example1.default_initial_state, cfg,
                        lyapunov=example1.lyapunov)
    grid = np.linspace(0.0, 1.0, 11)
    coarse = traj.resample(grid)
    assert np.array_equal(coarse.times, grid)
    assert coarse.states.shape == (11, 3)
    assert coarse.lyapunov.shape == (11, 3)
    # grid points that are also recorded samples interpolate exactly
    assert np.allclose(coarse.states[5], traj.states[500], rtol=0, atol=0)
    with pytest.raises(ValueError, match="span"):
        traj.resample(np.array([0.0, 1.5]))


def test_rk45_matches_rk4(example1):
    cfg = vl.IntegratorConfig(T=20.0, method="rk45")
    traj = vl.integrate(example1.system, example1.default_controller,
                        example1.default_initial_state, cfg)
    final = float(np.linalg.norm(traj.final_state))
    assert abs(final - 1.7068840472684952e-9) < 1e-11
    assert traj.metadata["accepted"] == 365
    assert traj.metadata["rejected"] == 1


def test_rk4_step_must_divide_horizon(example1):
    cfg = vl.IntegratorConfig(T=1.0005, dt=1e-2)
    with pytest.raises(ValueError, match="integer multiple"):
        vl.integrate(example1.system, example1.default_controller,
                     example1.default_initial_state, cfg)


def test_divergence_guard_open_loop(lorenz):
    # without feedback the coupled oscillators leave the guarded region
    cfg = vl.IntegratorConfig(T=10.0, dt=1e-3)
    with pytest.raises(vl.IntegrationFault, match="divergence guard") as exc:
        vl.integrate(lorenz.system, None, lorenz.default_initial_state, cfg)
    partial = exc.value.partial
    assert isinstance(partial, vl.Trajectory)
    assert partial.metadata["fault"] == "guard"
    assert 0.0 < exc.value.time < 10.0
    assert float(np.linalg.norm(exc.value.state)) > 2.0 * 10.0

    # the same run completes when the guard is disabled
    cfg_open = vl.IntegratorConfig(T=10.0, dt=1e-3, guard_factor=None)
    traj = vl.integrate(lorenz.system, None, lorenz.default_initial_state,
                        cfg_open)
    assert traj.times.shape == (10001,)
    assert 40.0 < float(np.linalg.norm(traj.final_state)) < 80.0


def test_initial_state_outside_ball_warns(example1):
    cfg = vl.IntegratorConfig(T=0.01, dt=1e-3)
    with pytest.warns(UserWarning, match="outside the certified domain"):
        vl.integrate(example1.system, example1.default_controller,
                     np.array([2.0, 2.0, 2.0]), cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        vl.integrate(example1.system, example1.default_controller,
                     example1.default_initial_state, cfg)


def test_initial_state_shape_checked(example1):
    cfg = vl.IntegratorConfig(T=0.01, dt=1e-3)
    with pytest.raises(ValueError, match="shape"):
        vl.integrate(example1.system, example1.default_controller,
                     np.zeros(5), cfg)


def _norm_track(norms):
    n = len(norms)
    return vl.Trajectory(times=np.arange(n, dtype=float),
                         states=np.asarray(norms, dtype=float)[:, None],
                         inputs=np.zeros((n, 0)), outputs=np.zeros((n, 1)),
                         lyapunov=None, metadata={})


def test_settling_time_edges():
    traj = _norm_track([2.0, 0.5, 0.1])
    assert vl.settling_time(traj, 1.0) == 1.0
    assert vl.settling_time(traj, 5.0) == 0.0          # never above
    assert vl.settling_time(traj, 0.05) is None        # still above at the end
    with pytest.raises(ValueError, match="positive"):
        vl.settling_time(traj, 0.0)
    # re-entry counts from the last excursion
    bump = _norm_track([2.0, 0.5, 1.5, 0.2, 0.1])
    assert vl.settling_time(bump, 1.0) == 3.0


def test_batch_run_frozen_summary(lorenz):
    pts = ball_points(9, 16, 2.0, seed=7)
    cfg = vl.IntegratorConfig(T=15.0, dt=4e-3)
    runs, summary = vl.batch_run(lorenz, pts, cfg=cfg)
    assert summary["count"] == 16
    assert summary["faulted"] == 0
    assert summary["threshold"] == 1e-3
    # honest numbers: at T=15 only two runs are inside 1e-3, but every run
    # is inside 5e-2 and the worst final norm is pinned
    assert summary["converged"] == 2
    assert sum(1 for r in runs if r.final_norm <= 5e-2) == 16
    assert np.isclose(summary["max_final_norm"], 0.026044643174776533,
                      rtol=1e-12)
    assert all(r.fault is None and r.trajectory is not None for r in runs)


def test_batch_run_records_faults(lorenz):
    cfg = vl.IntegratorConfig(T=1.0, dt=1e-3)
    far = 100.0 * np.ones(9)
    with pytest.warns(UserWarning):
        runs, summary = vl.batch_run(lorenz, [far], cfg=cfg)
    assert summary == {"count": 1, "faulted": 1, "converged": 0,
                       "threshold": 1e-3, "max_final_norm": None}
    assert "divergence guard" in runs[0].fault
    assert runs[0].final_norm is None and runs[0].settled_at is None
    assert isinstance(runs[0].trajectory, vl.Trajectory)


def test_batch_run_rejects_empty(lorenz):
    with pytest.raises(ValueError, match="at least one"):
        vl.batch_run(lorenz, [])
