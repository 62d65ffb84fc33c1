import math

import numpy as np
import pytest

import veclyap as vl
from veclyap.sampling import ball_points


def test_eval_v_example1(example1):
    x = np.array([0.5, -0.4, 0.3])
    assert np.allclose(vl.eval_v(example1.lyapunov, x),
                       [0.125, 0.08, 0.045])


def test_eval_v_lorenz_widths(lorenz):
    V = lorenz.lyapunov
    assert V.total_width == 6
    x = np.zeros(9)
    x[0], x[1], x[2] = 1.0, 2.0, 3.0
    v = vl.eval_v(V, x)
    # first subsystem: (a^2/2 + a^4/4 + c^2/2, b^2/2)
    assert np.allclose(v[:2], [0.5 + 0.25 + 4.5, 2.0])
    assert np.allclose(v[2:], 0.0)


def test_lie_derivative_matches_hand_value(example1):
    x = np.array([0.5, 0.5, 0.5])
    # V_i = x_i^2/2 so Vdot_i = x_i * f_i(x); f(x) = (-0.25, -0.25, -0.25)
    lie = vl.lie_derivative(example1.lyapunov, example1.system, x)
    assert np.allclose(lie, [-0.125, -0.125, -0.125])
    lie_u = vl.lie_derivative(example1.lyapunov, example1.system, x,
                              np.array([2.0]))
    assert np.allclose(lie_u, [-0.125, 0.875, -0.125])


def test_gradient_consistency_both_scenarios(example1, lorenz):
    pts1 = ball_points(3, 500, example1.system.domain_radius, seed=11)
    pts2 = ball_points(9, 500, lorenz.system.domain_radius, seed=12)
    assert vl.gradient_consistency(example1.lyapunov, pts1) < 1e-5
    assert vl.gradient_consistency(lorenz.lyapunov, pts2) < 1e-5


def test_gradient_consistency_catches_wrong_gradient():
    comp = vl.StorageFunction(dim=1, width=1,
                              value=lambda xi: 0.5 * xi * xi,
                              grad=lambda xi: 2.0 * xi)  # wrong by factor 2
    V = vl.VectorLyapunov(components=(comp,))
    assert vl.gradient_consistency(V, np.array([[0.7]])) > 1e-2


def test_check_report_pass_rule():
    rep = vl.CheckReport.from_violation("demo", worst=-1e-3, tolerance=0.0,
                                        samples=10)
    assert rep.passed
    rep2 = vl.CheckReport.from_violation("demo", worst=1e-12, tolerance=0.0,
                                         samples=10)
    assert not rep2.passed
    d = rep.to_dict()
    assert d["name"] == "demo" and d["passed"] is True


def test_check_config_validation():
    with pytest.raises(ValueError):
        vl.OcvlfCheckConfig(output_samples=0)
    with pytest.raises(ValueError):
        vl.OcvlfCheckConfig(control_radius=-1.0)


def test_ocvlf_example1_passes_on_certified_ball(example1):
    reps = vl.check_ocvlf(example1.lyapunov, example1.comparison,
                          example1.system, vl.OcvlfCheckConfig(seed=0))
    assert len(reps) == 3
    for rep in reps:
        assert rep.passed
        assert rep.worst_violation < 0.0
        assert rep.flags["empty_fibers"] == 0
    # margins are frozen for regression (seed 0)
    worsts = [rep.worst_violation for rep in reps]
    assert np.allclose(worsts, [-0.00026481452375903987,
                                -0.0009476491380482912,
                                -0.0003095855855993251], rtol=1e-9)


def test_ocvlf_zero_map_produces_witness(example1):
    zero = vl.ComparisonMap.linear(np.zeros((3, 3)))
    reps = vl.check_ocvlf(example1.lyapunov, zero, example1.system,
                          vl.OcvlfCheckConfig(seed=0))
    failed = [rep for rep in reps if not rep.passed]
    assert failed
    strict = [rep for rep in failed if rep.worst_violation > 0.0]
    assert strict and strict[0].witness_state is not None
    assert strict[0].witness_output is not None


def test_ocvlf_larger_radius_breaks_example1_bounds(example1):
    # the quadratic-cap estimates behind the comparison matrix need |x| <= sqrt(2);
    # at radius 2 the sampled check must find a violation
    cfg = vl.OcvlfCheckConfig(seed=0, radius=2.0)
    reps = vl.check_ocvlf(example1.lyapunov, example1.comparison,
                          example1.system, cfg)
    assert any(not rep.passed for rep in reps)
    assert max(rep.worst_violation for rep in reps) > 0.0


def test_small_control_example1(example1):
    mu = lambda y: 40.0 * abs(float(np.atleast_1d(y)[0]))
    reps = vl.check_small_control(example1.lyapunov, example1.comparison,
                                  example1.system, mu,
                                  vl.OcvlfCheckConfig(seed=0))
    assert all(rep.passed for rep in reps)


def test_small_control_rejects_bad_bounds(example1):
    with pytest.raises(ValueError, match="vanish"):
        vl.check_small_control(example1.lyapunov, example1.comparison,
                               example1.system, lambda y: 1.0)
    with pytest.raises(ValueError, match="positive"):
        vl.check_small_control(example1.lyapunov, example1.comparison,
                               example1.system, lambda y: 0.0)


def test_small_control_tight_budget_fails(example1):
    # subsystem 2 needs roughly kappa*|y| of control authority; |y|/100 is
    # nowhere near enough, so the budgeted search must report a violation
    mu = lambda y: abs(float(np.atleast_1d(y)[0])) / 100.0
    reps = vl.check_small_control(example1.lyapunov, example1.comparison,
                                  example1.system, mu,
                                  vl.OcvlfCheckConfig(seed=0))
    assert not reps[1].passed
    assert reps[1].witness_control is not None
