"""Built-in benchmark scenarios.

Two plants ship with the package:

* ``example1`` -- a three-state cascade with one actuated coordinate and a
  hand-derived comparison matrix.  The storage bounds behind that matrix use
  quadratic-cap estimates that are only valid on the ball of radius sqrt(2),
  so that is the declared domain.
* ``lorenz-network`` -- three output-coupled chaotic oscillators, one input
  each, with vector storage functions (two components per subsystem) and
  dissipation constants derived numerically at build time.

Builders accept a dict of scalar parameter overrides and return immutable
Scenario objects; importing this module registers both under their names.
"""

from __future__ import annotations

import math

import numpy as np

from .comparison import ComparisonMap, vector_storage_lambda
from .lyapunov import StorageFunction, VectorLyapunov, eval_v
from .model import (CompositeSystem, Scenario, StatePartition, check_overrides,
                    register_scenario)
from .synthesis import (ChannelSpec, DecentralizedController, SigmaDesign,
                        SynthesisData, derive_lorenz_constants, make_controller)


def example1_lambda(kappa, epsilon):
    """Comparison matrix for the cascade benchmark.

    Off-diagonal entries are padded by epsilon so the matrix is strictly
    Metzler; the diagonal picks up the same epsilon as bound slack.
    """
    e = float(epsilon)
    return np.array([
        [-2.0 + e, e, 8.0 + e],
        [1.0 + e, -(float(kappa) - 3.0) + e, 1.0 + e],
        [e, 4.0 + e, -1.0 + e],
    ])


def example2_lambda(c1, c2p, k, coupling=None):
    """Comparison matrix for the second benchmark (the oscillator network).

    Same assembly as vector_storage_lambda — per-subsystem 2x2 blocks from
    the dissipation constants and the chosen output gains, couplings in the
    second storage component's rows — returned as the raw 2N x 2N matrix.
    """
    return vector_storage_lambda(c1, c2p, k, coupling).matrix


def _build_example1(overrides):
    p = check_overrides(overrides, {"kappa": 33.0, "epsilon": 1e-3},
                        positive=("kappa",))
    kappa = p["kappa"]

    part = StatePartition(subsystem_dims=(1, 1, 1), input_dims=(0, 1, 0),
                          output_dims=(1, 1, 1))

    def drift(x):
        return np.array([
            -x[0] + 2.0 * x[0] * x[2] * x[2],
            x[0] - x[1] - x[0] * x[2],
            x[0] * x[1] - x[2],
        ])

    def input_map(x):
        g = np.zeros((3, 1))
        g[1, 0] = 1.0
        return g

    system = CompositeSystem(
        partition=part, drift=drift, input_map=input_map,
        output_maps=tuple(lambda xi: xi for _ in range(3)),
        domain_radius=math.sqrt(2.0), output_coords=(0, 0, 0))

    def quad(xi):
        return 0.5 * xi * xi

    V = VectorLyapunov(components=tuple(
        StorageFunction(dim=1, width=1, value=quad, grad=lambda xi: xi)
        for _ in range(3)))

    controller = DecentralizedController(
        laws=(None, lambda y, _k=kappa: -_k * y, None), partition=part,
        provenance={"kind": "user", "law": "u2 = -kappa * y2", "kappa": kappa})

    return Scenario(
        name="example1", system=system, lyapunov=V,
        comparison=ComparisonMap.linear(example1_lambda(kappa, p["epsilon"])),
        synthesis_data=None, default_controller=controller,
        default_initial_state=np.array([0.5, 0.5, 0.5]),
        default_horizon=(20.0, 1e-3), parameters=p)


def _build_lorenz_network(overrides):
    p = check_overrides(
        overrides,
        {"w1": 10.0, "w2": 8.0 / 3.0, "w3": 28.0, "rho": 2.0, "k": 30.0,
         "varpi": 1.0, "derive_samples": 4096.0, "derive_seed": 0.0},
        positive=("w1", "w2", "w3", "rho", "k", "derive_samples"))
    w1, w2, w3 = p["w1"], p["w2"], p["w3"]
    varpi, k, nsub = p["varpi"], p["k"], 3

    part = StatePartition(subsystem_dims=(3,) * nsub, input_dims=(1,) * nsub,
                          output_dims=(1,) * nsub)

    def drift(x):
        dx = np.empty(3 * nsub)
        ysum = x[1] + x[4] + x[7]
        for i in range(nsub):
            a, b, c = x[3 * i], x[3 * i + 1], x[3 * i + 2]
            dx[3 * i] = w1 * (b - a)
            dx[3 * i + 1] = w3 * a - b - a * c + varpi * (ysum - b)
            dx[3 * i + 2] = a * b - w2 * c
        return dx

    def input_map(x):
        g = np.zeros((3 * nsub, nsub))
        for i in range(nsub):
            g[3 * i + 1, i] = 1.0
        return g

    system = CompositeSystem(
        partition=part, drift=drift, input_map=input_map,
        output_maps=tuple(lambda xi: xi[1] for _ in range(nsub)),
        domain_radius=p["rho"], output_coords=(1,) * nsub)

    def storage(xi):
        a, b, c = xi
        return np.array([0.5 * a * a + 0.25 * a ** 4 + 0.5 * c * c,
                         0.5 * b * b])

    def storage_grad(xi):
        a, b, c = xi
        return np.array([[a + a ** 3, 0.0, c], [0.0, b, 0.0]])

    V = VectorLyapunov(components=tuple(
        StorageFunction(dim=3, width=2, value=storage, grad=storage_grad)
        for _ in range(nsub)))

    derived = derive_lorenz_constants(
        w1=w1, w2=w2, w3=w3, varpi=varpi, nsub=nsub, rho=p["rho"],
        sample_count=int(p["derive_samples"]), seed=int(p["derive_seed"]))

    lam = vector_storage_lambda(derived.c1, derived.c2p, k * np.ones(nsub),
                                coupling=derived.coupling)
    lam_matrix = lam.matrix

    # two-channel premise: the u-free row bound is exactly the comparison
    # rows (the -2k V2 term is offset by the supply bias k*y^2 below)
    channels = []
    for i in range(nsub):
        def internal_rate(x, u1, _rows=lam_matrix[2 * i:2 * i + 2]):
            return _rows @ eval_v(V, x)

        def supply_bias(y, u1, _k=k):
            v = float(np.atleast_1d(y)[0])
            return _k * (v * v)

        def supply_gain(y):
            return np.atleast_1d(np.asarray(y, dtype=float))

        channels.append(ChannelSpec(
            inner_dim=0, outer_dim=1, inner_law=None,
            internal_rate=internal_rate, supply_bias=supply_bias,
            supply_gain=supply_gain, supply_component=-1))

    data = SynthesisData(partition=part, channels=tuple(channels))
    controller = make_controller(data, SigmaDesign.zero(),
                                 provenance={"k": k, "scenario": "lorenz-network"})

    x0 = np.array([0.9, 0.1, 0.6, -0.6, 0.8, -0.5, -0.5, 0.7, 0.4])

    return Scenario(
        name="lorenz-network", system=system, lyapunov=V, comparison=lam,
        synthesis_data=data, default_controller=controller,
        default_initial_state=x0, default_horizon=(10.0, 1e-3),
        parameters=p, derived=derived)


register_scenario("example1", _build_example1)
register_scenario("lorenz-network", _build_lorenz_network)
