"""Seeded low-discrepancy sampling helpers.

Every falsification check and constant derivation in the package draws its
points from scrambled Sobol sequences with explicit seeds, so reports are
reproducible run to run.
"""

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

_EDGE = 1e-15


def sobol_unit(dim, count, seed):
    """Scrambled Sobol points in the open unit cube, shape (count, dim)."""
    eng = qmc.Sobol(d=dim, scramble=True, seed=seed)
    # draw a power-of-two batch (balance properties) and truncate
    m = max(1, int(np.ceil(np.log2(count))))
    pts = eng.random_base2(m=m)[:count]
    # keep strictly inside (0, 1) for the inverse-normal map
    return np.clip(pts, _EDGE, 1.0 - _EDGE)


def ball_points(dim, count, radius, seed):
    """Low-discrepancy points in the closed ball of the given radius.

    Directions come from inverse-normal-transformed Sobol coordinates, the
    radius from the u**(1/dim) volume law, so the points are uniform in
    volume without rejection.
    """
    if dim < 1 or count < 1 or radius <= 0.0:
        raise ValueError("ball_points needs dim >= 1, count >= 1, radius > 0")
    pts = sobol_unit(dim + 1, count, seed)
    z = ndtri(pts[:, :dim])
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    r = radius * pts[:, dim:] ** (1.0 / dim)
    return (z / norms) * r


def shelled_ball_points(dim, count, radius, seed, shells=12):
    """Ball points plus dyadically shrunk copies (x * 2**-j, j = 0..shells).

    Ratio-type suprema of homogeneous quantities are often attained in the
    small-radius limit; uniform-in-volume samples concentrate near the outer
    shell and miss them.  The shrunk copies cover roughly four decades of
    scale at modest extra cost.
    """
    base = ball_points(dim, count, radius, seed)
    return np.vstack([base * 2.0 ** (-j) for j in range(shells + 1)])


def interval_points(count, lo, hi, seed):
    """Sobol points on the interval [lo, hi]."""
    return lo + (hi - lo) * sobol_unit(1, count, seed)[:, 0]
