"""Comparison maps, their stability certificates, and trajectory domination.

The comparison system z' = L(z) is the low-dimensional surrogate whose
asymptotic stability certifies stability of the full interconnection.  For
linear Metzler maps two independent certificates are provided (eigenvalues
and leading principal minors of -L); for general quasimonotone maps only
sampled falsification and empirical decay are possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .lyapunov import CheckReport
from .sampling import sobol_unit

# Growth cap for comparison states.  An unstable linear comparison flow
# overflows float64 in finite time; capping keeps the arithmetic finite and
# only ever under-reports z, so domination verdicts stay conservative.
_STATE_CAP = 1e300
_NEG_TOL = 1e-12


class ComparisonIntegrationFault(RuntimeError):
    """Negativity beyond tolerance or step breakdown while integrating z."""

    def __init__(self, reason, partial=None):
        super().__init__(reason)
        self.reason = reason
        self.partial = partial


@dataclass(frozen=True)
class ComparisonMap:
    """Either a linear Metzler matrix or a general quasimonotone map."""

    matrix: Optional[np.ndarray] = None
    func: Optional[Callable] = None
    lipschitz: Optional[float] = None

    @classmethod
    def linear(cls, matrix):
        M = np.asarray(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("comparison matrix must be square")
        return cls(matrix=M)

    @classmethod
    def general(cls, func, lipschitz, dim=None):
        if lipschitz is None or lipschitz <= 0.0:
            raise ValueError("general comparison maps need a positive Lipschitz bound")
        if dim is not None:
            probe = np.asarray(func(np.zeros(dim)), dtype=float)
            if np.max(np.abs(probe)) != 0.0:
                raise ValueError("comparison map must vanish at the origin")
        return cls(func=func, lipschitz=float(lipschitz))

    @property
    def is_linear(self):
        return self.matrix is not None

    @property
    def dim(self):
        if self.is_linear:
            return self.matrix.shape[0]
        return None

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.is_linear:
            return self.matrix @ z
        return np.asarray(self.func(z), dtype=float)


def _as_matrix(M):
    if isinstance(M, ComparisonMap):
        if not M.is_linear:
            raise ValueError("certificate applies to linear comparison maps only")
        return M.matrix
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    return M


def is_metzler(M):
    """Exact check: all off-diagonal entries nonnegative."""
    M = _as_matrix(M)
    off = M - np.diag(np.diag(M))
    return bool(np.all(off >= 0.0))


def is_hurwitz(M, margin=1e-9):
    """True iff every eigenvalue has real part below -margin."""
    if margin <= 0.0:
        raise ValueError("margin must be positive")
    M = _as_matrix(M)
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - qr rarely fails
        raise RuntimeError(f"eigenvalue solver failed: {exc}") from exc
    return bool(np.max(eig.real) < -margin)


def spectral_abscissa(M):
    """Largest real part over the spectrum (reporting convenience)."""
    return float(np.max(np.linalg.eigvals(_as_matrix(M)).real))


def is_m_matrix_negation(M, minor_threshold=1e-12):
    """True iff M is Metzler and all leading principal minors of -M exceed
    the threshold (for Metzler M this is equivalent to M Hurwitz)."""
    M = _as_matrix(M)
    if not is_metzler(M):
        return False
    A = -M
    for k in range(1, A.shape[0] + 1):
        if np.linalg.det(A[:k, :k]) <= minor_threshold:
            return False
    return True


def vector_storage_lambda(c1, c2p, k, coupling=None):
    """Comparison matrix for per-subsystem two-component storage functions.

    Each subsystem contributes the 2x2 block [[-c1, c2p], [c1/2, -2k + c2p]]
    on the diagonal; coupling[i, j] lands in the (second-of-i, second-of-j)
    position.  Scalars broadcast across subsystems.
    """
    c1 = np.atleast_1d(np.asarray(c1, dtype=float))
    c2p = np.atleast_1d(np.asarray(c2p, dtype=float))
    k = np.atleast_1d(np.asarray(k, dtype=float))
    nsub = max(len(c1), len(c2p), len(k),
               0 if coupling is None else np.asarray(coupling).shape[0])
    nsub = max(nsub, 1)

    def bc(a, name):
        if len(a) == 1:
            a = np.full(nsub, a[0])
        if len(a) != nsub:
            raise ValueError(f"{name} has length {len(a)}, expected {nsub}")
        return a

    c1, c2p, k = bc(c1, "c1"), bc(c2p, "c2p"), bc(k, "k")
    if np.any(c1 <= 0.0) or np.any(c2p <= 0.0) or np.any(k <= 0.0):
        raise ValueError("c1, c2p, and k must be positive")
    if coupling is None:
        coupling = np.zeros((nsub, nsub))
    coupling = np.asarray(coupling, dtype=float)
    if coupling.shape != (nsub, nsub):
        raise ValueError(f"coupling must be {nsub}x{nsub}")
    if np.any(coupling < 0.0):
        raise ValueError("coupling entries must be nonnegative")
    M = np.zeros((2 * nsub, 2 * nsub))
    for i in range(nsub):
        M[2 * i, 2 * i] = -c1[i]
        M[2 * i, 2 * i + 1] = c2p[i]
        M[2 * i + 1, 2 * i] = 0.5 * c1[i]
        M[2 * i + 1, 2 * i + 1] = -2.0 * k[i] + c2p[i]
        for j in range(nsub):
            if j != i:
                M[2 * i + 1, 2 * j + 1] = coupling[i, j]
    return ComparisonMap.linear(M)


@dataclass
class ComparisonTrajectory:
    times: np.ndarray
    states: np.ndarray
    saturated: bool = False
    metadata: dict = field(default_factory=dict)


def simulate_comparison(cmap, z0, T, dt):
    """Integrate z' = L(z) from z0 >= 0 with a fixed-step 4th-order scheme.

    Tiny negative overshoots (above -1e-12) are clipped to zero; anything
    more negative raises a fault.  States are capped at 1e300 so unstable
    comparison flows stay finite (the cap is flagged on the result).
    """
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if np.any(z0 < 0.0):
        raise ValueError("comparison initial state must be nonnegative")
    if T <= 0.0 or dt <= 0.0:
        raise ValueError("horizon and step must be positive")
    F = cmap if callable(cmap) else ComparisonMap.linear(cmap)
    nsteps = int(round(T / dt))
    times = np.empty(nsteps + 1)
    states = np.empty((nsteps + 1, z0.size))
    times[0] = 0.0
    states[0] = z0
    z = z0.copy()
    saturated = False
    for step in range(nsteps):
        k1 = F(z)
        k2 = F(z + 0.5 * dt * k1)
        k3 = F(z + 0.5 * dt * k2)
        k4 = F(z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(z < -_NEG_TOL):
            partial = ComparisonTrajectory(times[:step + 1].copy(),
                                           states[:step + 1].copy(), saturated)
            raise ComparisonIntegrationFault(
                f"comparison state went negative ({z.min():.3e}) at "
                f"t={times[step] + dt:.6g}", partial)
        np.clip(z, 0.0, _STATE_CAP, out=z)
        if np.any(z >= _STATE_CAP):
            saturated = True
        times[step + 1] = (step + 1) * dt
        states[step + 1] = z
    return ComparisonTrajectory(times, states, saturated,
                                {"dt": dt, "T": T, "cap": _STATE_CAP})


def check_domination(times, v_values, z_traj, tol=1e-6):
    """Comparison-principle monitor: V_i(x(t_k)) <= z_i(t_k) + tol for all i, k.

    The z trajectory is linearly resampled onto the V grid when the grids
    differ; V times outside the z range are a hard error.
    """
    times = np.asarray(times, dtype=float)
    v_values = np.asarray(v_values, dtype=float)
    if v_values.shape[0] != times.size:
        raise ValueError("time grid and V record must share length")
    zt, zs = z_traj.times, z_traj.states
    if zs.shape[1] != v_values.shape[1]:
        raise ValueError("V and z must have the same number of components")
    if times.size == zt.size and np.allclose(times, zt, rtol=0.0, atol=1e-12):
        z = zs
    else:
        if times[0] < zt[0] - 1e-12 or times[-1] > zt[-1] + 1e-12:
            raise ValueError("V time grid extends beyond the comparison run")
        z = np.column_stack([np.interp(times, zt, zs[:, j])
                             for j in range(zs.shape[1])])
    diff = v_values - z
    kflat = int(np.argmax(diff))
    krow, kcol = divmod(kflat, diff.shape[1])
    return CheckReport.from_violation(
        name="domination", worst=float(diff[krow, kcol]), tolerance=tol,
        samples=diff.size,
        witness_state=v_values[krow],
        flags={"witness_time": float(times[krow]), "witness_component": kcol,
               "z_saturated": bool(z_traj.saturated)})


def check_quasimonotone(cmap, dim, samples=200, scale=1.0, seed=0, tol=1e-9):
    """Sampled falsifier for quasimonotone nondecreasingness of a general map.

    Draws pairs z' <= z'' agreeing in component i and demands
    F_i(z') <= F_i(z'') + tol.
    """
    pts = sobol_unit(2 * dim + 1, samples, seed)
    worst = -math.inf
    witness = None
    for row in pts:
        lo = scale * row[:dim]
        hi = lo + scale * row[dim:2 * dim]
        i = int(row[2 * dim] * dim) % dim
        hi[i] = lo[i]
        v = float((np.asarray(cmap(lo)) - np.asarray(cmap(hi)))[i])
        if v > worst:
            worst = v
            witness = lo
    return CheckReport.from_violation(
        name="quasimonotone", worst=worst, tolerance=tol, samples=samples,
        witness_state=witness)
