"""Figure rendering for simulation and verification reports (Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def render_state_response(traj, path, title=None):
    """Two-panel figure: state components and the state norm (log scale)."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)
    n = traj.states.shape[1]
    for j in range(n):
        ax0.plot(traj.times, traj.states[:, j], lw=0.9,
                 label=f"x{j + 1}" if n <= 9 else None)
    if n <= 9:
        ax0.legend(loc="upper right", fontsize=8, ncol=3)
    ax0.set_ylabel("state")
    if title:
        ax0.set_title(title)
    norms = traj.state_norms()
    ax1.semilogy(traj.times, np.maximum(norms, 1e-300), "k-", lw=1.1)
    ax1.set_xlabel("t")
    ax1.set_ylabel("|x|")
    ax1.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_control_effort(traj, path, title=None):
    """Applied inputs over time."""
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    m = traj.inputs.shape[1]
    for j in range(m):
        ax.plot(traj.times, traj.inputs[:, j], lw=0.9, label=f"u{j + 1}")
    if m:
        ax.legend(loc="upper right", fontsize=8)
    ax.set_xlabel("t")
    ax.set_ylabel("control")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_domination(traj, ztraj, path, title=None):
    """Storage components against the comparison flow, log scale.

    The comparison trajectory is resampled onto the recorded times so both
    families share an axis even for adaptive-step runs.
    """
    if traj.lyapunov is None:
        raise ValueError("trajectory was recorded without storage values")
    width = traj.lyapunov.shape[1]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    colors = plt.cm.tab10(np.linspace(0.0, 1.0, max(width, 2)))
    for j in range(width):
        zj = np.interp(traj.times, ztraj.times, ztraj.states[:, j])
        # clip so a saturated comparison flow doesn't overflow the log axis
        ax.semilogy(traj.times, np.clip(traj.lyapunov[:, j], 1e-300, 1e30),
                    color=colors[j], lw=1.0, label=f"V{j + 1}")
        ax.semilogy(traj.times, np.clip(zj, 1e-300, 1e30), color=colors[j],
                    lw=1.0, ls="--", label=f"z{j + 1}")
    ax.legend(loc="upper right", fontsize=7, ncol=max(1, width // 2))
    ax.set_xlabel("t")
    ax.set_ylabel("storage / comparison")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
