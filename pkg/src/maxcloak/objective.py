"""Control trajectories, the discrete tracking cost and the control inner product."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ControlTrajectory", "ObjectiveConfig", "CostBreakdown", "evaluate_cost", "control_inner",
           "misfit_loads", "project_target"]


@dataclass
class ControlTrajectory:
    """Midpoint controls ``z[n] = z^{n+1/2}`` on the control edges ``edges`` (global indices)."""

    z: np.ndarray
    edges: np.ndarray

    @classmethod
    def zeros(cls, disc):
        return cls(np.zeros((disc.grid.steps, disc.n_ctrl)), disc.ctrl_edges)

    def copy(self):
        return ControlTrajectory(self.z.copy(), self.edges)

    def full(self, n_edges):
        """Scatter to full edge vectors ``(N_t, n_edges)``."""
        out = np.zeros((self.z.shape[0], n_edges))
        out[:, self.edges] = self.z
        return out


@dataclass
class ObjectiveConfig:
    """Weights and (optional) midpoint targets of the tracking cost.

    ``e_target`` is ``(N_t, n_e)`` on interior edges and ``b_target``
    ``(N_t, n_faces)``; ``None`` means zero.
    """

    w_track: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    e_target: np.ndarray | None = None
    b_target: np.ndarray | None = None

    def validate(self, for_optimization=False):
        errors = []
        for name in ("w_track", "alpha1", "alpha2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                errors.append(f"{name} must be finite and non-negative")
        if for_optimization and not (self.w_track > 0 and self.alpha1 > 0 and self.alpha2 > 0):
            errors.append("optimization requires w_track, alpha1, alpha2 > 0")
        return errors


@dataclass
class CostBreakdown:
    tracking: float
    control_l2: float
    control_curl: float

    @property
    def total(self):
        return self.tracking + self.control_l2 + self.control_curl

    def as_dict(self):
        return {"total": self.total, "tracking": self.tracking, "control_l2": self.control_l2,
                "control_curl": self.control_curl}


def _quad_sum(M, X):
    """``sum_n X[n]^T M X[n]`` for stacked rows ``X``."""
    if X.size == 0:
        return 0.0
    return float(np.sum(X * (M @ X.T).T))


def _misfits(traj, cfg):
    if traj.e_mid is None or traj.b_mid is None:
        raise ValueError("trajectory has no stored midpoints")
    de = traj.e_mid if cfg.e_target is None else traj.e_mid - cfg.e_target
    db = traj.b_mid if cfg.b_target is None else traj.b_mid - cfg.b_target
    return de, db


def _check_grid(traj, control, disc):
    N = disc.grid.steps
    if traj.grid != disc.grid or traj.e_mid.shape[0] != N:
        raise ValueError("trajectory and discretization use different time grids")
    if control is not None:
        z = getattr(control, "z", control)
        if np.shape(z) != (N, disc.n_ctrl):
            raise ValueError(f"control has shape {np.shape(z)}, expected {(N, disc.n_ctrl)}")


def evaluate_cost(traj, control, cfg, disc):
    """Discrete reduced cost split into tracking, control-L2 and control-curl terms."""
    _check_grid(traj, control, disc)
    dt = disc.grid.dt
    de, db = _misfits(traj, cfg)
    track = 0.5 * cfg.w_track * dt * (_quad_sum(disc.Me_obs, de) + _quad_sum(disc.Mmu_obs, db))
    if control is None:
        return CostBreakdown(track, 0.0, 0.0)
    z = np.asarray(getattr(control, "z", control))
    l2 = 0.5 * cfg.alpha1 * dt * _quad_sum(disc.Mz, z)
    curl = 0.5 * cfg.alpha2 * dt * _quad_sum(disc.Kcurl, z)
    return CostBreakdown(track, l2, curl)


def control_inner(z1, z2, alpha1, alpha2, disc):
    """``sum_n dt [alpha1 z1^T M_z z2 + alpha2 (C z1)^T M_f (C z2)]``."""
    z1 = np.asarray(getattr(z1, "z", z1))
    z2 = np.asarray(getattr(z2, "z", z2))
    if z1.shape != z2.shape:
        raise ValueError("controls have different shapes")
    K = disc.control_inner_matrix(alpha1, alpha2)
    return disc.grid.dt * float(np.sum(z1 * (K @ z2.T).T))


def misfit_loads(traj, cfg, disc):
    """Adjoint right-hand sides ``w Me_obs (e - e_d)`` and ``w Mmu_obs (b - b_d)`` per interval."""
    de, db = _misfits(traj, cfg)
    qE = cfg.w_track * (disc.Me_obs @ de.T).T
    qB = cfg.w_track * (disc.Mmu_obs @ db.T).T
    return qE, qB


def project_target(disc, fn, entity="edge", order=3):
    """L2 projection of ``fn(x, t)`` at interval midpoints onto the edge or face space.

    Returns ``(N_t, n_e)`` interior-edge or ``(N_t, n_faces)`` face coefficients.
    """
    from .assembly import assemble_mass, load_vector
    from .linalg import LinearSolver

    grid = disc.grid
    if entity == "edge":
        M = assemble_mass(disc.mesh, "edge").restrict(disc.ie)
        pick = disc.ie
        n = disc.n_e
    else:
        M = assemble_mass(disc.mesh, "face").matrix
        pick = slice(None)
        n = disc.n_b
    solver = LinearSolver(M, method="cg", tol=1e-13)
    out = np.zeros((grid.steps, n))
    for k in range(grid.steps):
        tm = 0.5 * sum(grid.interval(k))
        rhs = load_vector(disc.mesh, lambda p: fn(p, tm), entity, order=order)[pick]
        out[k], _ = solver.solve(rhs)
    return out
