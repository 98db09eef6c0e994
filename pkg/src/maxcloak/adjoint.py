"""Backward Crank-Nicolson adjoint and reduced gradient.

The recursion is the exact transpose of the Schur-eliminated forward step.
With misfit loads ``qE_n`` (edges) and ``qB_n`` (faces), for ``n = N_t-1..0``:

    A y = qE_n + (2/dt) Me pE^{n+1} - C0^T rho^{n+1} - (dt/2) C0^T qB_n
    pE^n    = 2 y - pE^{n+1}
    rho^n   = rho^{n+1} + dt (Mmu C0 y + qB_n)

with ``y = pE^{n+1/2}`` and terminal values zero. The magnetic adjoint is
kept as ``rho = M_f p_B`` so no face-mass solve is needed. Derivatives:
``dJ/dF_n = dt y_n``, ``dJ/de^0 = Me pE^0`` and ``dJ/db^0 = rho^0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import CGBreakdown, SolverError
from .objective import misfit_loads

__all__ = ["AdjointTrajectory", "adjoint_step", "run_adjoint", "assemble_gradient", "riesz_map",
           "RieszMap", "reduced_gradient"]


@dataclass
class AdjointTrajectory:
    """Midpoint electric adjoints ``p_mid[n] = pE^{n+1/2}`` and the initial-time values.

    ``pE`` and ``rho`` hold all nodal values when requested (``(N_t+1, .)``, terminal row zero).
    """

    p_mid: np.ndarray
    pE0: np.ndarray
    rho0: np.ndarray
    pE: np.ndarray | None = None
    rho: np.ndarray | None = None
    cg_iterations: int = 0


def adjoint_step(pE1, rho1, qE, qB, solver, disc, dt=None, step=None, x0=None):
    """One backward step; returns ``(pE_n, rho_n, y, report)``."""
    dt = disc.grid.dt if dt is None else dt
    C0 = disc.ops.C0
    rhs = qE + (2.0 / dt) * (disc.Me @ pE1) - C0.T @ (rho1 + (0.5 * dt) * qB)
    try:
        y, report = solver.solve(rhs, x0=x0)
    except CGBreakdown as exc:
        raise CGBreakdown(str(exc), step=step) from None
    if not report.converged:
        raise SolverError(f"adjoint CG did not converge (residual {report.residual:.3e})", step=step,
                          report=report)
    pE = 2.0 * y - pE1
    rho = rho1 + dt * (disc.Mmu @ (C0 @ y) + qB)
    return pE, rho, y, report


def run_adjoint(disc, qE, qB, solver=None, store_nodes=False):
    """Integrate the adjoint backward for misfit loads ``qE (N_t, n_e)`` and ``qB (N_t, n_faces)``."""
    N, dt = disc.grid.steps, disc.grid.dt
    qE = np.asarray(qE, dtype=float)
    qB = np.asarray(qB, dtype=float)
    if qE.shape != (N, disc.n_e) or qB.shape != (N, disc.n_b):
        raise ValueError("misfit loads do not match the time grid or space dimensions")
    solver = disc.solver() if solver is None else solver
    pE = np.zeros(disc.n_e)
    rho = np.zeros(disc.n_b)
    p_mid = np.zeros((N, disc.n_e))
    PE = RHO = None
    if store_nodes:
        PE = np.zeros((N + 1, disc.n_e))
        RHO = np.zeros((N + 1, disc.n_b))
    its = 0
    y = None
    for n in range(N - 1, -1, -1):
        if not (np.any(qE[n]) or np.any(qB[n]) or np.any(pE) or np.any(rho)):
            y = None
            continue
        pE, rho, y, rep = adjoint_step(pE, rho, qE[n], qB[n], solver, disc, dt, step=n, x0=y)
        its += rep.iterations
        p_mid[n] = y
        if store_nodes:
            PE[n], RHO[n] = pE, rho
    return AdjointTrajectory(p_mid, pE, rho, PE, RHO, its)


def assemble_gradient(adj, control, disc, alpha1, alpha2):
    """Dual-representation gradient ``g_n = dt [alpha1 M_z z_n + alpha2 K_curl z_n + B^T pE^{n+1/2}]``."""
    z = np.asarray(getattr(control, "z", control), dtype=float)
    N = disc.grid.steps
    if z.shape != (N, disc.n_ctrl) or adj.p_mid.shape != (N, disc.n_e):
        raise ValueError("adjoint, control and time grid do not match")
    dt = disc.grid.dt
    reg = (disc.control_inner_matrix(alpha1, alpha2) @ z.T).T
    return dt * (reg + (disc.Bctrl.T @ adj.p_mid.T).T)


class RieszMap:
    """Riesz map of the control inner product: ``r_n = K^{-1} g_n / dt``."""

    def __init__(self, disc, alpha1, alpha2):
        self.dt = disc.grid.dt
        K = disc.control_inner_matrix(alpha1, alpha2)
        self.K = K
        self._lu = spla.splu(sp.csc_matrix(K)) if K.shape[0] else None

    def __call__(self, g):
        g = np.asarray(g, dtype=float)
        if self._lu is None:
            return g.copy()
        return (self._lu.solve(np.ascontiguousarray(g.T)) / self.dt).T.reshape(g.shape)

    def inner(self, u, v):
        """Control inner product ``sum_n dt u_n^T K v_n``."""
        return self.dt * float(np.sum(u * (self.K @ v.T).T))


def riesz_map(g, disc, alpha1, alpha2):
    return RieszMap(disc, alpha1, alpha2)(g)


def reduced_gradient(disc, cfg, control, solver=None):
    """Forward solve, cost and dual gradient for one control.

    Returns ``(CostBreakdown, gradient, StateTrajectory, AdjointTrajectory, cg_iterations)``.
    """
    from .forward import run_forward
    from .objective import evaluate_cost

    solver = disc.solver() if solver is None else solver
    it0 = getattr(solver, "total_iterations", 0)
    traj, _ = run_forward(disc, control, solver=solver, stride=disc.grid.steps, diagnostics=False)
    cost = evaluate_cost(traj, control, cfg, disc)
    qE, qB = misfit_loads(traj, cfg, disc)
    adj = run_adjoint(disc, qE, qB, solver=solver)
    g = assemble_gradient(adj, control, disc, cfg.alpha1, cfg.alpha2)
    its = getattr(solver, "total_iterations", 0) - it0
    return cost, g, traj, adj, its
