"""Crank-Nicolson forward integration with exact Faraday update and per-step diagnostics.

One step eliminates ``b^{n+1}`` through ``b^{n+1} = b^n - dt C0 x`` and solves
the SPD system

    A x = f + (2/dt) Me e^n + C0^T Mmu b^n,
    A   = (2/dt) Me + Ms + (dt/2) C0^T Mmu C0,

for the midpoint ``x = e^{n+1/2}``; then ``e^{n+1} = 2 x - e^n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import CGBreakdown, SolverError
from .problem import TimeGrid

__all__ = [
    "TimeGrid",
    "StateTrajectory",
    "StepDiagnostics",
    "ForwardDiagnostics",
    "build_cn_matrix",
    "cn_step",
    "run_forward",
    "average_source",
    "gauss_average",
]


def build_cn_matrix(Me, Ms, Mmu, C0, dt):
    """``(2/dt) Me + Ms + (dt/2) C0^T Mmu C0`` as an exactly symmetric CSR matrix."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    C0 = sp.csr_matrix(C0, dtype=float)
    K = (C0.T @ (Mmu @ C0)).tocsr()
    up = sp.triu(K, format="csr")
    K = up + sp.triu(up, k=1, format="csr").T
    A = ((2.0 / dt) * Me + Ms + (dt / 2.0) * K).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def gauss_average(fn, a, b, order=4):
    """``(1/(b-a)) int_a^b fn`` by ``order``-point Gauss-Legendre."""
    x, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (a + b) + 0.5 * (b - a) * x
    return 0.5 * float(np.sum(w * np.asarray([fn(s) for s in t], dtype=float)))


def average_source(waveform, n, grid, order=4):
    """Interval mean of a scalar waveform over ``(t^n, t^{n+1})``.

    Uses ``waveform.average`` (exact or piecewise rule) when present, else
    Gauss-Legendre of the given order.
    """
    a, b = grid.interval(n)
    if hasattr(waveform, "average"):
        return float(waveform.average(a, b, order))
    if np.isscalar(waveform):
        return float(waveform)
    return gauss_average(waveform, a, b, order)


@dataclass
class StepDiagnostics:
    """Balance and Gauss-law quantities of one step ``n -> n+1``."""

    energy_before: float
    energy_after: float
    dissipation: float  # x^T Ms x
    work: float  # f^T x
    balance_residual: float  # E1 - E0 + dt (diss - work)
    balance_relative: float
    gauss_e_residual: float  # max |G0^T [Me (e1 - e0)/dt + Ms x - f]|
    gauss_e_relative: float
    div_b_max: float
    cg_iterations: int
    cg_residual: float


@dataclass
class StateTrajectory:
    """Stored states at nodes ``0, stride, 2 stride, ..., N_t`` and optional midpoints.

    ``e_mid[n] = e^{n+1/2}`` and ``b_mid[n] = b^n - (dt/2) C0 e^{n+1/2}``.
    """

    grid: TimeGrid
    stride: int
    steps_stored: np.ndarray
    e: np.ndarray
    b: np.ndarray
    e_mid: np.ndarray | None = None
    b_mid: np.ndarray | None = None

    def at(self, n):
        idx = np.flatnonzero(self.steps_stored == n)
        if len(idx) == 0:
            raise KeyError(f"step {n} not stored (stride {self.stride})")
        return self.e[idx[0]], self.b[idx[0]]

    @property
    def final(self):
        return self.e[-1], self.b[-1]


@dataclass
class ForwardDiagnostics:
    """Per-step diagnostic series of a forward run."""

    energy: np.ndarray
    balance_relative: np.ndarray
    balance_residual: np.ndarray
    dissipation: np.ndarray
    work: np.ndarray
    gauss_e_relative: np.ndarray
    div_b_max: np.ndarray
    b_norm: np.ndarray
    cg_iterations: np.ndarray
    cg_residual: np.ndarray
    certificate_lhs: np.ndarray
    certificate_rhs: np.ndarray
    source_dual_sq: np.ndarray = field(default=None)

    @property
    def certificate_ok(self):
        return bool(np.all(self.certificate_lhs <= self.certificate_rhs))

    def summary(self):
        return {
            "max_balance_relative": float(np.max(self.balance_relative, initial=0.0)),
            "max_gauss_e_relative": float(np.max(self.gauss_e_relative, initial=0.0)),
            "max_div_b": float(np.max(self.div_b_max, initial=0.0)),
            "max_div_b_scaled": float(np.max(self.div_b_max / np.maximum(1.0, self.b_norm), initial=0.0)),
            "certificate_ok": self.certificate_ok,
            "final_energy": float(self.energy[-1]),
            "total_cg_iterations": int(np.sum(self.cg_iterations)),
        }

    def rows(self, grid):
        """Rows ``(step, time, energy, balance, gauss_e, div_b, cg_it, cg_res)`` per step."""
        t = grid.times
        for n in range(len(self.balance_relative)):
            yield (n + 1, float(t[n + 1]), float(self.energy[n + 1]), float(self.balance_relative[n]),
                   float(self.gauss_e_relative[n]), float(self.div_b_max[n + 1]),
                   int(self.cg_iterations[n]), float(self.cg_residual[n]))


def cn_step(e, b, fload, solver, disc, dt=None, step=None, x0=None):
    """Advance ``(e^n, b^n)`` by one CN step.

    Returns ``(e1, b1, x, report)`` with ``x = e^{n+1/2}``.
    """
    dt = disc.grid.dt if dt is None else dt
    rhs = fload + (2.0 / dt) * (disc.Me @ e) + disc.ops.C0.T @ (disc.Mmu @ b)
    try:
        x, report = solver.solve(rhs, x0=x0)
    except CGBreakdown as exc:
        raise CGBreakdown(str(exc), step=step) from None
    if not report.converged:
        raise SolverError(f"CG did not converge (residual {report.residual:.3e})", step=step, report=report)
    b1 = b - dt * (disc.ops.C0 @ x)
    e1 = 2.0 * x - e
    return e1, b1, x, report


def step_diagnostics(disc, e0, b0, e1, b1, x, fload, dt, report, en0=None):
    en0 = disc.energy(e0, b0) if en0 is None else en0
    en1 = disc.energy(e1, b1)
    diss = float(x @ (disc.Ms @ x))
    work = float(fload @ x)
    res = en1 - en0 + dt * (diss - work)
    scale = max(en0, en1, dt * abs(work), dt * diss)
    rel = abs(res) / scale if scale > 0 else abs(res)
    G0T = disc.ops.G0.T
    t1 = disc.Me @ ((e1 - e0) / dt)
    t2 = disc.Ms @ x
    g = G0T @ (t1 + t2 - fload)
    if g.size:
        absG = abs(G0T)
        gscale = float(np.max(absG @ (np.abs(t1) + np.abs(t2) + np.abs(fload))))
        gres = float(np.max(np.abs(g)))
    else:
        gscale = gres = 0.0
    grel = gres / gscale if gscale > 0 else gres
    divb = disc.ops.D @ b1
    return StepDiagnostics(en0, en1, diss, work, res, rel, gres, grel,
                           float(np.max(np.abs(divb), initial=0.0)), report.iterations, report.residual)


def run_forward(disc, control=None, solver=None, stride=1, store_midpoints=True, diagnostics=True,
                certificate=True, source_order=None):
    """Integrate from the initial state of ``disc`` over its time grid.

    Parameters
    ----------
    disc : Discretization
    control : array (N_t, n_ctrl) or ControlTrajectory, optional
        Midpoint control coefficients on ``disc.ctrl_edges``.
    solver : LinearSolver, optional
        Defaults to ``disc.solver()``.
    stride : int
        Store nodal states every ``stride`` steps (the final state is always stored).
    certificate : bool
        Evaluate the stability bound, which needs one ``Me`` solve per forced step.

    Returns
    -------
    StateTrajectory, ForwardDiagnostics or None
    """
    grid = disc.grid
    N, dt = grid.steps, grid.dt
    if source_order is None:
        source_order = getattr(disc, "source_order", 4)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    z = None
    if control is not None:
        z = np.asarray(getattr(control, "z", control), dtype=float)
        if z.shape != (N, disc.n_ctrl):
            raise ValueError(f"control has shape {z.shape}, expected {(N, disc.n_ctrl)}")
    solver = disc.solver() if solver is None else solver
    stored = sorted(set(range(0, N + 1, stride)) | {N})
    E = np.empty((len(stored), disc.n_e))
    B = np.empty((len(stored), disc.n_b))
    e, b = disc.e0.copy(), disc.b0.copy()
    E[0], B[0] = e, b
    slot = 1
    e_mid = np.empty((N, disc.n_e)) if store_midpoints else None
    b_mid = np.empty((N, disc.n_b)) if store_midpoints else None
    if diagnostics:
        en = np.empty(N + 1)
        en[0] = disc.energy(e, b)
        keys = ("balance_relative", "balance_residual", "dissipation", "work", "gauss_e_relative",
                "cg_iterations", "cg_residual", "source_dual_sq")
        series = {k: np.zeros(N) for k in keys}
        divb = np.empty(N + 1)
        bnorm = np.empty(N + 1)
        divb[0] = float(np.max(np.abs(disc.ops.D @ b), initial=0.0))
        bnorm[0] = float(np.linalg.norm(b))
    xprev = None
    for n in range(N):
        f = disc.source_load(n, source_order)
        if z is not None:
            f = f + disc.control_load(z[n])
        e1, b1, x, rep = cn_step(e, b, f, solver, disc, dt, step=n, x0=xprev)
        xprev = x
        if store_midpoints:
            e_mid[n] = x
            b_mid[n] = b - (0.5 * dt) * (disc.ops.C0 @ x)
        if diagnostics:
            d = step_diagnostics(disc, e, b, e1, b1, x, f, dt, rep, en0=en[n])
            en[n + 1] = d.energy_after
            series["balance_relative"][n] = d.balance_relative
            series["balance_residual"][n] = d.balance_residual
            series["dissipation"][n] = d.dissipation
            series["work"][n] = d.work
            series["gauss_e_relative"][n] = d.gauss_e_relative
            series["cg_iterations"][n] = d.cg_iterations
            series["cg_residual"][n] = d.cg_residual
            divb[n + 1] = d.div_b_max
            bnorm[n + 1] = float(np.linalg.norm(b1))
            if certificate and np.any(f):
                y, r = disc.me_solver().solve(f)
                series["source_dual_sq"][n] = float(f @ y)
        e, b = e1, b1
        if slot < len(stored) and stored[slot] == n + 1:
            E[slot], B[slot] = e, b
            slot += 1
    traj = StateTrajectory(grid, stride, np.asarray(stored), E, B, e_mid, b_mid)
    if not diagnostics:
        return traj, None
    lhs = en + dt * np.concatenate([[0.0], np.cumsum(series["dissipation"])])
    if certificate:
        forcing = 2.0 * grid.T * dt * np.concatenate([[0.0], np.cumsum(series["source_dual_sq"])])
        rhs = np.e * (en[0] + forcing)
    else:
        rhs = np.full(N + 1, np.nan)
    diag = ForwardDiagnostics(
        energy=en, balance_relative=series["balance_relative"], balance_residual=series["balance_residual"],
        dissipation=series["dissipation"], work=series["work"], gauss_e_relative=series["gauss_e_relative"],
        div_b_max=divb, b_norm=bnorm, cg_iterations=series["cg_iterations"].astype(int),
        cg_residual=series["cg_residual"], certificate_lhs=lhs, certificate_rhs=rhs,
        source_dual_sq=series["source_dual_sq"],
    )
    return traj, diag
