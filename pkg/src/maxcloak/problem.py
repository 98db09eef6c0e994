"""Assembled space-time discretization shared by the forward, adjoint and objective code."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import MaterialField, assemble_mass, assemble_mixed_mass
from .derham import build_operators
from .linalg import LinearSolver
from .mesh import boundary_edges

__all__ = ["TimeGrid", "SourceTerm", "Discretization"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t^n = n T / N_t``; ``dt`` is derived, never stored."""

    T: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError("T must be positive and finite")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be an integer >= 1")

    @property
    def dt(self):
        return self.T / self.steps

    @property
    def times(self):
        return self.T * (np.arange(self.steps + 1) / self.steps)

    def interval(self, n):
        t = self.times
        return float(t[n]), float(t[n + 1])


@dataclass(eq=False)
class SourceTerm:
    """A separable source ``g(t) * F``: interior-edge load ``F`` times a scalar waveform ``g``.

    ``waveform`` is callable and may provide ``average(a, b)`` for exact
    interval means.
    """

    load: np.ndarray
    waveform: object
    name: str = "source"


def _mask_or_none(regions, name):
    if regions is None or name not in regions.cells:
        return None
    return regions.cell_mask(name)


@dataclass(eq=False)
class Discretization:
    """Mesh, operators, material masses, control maps, sources and initial state.

    All edge quantities live on interior (non-PEC) edges ``ie``; face
    quantities on all faces; control quantities on ``ctrl_edges`` (global
    indices of interior edges bounding control cells).
    """

    mesh: object
    regions: object
    materials: MaterialField
    grid: TimeGrid
    sources: list = field(default_factory=list)
    e0: np.ndarray | None = None
    b0: np.ndarray | None = None
    solver_options: dict = field(default_factory=dict)

    def __post_init__(self):
        mesh = self.mesh
        self.boundary = boundary_edges(mesh)
        self.ops = build_operators(mesh, self.boundary)
        ie = self.ops.interior_edges
        self.ie = ie
        mat = self.materials
        self.Me = assemble_mass(mesh, "edge", mat.epsilon, weight_kind="epsilon", require="spd").restrict(ie)
        self.Ms = assemble_mass(mesh, "edge", mat.sigma, weight_kind="sigma", require="psd").restrict(ie)
        mu_inv = mat.mu_inv
        self.Mmu = assemble_mass(mesh, "face", mu_inv, weight_kind="mu_inv", require="spd").matrix
        obs = _mask_or_none(self.regions, "observation")
        if obs is None:
            obs = np.zeros(mesh.n_cells, dtype=bool)
        self.Me_obs = assemble_mass(mesh, "edge", mat.epsilon, mask=obs, weight_kind="epsilon",
                                    mask_name="observation").restrict(ie)
        self.Mmu_obs = assemble_mass(mesh, "face", mu_inv, mask=obs, weight_kind="mu_inv",
                                     mask_name="observation").matrix
        ctrl = _mask_or_none(self.regions, "control")
        if ctrl is None:
            ctrl = np.zeros(mesh.n_cells, dtype=bool)
        self.ctrl_cells = ctrl
        edge_in_ctrl = np.zeros(mesh.n_edges, dtype=bool)
        edge_in_ctrl[mesh.cell_edges[ctrl].ravel()] = True
        interior = np.zeros(mesh.n_edges, dtype=bool)
        interior[ie] = True
        self.ctrl_edges = np.flatnonzero(edge_in_ctrl & interior)
        C = self.ops.C.astype(float)
        self.C_ctrl = C[:, self.ctrl_edges].tocsr()
        Mz_full = assemble_mass(mesh, "edge", mask=ctrl, weight_kind="identity", mask_name="control")
        self.Mz = Mz_full.restrict(self.ctrl_edges)
        self.Mf_ctrl = assemble_mass(mesh, "face", mask=ctrl, weight_kind="identity", mask_name="control").matrix
        self.Kcurl = _sym(self.C_ctrl.T @ self.Mf_ctrl @ self.C_ctrl)
        mixed = assemble_mixed_mass(mesh, mask=ctrl)
        self.Bctrl = (mixed[ie] @ self.C_ctrl).tocsr()
        self.Bctrl.sort_indices()
        self._cn = {}
        self._solvers = {}
        self._me_solver = None
        if self.e0 is None:
            self.e0 = np.zeros(len(ie))
        if self.b0 is None:
            self.b0 = np.zeros(mesh.n_faces)
        self.e0 = np.asarray(self.e0, dtype=float)
        self.b0 = np.asarray(self.b0, dtype=float)
        if self.e0.shape != (len(ie),) or self.b0.shape != (mesh.n_faces,):
            raise ValueError("initial state has the wrong size")
        for s in self.sources:
            if np.shape(s.load) != (len(ie),):
                raise ValueError(f"source {s.name!r} load has the wrong size")

    # -- sizes
    @property
    def n_e(self):
        return len(self.ie)

    @property
    def n_b(self):
        return self.mesh.n_faces

    @property
    def n_ctrl(self):
        return len(self.ctrl_edges)

    @property
    def C0(self):
        return self.ops.C0

    # -- time stepping operators
    def cn_matrix(self, dt=None):
        from .forward import build_cn_matrix

        dt = self.grid.dt if dt is None else dt
        if dt not in self._cn:
            self._cn[dt] = build_cn_matrix(self.Me, self.Ms, self.Mmu, self.ops.C0, dt)
        return self._cn[dt]

    def solver(self, **overrides):
        """Cached :class:`LinearSolver` for the CN matrix, shared by forward and adjoint."""
        opts = {"method": "cg", "tol": 1e-10, "max_iter": None, "preconditioner": "jacobi"}
        opts.update(self.solver_options)
        opts.update(overrides)
        key = tuple(sorted(opts.items()))
        if key not in self._solvers:
            self._solvers[key] = LinearSolver(self.cn_matrix(), **opts)
        return self._solvers[key]

    def me_solver(self):
        if self._me_solver is None:
            self._me_solver = LinearSolver(self.Me, method="cg", tol=1e-12)
        return self._me_solver

    # -- loads
    def source_load(self, n, order=4):
        """Interval-averaged source load ``f^{n+1/2}`` (interior edges)."""
        from .forward import average_source

        out = np.zeros(self.n_e)
        for s in self.sources:
            g = average_source(s.waveform, n, self.grid, order)
            if g != 0.0:
                out += g * s.load
        return out

    def control_load(self, z_n):
        return self.Bctrl @ z_n

    def control_inner_matrix(self, alpha1, alpha2):
        """``K = alpha1 M_z + alpha2 C^T M_f C`` on control edges (per interval, without dt)."""
        return _sym((alpha1 * self.Mz + alpha2 * self.Kcurl).tocsr())

    def energy(self, e, b):
        return 0.5 * (float(e @ (self.Me @ e)) + float(b @ (self.Mmu @ b)))


def _sym(m):
    m = sp.csr_matrix(m)
    up = sp.triu(m, format="csr")
    out = (up + sp.triu(up, k=1, format="csr").T).tocsr()
    out.sort_indices()
    return out
