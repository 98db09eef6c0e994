"""Mass matrices, loads and initial-data projections for lowest-order edge and face elements.

On a brick with local coordinates ``s`` in ``[0, 1]^3`` the bases are

* edge of direction ``a`` at offsets ``(p, q)`` on the other axes:
  ``N = (1/h_a) * phi_p(s_b) * phi_q(s_c) * unit_a`` (unit circulation);
* face of normal ``a`` at offset ``t``: ``R = (h_a/|K|) * phi_t(s_a) * unit_a``
  (unit flux),

with ``phi_0(s) = 1 - s`` and ``phi_1(s) = s``. Every product of two basis
functions factors into 1D integrals of ``1``, ``phi_0`` and ``phi_1``, so
cell matrices with cell-constant weights are exact and closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import _OTHER

__all__ = [
    "MaterialField",
    "WeightedMass",
    "as_tensor_field",
    "edge_basis",
    "face_basis",
    "local_matrix",
    "assemble_mass",
    "assemble_mixed_mass",
    "load_vector",
    "evaluate_field",
    "cell_average",
    "project_initial_E",
    "project_initial_B",
]

_CONST = -1  # profile code for the constant 1


def _int1d(u, v):
    if u == _CONST and v == _CONST:
        return 1.0
    if u == _CONST or v == _CONST:
        return 0.5
    return 1.0 / 3.0 if u == v else 1.0 / 6.0


def _phi(code, s):
    if code == _CONST:
        return np.ones_like(s)
    return s if code == 1 else 1.0 - s


@dataclass(frozen=True)
class _Basis:
    direction: int
    profile: tuple  # per-axis profile code
    scale: float


def edge_basis(spacing):
    """The 12 local edge functions in the order of ``BrickMesh.cell_edges``."""
    out = []
    for a in range(3):
        b, c = _OTHER[a]
        for p in (0, 1):
            for q in (0, 1):
                prof = [_CONST] * 3
                prof[b], prof[c] = p, q
                out.append(_Basis(a, tuple(prof), 1.0 / spacing[a]))
    return out


def face_basis(spacing):
    """The 6 local face functions in the order of ``BrickMesh.cell_faces``."""
    vol = float(np.prod(spacing))
    out = []
    for a in range(3):
        for t in (0, 1):
            prof = [_CONST] * 3
            prof[a] = t
            out.append(_Basis(a, tuple(prof), spacing[a] / vol))
    return out


def local_matrix(U, V, spacing, weight=None):
    """Exact ``int_K (W u) . v`` for cell-constant ``W`` (identity if ``None``)."""
    vol = float(np.prod(spacing))
    W = np.eye(3) if weight is None else np.asarray(weight, dtype=float)
    M = np.zeros((len(U), len(V)))
    for r, u in enumerate(U):
        for c, v in enumerate(V):
            w = W[u.direction, v.direction]
            if w == 0.0:
                continue
            geo = _int1d(u.profile[0], v.profile[0]) * _int1d(u.profile[1], v.profile[1])
            geo *= _int1d(u.profile[2], v.profile[2])
            M[r, c] = vol * u.scale * v.scale * w * geo
    return M


def _direction_blocks(U, V, spacing):
    """Reference blocks ``K[a][b]`` so that the cell matrix is ``sum W_ab K[a][b]``."""
    blocks = {}
    for a in range(3):
        for b in range(3):
            W = np.zeros((3, 3))
            W[a, b] = 1.0
            K = local_matrix(U, V, spacing, W)
            if np.any(K):
                blocks[(a, b)] = K
    return blocks


# ---------------------------------------------------------------------------
# Materials


def as_tensor_field(values, n_cells):
    """Broadcast a scalar, 3x3 tensor, per-cell scalar or per-cell tensor to ``(n_cells, 3, 3)``."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        return np.broadcast_to(v * np.eye(3), (n_cells, 3, 3)).copy()
    if v.shape == (3, 3):
        return np.broadcast_to(v, (n_cells, 3, 3)).copy()
    if v.shape == (n_cells,):
        return v[:, None, None] * np.eye(3)[None]
    if v.shape == (n_cells, 3, 3):
        return v.copy()
    raise ValueError(f"cannot interpret material array of shape {v.shape} for {n_cells} cells")


@dataclass(frozen=True, eq=False)
class MaterialField:
    """Per-cell permittivity, permeability and conductivity tensors ``(n_cells, 3, 3)``."""

    epsilon: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    @classmethod
    def from_values(cls, n_cells, epsilon, mu, sigma=0.0, eps_floor=0.0, mu_floor=0.0):
        field = cls(
            as_tensor_field(epsilon, n_cells), as_tensor_field(mu, n_cells), as_tensor_field(sigma, n_cells)
        )
        errors = field.validate(eps_floor, mu_floor)
        if errors:
            raise ValueError("; ".join(errors))
        return field

    def validate(self, eps_floor=0.0, mu_floor=0.0):
        """Return a list of violated data assumptions (empty if valid)."""
        errors = []
        checks = (("epsilon", self.epsilon, eps_floor, True), ("mu", self.mu, mu_floor, True),
                  ("sigma", self.sigma, 0.0, False))
        for name, T, floor, strict in checks:
            if not np.all(np.isfinite(T)):
                errors.append(f"{name}: non-finite values")
                continue
            asym = np.max(np.abs(T - np.swapaxes(T, 1, 2))) if len(T) else 0.0
            if asym > 1e-12 * max(1.0, float(np.max(np.abs(T))) if len(T) else 1.0):
                errors.append(f"{name}: tensor is not symmetric")
                continue
            lam = np.linalg.eigvalsh(T).min() if len(T) else 0.0
            if strict:
                if not lam > floor:
                    errors.append(f"{name}: ellipticity violated (min eigenvalue {lam:g} <= floor {floor:g})")
            elif lam < -1e-14 * max(1.0, float(np.max(np.abs(T)))):
                errors.append(f"{name}: not positive semidefinite (min eigenvalue {lam:g})")
        return errors

    @property
    def mu_inv(self):
        return np.linalg.inv(self.mu)

    @property
    def eps_inv(self):
        return np.linalg.inv(self.epsilon)


@dataclass(frozen=True, eq=False)
class WeightedMass:
    """A symmetric sparse mass matrix over one entity class with provenance metadata."""

    matrix: sp.csr_matrix
    entity: str
    weight_kind: str
    mask: str | None = None

    def restrict(self, rows, cols=None):
        cols = rows if cols is None else cols
        m = self.matrix[rows][:, cols].tocsr()
        m.sort_indices()
        return m


def _weights_or_identity(mesh, weight):
    if weight is None:
        return None
    return as_tensor_field(weight, mesh.n_cells)


def _scatter(mesh, rdofs, cdofs, blocks, weights, cells, shape):
    """Sum ``W_ab(cell) * K_ab`` over the selected cells into a CSR matrix."""
    if cells is None:
        cells = np.arange(mesh.n_cells)
    rows, cols, vals = [], [], []
    nu = rdofs.shape[1]
    nv = cdofs.shape[1]
    for (a, b), K in blocks.items():
        w = np.ones(len(cells)) if weights is None else weights[cells, a, b]
        if weights is None and a != b:
            continue
        live = w != 0.0
        if not np.any(live):
            continue
        sel = cells[live]
        wl = w[live]
        ru, cv = np.nonzero(K)
        rows.append(rdofs[sel][:, ru].ravel())
        cols.append(cdofs[sel][:, cv].ravel())
        vals.append((wl[:, None] * K[ru, cv][None, :]).ravel())
    if not rows:
        return sp.csr_matrix(shape)
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape).tocsr()
    m.sum_duplicates()
    del nu, nv
    return m


def _symmetrize(m):
    upper = sp.triu(m, format="csr")
    out = (upper + sp.triu(upper, k=1, format="csr").T).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def _cells_from_mask(mesh, mask):
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.dtype == bool:
        return np.flatnonzero(mask)
    return np.asarray(mask, dtype=np.int64)


def assemble_mass(mesh, entity="edge", weight=None, mask=None, weight_kind=None, mask_name=None,
                  require=None):
    """Global mass matrix ``int (W u_i) . u_j`` over all cells or the ``mask`` cells.

    ``weight`` is a scalar, tensor or per-cell field (``None`` means identity).
    ``require`` is ``"spd"``, ``"psd"`` or ``None`` and checks the cell tensors
    before integration.
    """
    if entity == "edge":
        basis = edge_basis(mesh.spacing)
        dofs = mesh.cell_edges
        n = mesh.n_edges
    elif entity == "face":
        basis = face_basis(mesh.spacing)
        dofs = mesh.cell_faces
        n = mesh.n_faces
    else:
        raise ValueError(f"unknown entity class {entity!r}")
    weights = _weights_or_identity(mesh, weight)
    if weights is not None:
        bad = np.max(np.abs(weights - np.swapaxes(weights, 1, 2))) if len(weights) else 0.0
        if bad > 1e-12 * max(1.0, float(np.max(np.abs(weights)))):
            raise ValueError("mass weight must be symmetric per cell")
        if require is not None and len(weights):
            lam = float(np.linalg.eigvalsh(weights).min())
            scale = max(1e-300, float(np.max(np.abs(weights))))
            if require == "spd" and not lam > 0.0:
                raise ValueError(f"mass weight is not positive definite (min eigenvalue {lam:g})")
            if require == "psd" and lam < -1e-14 * scale:
                raise ValueError(f"mass weight is not positive semidefinite (min eigenvalue {lam:g})")
    blocks = _direction_blocks(basis, basis, mesh.spacing)
    cells = _cells_from_mask(mesh, mask)
    m = _scatter(mesh, dofs, dofs, blocks, weights, cells, (n, n))
    kind = weight_kind or ("identity" if weight is None else "custom")
    return WeightedMass(_symmetrize(m), entity, kind, mask_name)


def assemble_mixed_mass(mesh, mask=None):
    """Rectangular ``int N_i . R_j`` (edges x faces) over all or the ``mask`` cells."""
    E = edge_basis(mesh.spacing)
    F = face_basis(mesh.spacing)
    blocks = _direction_blocks(E, F, mesh.spacing)
    cells = _cells_from_mask(mesh, mask)
    m = _scatter(mesh, mesh.cell_edges, mesh.cell_faces, blocks, None, cells, (mesh.n_edges, mesh.n_faces))
    m.sort_indices()
    return m


# ---------------------------------------------------------------------------
# Quadrature-based loads and point evaluation


def _gauss01(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _basis_value(bf, s):
    """Scalar profile of a basis function at local points ``s`` of shape ``(m, 3)``."""
    v = bf.scale * np.ones(len(s))
    for d in range(3):
        v = v * _phi(bf.profile[d], s[:, d])
    return v


def load_vector(mesh, fn, entity="edge", cells=None, order=3):
    """``int f . u_i`` by ``order``-point Gauss-Legendre per axis on each cell.

    ``fn`` maps an ``(m, 3)`` point array to ``(m, 3)`` vector values.
    ``cells`` restricts integration to a mask or index subset.
    """
    if entity == "edge":
        basis, dofs, n = edge_basis(mesh.spacing), mesh.cell_edges, mesh.n_edges
    elif entity == "face":
        basis, dofs, n = face_basis(mesh.spacing), mesh.cell_faces, mesh.n_faces
    else:
        raise ValueError(f"unknown entity class {entity!r}")
    cell_ids = np.arange(mesh.n_cells) if cells is None else _cells_from_mask(mesh, cells)
    out = np.zeros(n)
    if len(cell_ids) == 0:
        return out
    xg, wg = _gauss01(order)
    ii, jj, kk = mesh.cell_multi_index(cell_ids)
    corner = np.asarray(mesh.origin) + np.stack([ii, jj, kk], axis=1) * np.asarray(mesh.spacing)
    vol = mesh.cell_volume
    sel_dofs = dofs[cell_ids]
    for a, xa in enumerate(xg):
        for b, xb in enumerate(xg):
            for c, xc in enumerate(xg):
                s = np.array([xa, xb, xc])
                pts = corner + s * np.asarray(mesh.spacing)
                vals = np.asarray(fn(pts), dtype=float)
                if vals.shape != pts.shape:
                    raise ValueError(f"field returned shape {vals.shape}, expected {pts.shape}")
                if not np.all(np.isfinite(vals)):
                    raise ValueError("field has non-finite values at quadrature points")
                wq = wg[a] * wg[b] * wg[c] * vol
                for loc, bf in enumerate(basis):
                    phi = _basis_value(bf, s[None, :])[0]
                    contrib = wq * phi * vals[:, bf.direction]
                    np.add.at(out, sel_dofs[:, loc], contrib)
    return out


def _locate(mesh, points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rel = (pts - np.asarray(mesh.origin)) / np.asarray(mesh.spacing)
    idx = np.floor(rel).astype(np.int64)
    for d in range(3):
        idx[:, d] = np.clip(idx[:, d], 0, mesh.counts[d] - 1)
    s = rel - idx
    return mesh.cell_index(idx[:, 0], idx[:, 1], idx[:, 2]), s


def evaluate_field(mesh, coeffs, entity, points):
    """Evaluate an edge or face field (full coefficient vector) at points -> ``(m, 3)``."""
    cells, s = _locate(mesh, points)
    basis = edge_basis(mesh.spacing) if entity == "edge" else face_basis(mesh.spacing)
    dofs = (mesh.cell_edges if entity == "edge" else mesh.cell_faces)[cells]
    out = np.zeros((len(cells), 3))
    coeffs = np.asarray(coeffs)
    for loc, bf in enumerate(basis):
        out[:, bf.direction] += coeffs[dofs[:, loc]] * _basis_value(bf, s)
    return out


def cell_average(mesh, coeffs, entity):
    """Exact cell means of an edge or face field (full coefficient vector) -> ``(n_cells, 3)``."""
    coeffs = np.asarray(coeffs)
    basis = edge_basis(mesh.spacing) if entity == "edge" else face_basis(mesh.spacing)
    dofs = mesh.cell_edges if entity == "edge" else mesh.cell_faces
    out = np.zeros((mesh.n_cells, 3))
    for loc, bf in enumerate(basis):
        mean = bf.scale
        for d in range(3):
            mean *= 1.0 if bf.profile[d] == _CONST else 0.5
        out[:, bf.direction] += coeffs[dofs[:, loc]] * mean
    return out


# ---------------------------------------------------------------------------
# Initial data


def project_initial_E(mesh, ops, E0, solver_options=None, order=3):
    """L2 projection of ``E0`` onto the PEC-constrained edge space.

    Returns interior-edge coefficients. ``E0=None`` gives zeros.
    ``solver_options`` are keyword arguments for :class:`LinearSolver`.
    """
    from .linalg import LinearSolver, SolverError

    ie = ops.interior_edges
    if E0 is None:
        return np.zeros(len(ie))
    M0 = assemble_mass(mesh, "edge").restrict(ie)
    rhs = load_vector(mesh, E0, "edge", order=order)[ie]
    if not np.any(rhs):
        return np.zeros(len(ie))
    opts = {"method": "cg", "tol": 1e-13}
    opts.update(solver_options or {})
    x, report = LinearSolver(M0, **opts).solve(rhs)
    if not report.converged:
        raise SolverError(f"initial E projection did not converge (residual {report.residual:.3e})",
                          report=report)
    return x


def _saddle(Mf, D, pin):
    n_c = D.shape[0]
    keep = np.arange(n_c) if not pin else np.arange(1, n_c)
    Dk = D[keep].astype(float)
    K = sp.bmat([[Mf, Dk.T], [Dk, None]], format="csc")
    return K, keep


def project_initial_B(mesh, ops, B0, order=3, refine=2):
    """L2 projection of ``B0`` onto discretely divergence-free face fields.

    Solves ``[M_f, D^T; D, 0] [b; lam] = [load(B0); 0]`` with a sparse direct
    factorization. On fully periodic meshes ``D`` has the constants in its
    left kernel, so one cell multiplier is pinned to zero. A few steps of
    iterative refinement drive ``D b`` to roundoff.
    """
    if B0 is None:
        return np.zeros(mesh.n_faces)
    rhs_b = load_vector(mesh, B0, "face", order=order)
    if not np.any(rhs_b):
        return np.zeros(mesh.n_faces)
    Mf = assemble_mass(mesh, "face").matrix
    pin = all(mesh.periodic)
    K, keep = _saddle(Mf, ops.D, pin)
    lu = spla.splu(K)
    n_f = mesh.n_faces
    rhs = np.concatenate([rhs_b, np.zeros(len(keep))])
    sol = lu.solve(rhs)
    for _ in range(refine):
        sol = sol + lu.solve(rhs - K @ sol)
    return sol[:n_f]
