"""Integer incidence matrices of the discrete de Rham complex on a brick mesh.

``G`` maps nodal values to edge circulations, ``C`` edge circulations to face
fluxes, ``D`` face fluxes to cell net outflow. With the lowest-order
Whitney/Nedelec/Raviart-Thomas bases (unit circulation and unit flux
normalization), ``C @ e`` are exactly the face-flux coefficients of
``curl`` of the edge field ``e``; no quadrature is involved.

On a periodic axis with one cell the two endpoints of a stencil coincide and
the contributions cancel; duplicates are summed, so such rows simply lose
entries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["DeRhamOperators", "build_operators", "apply", "gradient", "curl", "divergence"]

_INT = np.int64


def _coo(rows, cols, vals, shape):
    m = sp.coo_matrix(
        (np.concatenate(vals).astype(_INT), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    ).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def gradient(mesh):
    """Nodes to edges: ``(G q)_e = q(head) - q(tail)``."""
    rows, cols, vals = [], [], []
    for a in range(3):
        shape = mesh.edge_shape(a)
        i, j, k = mesh._unflat(np.arange(int(np.prod(shape))), shape)
        e = mesh.edge_index(a, i, j, k)
        head = [i, j, k]
        head[a] = head[a] + 1
        rows += [e, e]
        cols += [mesh.node_index(*head), mesh.node_index(i, j, k)]
        vals += [np.ones_like(e), -np.ones_like(e)]
    return _coo(rows, cols, vals, (mesh.n_edges, mesh.n_nodes))


def curl(mesh):
    """Edges to faces: circulation around each face, right-handed about +normal.

    For the face of normal ``a`` spanned by axes ``(b, c)`` (cyclic order):
    ``+e_b(lower c) + e_c(upper b) - e_b(upper c) - e_c(lower b)``.
    """
    rows, cols, vals = [], [], []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        shape = mesh.face_shape(a)
        i, j, k = mesh._unflat(np.arange(int(np.prod(shape))), shape)
        f = mesh.face_index(a, i, j, k)
        base = [i, j, k]
        up_b = list(base)
        up_b[b] = up_b[b] + 1
        up_c = list(base)
        up_c[c] = up_c[c] + 1
        ones = np.ones_like(f)
        rows += [f, f, f, f]
        cols += [
            mesh.edge_index(b, *base),
            mesh.edge_index(c, *up_b),
            mesh.edge_index(b, *up_c),
            mesh.edge_index(c, *base),
        ]
        vals += [ones, ones, -ones, -ones]
    return _coo(rows, cols, vals, (mesh.n_faces, mesh.n_edges))


def divergence(mesh):
    """Faces to cells: net outward flux."""
    rows, cols, vals = [], [], []
    i, j, k = mesh.cell_multi_index()
    cidx = mesh.cell_index(i, j, k)
    ones = np.ones_like(cidx)
    for a in range(3):
        up = [i, j, k]
        up[a] = up[a] + 1
        rows += [cidx, cidx]
        cols += [mesh.face_index(a, *up), mesh.face_index(a, i, j, k)]
        vals += [ones, -ones]
    return _coo(rows, cols, vals, (mesh.n_cells, mesh.n_faces))


@dataclass(frozen=True, eq=False)
class DeRhamOperators:
    """Full and PEC-constrained incidence matrices (integer CSR).

    ``C0`` keeps only interior-edge columns; ``G0`` maps interior nodes to
    interior edges. ``interior_edges``/``interior_nodes`` give the global
    indices of the retained entities.
    """

    G: sp.csr_matrix
    C: sp.csr_matrix
    D: sp.csr_matrix
    G0: sp.csr_matrix
    C0: sp.csr_matrix
    interior_edges: np.ndarray
    interior_nodes: np.ndarray

    def restrict_edges(self, full):
        return np.asarray(full)[..., self.interior_edges]

    def extend_edges(self, interior, n_edges):
        out = np.zeros(np.shape(interior)[:-1] + (n_edges,), dtype=np.result_type(interior, float))
        out[..., self.interior_edges] = interior
        return out


def build_operators(mesh, boundary_mask):
    G = gradient(mesh)
    C = curl(mesh)
    D = divergence(mesh)
    ie = boundary_mask.interior_edges
    inodes = boundary_mask.interior_nodes
    C0 = C[:, ie].tocsr()
    G0 = G[ie][:, inodes].tocsr()
    for m in (C0, G0):
        m.sort_indices()
    return DeRhamOperators(G=G, C=C, D=D, G0=G0, C0=C0, interior_edges=ie, interior_nodes=inodes)


def apply(operator, field):
    """Apply an incidence matrix to a coefficient vector with a shape check."""
    field = np.asarray(field)
    if field.shape[-1] != operator.shape[1]:
        raise ValueError(
            f"field of length {field.shape[-1]} does not match operator with {operator.shape[1]} columns"
        )
    if np.issubdtype(field.dtype, np.integer):
        return operator @ field
    return operator @ field.astype(float, copy=False)
