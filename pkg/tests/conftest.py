"""Shared fixtures and independent oracles.

The Whitney-function oracles below define every global basis function
directly from its entity multi-index and coordinates (tent profiles across
the element, indicator along it) and integrate with a 5-point Gauss rule
per axis. They do not use any of the package's local basis tables.
"""
import sys

import numpy as np
import pytest

from maxcloak.config import build_problem, parse_scenario

GAUSS5 = np.polynomial.legendre.leggauss(5)


def _tent(x, node, h, length, periodic):
    d = x - node
    if periodic:
        d = (d + 0.5 * length) % length - 0.5 * length
    return np.maximum(0.0, 1.0 - np.abs(d) / h)


def _slab(x, lo, h, length, periodic):
    d = x - lo
    if periodic:
        d = d % length
    return ((d >= 0.0) & (d < h)).astype(float)


def whitney_edge(mesh, e, pts):
    a, i, j, k = (int(v) for v in np.ravel(mesh.edge_multi_index(np.array([e]))))
    pos = (i, j, k)
    o, h, n = np.asarray(mesh.origin), np.asarray(mesh.spacing), mesh.counts
    val = np.ones(len(pts)) / h[a]
    for d in range(3):
        L = n[d] * h[d]
        if d == a:
            val *= _slab(pts[:, d], o[d] + pos[d] * h[d], h[d], L, mesh.periodic[d])
        else:
            val *= _tent(pts[:, d], o[d] + pos[d] * h[d], h[d], L, mesh.periodic[d])
    out = np.zeros((len(pts), 3))
    out[:, a] = val
    return out


def whitney_face(mesh, f, pts):
    a, i, j, k = (int(v) for v in np.ravel(mesh.face_multi_index(np.array([f]))))
    pos = (i, j, k)
    o, h, n = np.asarray(mesh.origin), np.asarray(mesh.spacing), mesh.counts
    val = np.ones(len(pts))
    for d in range(3):
        L = n[d] * h[d]
        if d == a:
            val *= _tent(pts[:, d], o[d] + pos[d] * h[d], h[d], L, mesh.periodic[d])
        else:
            val *= _slab(pts[:, d], o[d] + pos[d] * h[d], h[d], L, mesh.periodic[d]) / h[d]
    out = np.zeros((len(pts), 3))
    out[:, a] = val
    return out


def quadrature_points(mesh, cells=None):
    """All 5x5x5 Gauss points of the selected cells with their weights and owning cell."""
    x, w = GAUSS5
    s, ws = 0.5 * (x + 1.0), 0.5 * w
    S = np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", ws, ws, ws).ravel()
    cells = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    ii, jj, kk = mesh.cell_multi_index(cells)
    corner = np.asarray(mesh.origin) + np.stack([ii, jj, kk], axis=1) * np.asarray(mesh.spacing)
    pts = (corner[:, None, :] + S[None] * np.asarray(mesh.spacing)).reshape(-1, 3)
    wts = np.tile(W * mesh.cell_volume, len(cells))
    owner = np.repeat(cells, len(W))
    return pts, wts, owner


def oracle_mass(mesh, kind_u, kind_v, weight=None, cells=None):
    """Dense ``int (W u_i) . v_j`` by quadrature; ``weight`` is ``(n_cells, 3, 3)`` or None."""
    pts, wts, owner = quadrature_points(mesh, cells)
    fu = whitney_edge if kind_u == "edge" else whitney_face
    fv = whitney_edge if kind_v == "edge" else whitney_face
    nu = mesh.n_edges if kind_u == "edge" else mesh.n_faces
    nv = mesh.n_edges if kind_v == "edge" else mesh.n_faces
    U = np.stack([fu(mesh, i, pts) for i in range(nu)])  # (nu, q, 3)
    V = U if (kind_u == kind_v) else np.stack([fv(mesh, j, pts) for j in range(nv)])
    if weight is not None:
        U = np.einsum("qab,iqb->iqa", weight[owner], U)
    return np.einsum("iqa,jqa,q->ij", U, V, wts)


def small_scenario(counts=(2, 2, 2), steps=4, T=1.0, sigma=0.0, periodic=(False, False, False), method="dense",
                   sources=True, regions=None, **extra):
    """Unit-cube scenario with one control cell and observation elsewhere."""
    h = [1.0 / c for c in counts]
    cfg = {
        "name": "small",
        "geometry": {"counts": list(counts), "spacing": h, "origin": [0.0, 0.0, 0.0], "periodic": list(periodic)},
        "regions": regions if regions is not None else {
            "control": {"type": "box", "lo": [0.0, 0.0, 0.0], "hi": [0.5, 0.5, 0.5]},
            "observation": {"type": "not", "term": {"type": "box", "lo": [0.0, 0.0, 0.0], "hi": [0.5, 0.5, 0.5]}},
            "source": {"type": "box", "lo": [0.5, 0.5, 0.5], "hi": [1.0, 1.0, 1.0]},
        },
        "materials": {"epsilon": 1.0, "mu": 1.0, "sigma": sigma},
        "sources": [{"region": "source", "polarization": [0.3, -0.5, 1.0], "waveform": {
            "kind": "gauss-ramped-cosine", "f_center": 1.0, "sigma_J": 0.8, "t_offset": 0.4}}] if sources else [],
        "time": {"T": T, "steps": steps},
        "objective": {"w_track": 1.0, "alpha1": 0.1, "alpha2": 0.05},
        "solver": {"method": method, "tol": 1e-13},
    }
    cfg.update(extra)
    return parse_scenario(cfg)


def small_problem(**kw):
    return build_problem(small_scenario(**kw))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
