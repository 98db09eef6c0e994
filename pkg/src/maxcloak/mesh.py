"""Structured brick meshes with periodic identification and region tagging.

Entities are numbered direction-major (all x-directed edges, then y, then z)
and, within one direction, with the x index running fastest. Edges point in
the +axis direction and face normals point in the +axis direction.

Along an axis, "node-type" positions number ``n`` when the axis is periodic
and ``n + 1`` otherwise; "cell-type" positions always number ``n``. An edge
of direction ``a`` uses cell-type positions on axis ``a`` and node-type
positions on the other axes; a face of normal ``a`` is the opposite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "BrickMesh",
    "RegionSet",
    "BoundaryMask",
    "build_mesh",
    "tag_regions",
    "boundary_edges",
    "make_predicate",
    "REGION_NAMES",
]

REGION_NAMES = ("source", "control", "observation", "absorber")

# (first, second) remaining axes for each direction, in increasing order
_OTHER = ((1, 2), (0, 2), (0, 1))


@dataclass(frozen=True, eq=False)
class BrickMesh:
    """Uniform tensor-product grid of bricks.

    Parameters
    ----------
    counts : tuple of int
        Cells per axis ``(nx, ny, nz)``.
    spacing : tuple of float
        Cell widths ``(hx, hy, hz)`` in meters.
    origin : tuple of float
        Coordinates of the lower corner.
    periodic : tuple of bool
        Periodic identification per axis.
    """

    counts: tuple
    spacing: tuple
    origin: tuple
    periodic: tuple

    # ---- sizes -----------------------------------------------------------
    @property
    def node_dims(self):
        return tuple(n if p else n + 1 for n, p in zip(self.counts, self.periodic))

    def edge_shape(self, a):
        dims = list(self.node_dims)
        dims[a] = self.counts[a]
        return tuple(dims)

    def face_shape(self, a):
        dims = list(self.counts)
        dims[a] = self.node_dims[a]
        return tuple(dims)

    @property
    def n_nodes(self):
        return int(np.prod(self.node_dims))

    @cached_property
    def edge_offsets(self):
        sizes = [int(np.prod(self.edge_shape(a))) for a in range(3)]
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)]))

    @cached_property
    def face_offsets(self):
        sizes = [int(np.prod(self.face_shape(a))) for a in range(3)]
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)]))

    @property
    def n_edges(self):
        return self.edge_offsets[3]

    @property
    def n_faces(self):
        return self.face_offsets[3]

    @property
    def n_cells(self):
        return int(np.prod(self.counts))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def bounds(self):
        lo = np.asarray(self.origin, dtype=float)
        return lo, lo + np.asarray(self.counts) * np.asarray(self.spacing)

    def euler_characteristic(self):
        return self.n_nodes - self.n_edges + self.n_faces - self.n_cells

    # ---- index maps ------------------------------------------------------
    def _wrap(self, idx, dims):
        out = []
        for a in range(3):
            v = np.asarray(idx[a])
            out.append(v % dims[a] if self.periodic[a] else v)
        return out

    @staticmethod
    def _flat(idx, dims):
        i, j, k = idx
        return i + dims[0] * (j + dims[1] * k)

    def node_index(self, i, j, k):
        dims = self.node_dims
        return self._flat(self._wrap((i, j, k), dims), dims)

    def edge_index(self, a, i, j, k):
        dims = self.edge_shape(a)
        return self.edge_offsets[a] + self._flat(self._wrap((i, j, k), dims), dims)

    def face_index(self, a, i, j, k):
        dims = self.face_shape(a)
        return self.face_offsets[a] + self._flat(self._wrap((i, j, k), dims), dims)

    def cell_index(self, i, j, k):
        return self._flat((i, j, k), self.counts)

    @staticmethod
    def _unflat(flat, dims):
        flat = np.asarray(flat)
        i = flat % dims[0]
        j = (flat // dims[0]) % dims[1]
        k = flat // (dims[0] * dims[1])
        return i, j, k

    def edge_multi_index(self, e):
        """Inverse of :meth:`edge_index`: ``(direction, i, j, k)`` arrays."""
        e = np.asarray(e)
        a = np.searchsorted(self.edge_offsets, e, side="right") - 1
        i = np.empty_like(e)
        j = np.empty_like(e)
        k = np.empty_like(e)
        for d in range(3):
            sel = a == d
            i[sel], j[sel], k[sel] = self._unflat(e[sel] - self.edge_offsets[d], self.edge_shape(d))
        return a, i, j, k

    def face_multi_index(self, f):
        f = np.asarray(f)
        a = np.searchsorted(self.face_offsets, f, side="right") - 1
        i = np.empty_like(f)
        j = np.empty_like(f)
        k = np.empty_like(f)
        for d in range(3):
            sel = a == d
            i[sel], j[sel], k[sel] = self._unflat(f[sel] - self.face_offsets[d], self.face_shape(d))
        return a, i, j, k

    def cell_multi_index(self, c=None):
        if c is None:
            c = np.arange(self.n_cells)
        return self._unflat(c, self.counts)

    # ---- geometry --------------------------------------------------------
    def cell_centers(self):
        i, j, k = self.cell_multi_index()
        h = self.spacing
        o = self.origin
        return np.stack(
            [o[0] + (i + 0.5) * h[0], o[1] + (j + 0.5) * h[1], o[2] + (k + 0.5) * h[2]], axis=1
        )

    def node_coordinates(self):
        i, j, k = self._unflat(np.arange(self.n_nodes), self.node_dims)
        h = self.spacing
        o = self.origin
        return np.stack([o[0] + i * h[0], o[1] + j * h[1], o[2] + k * h[2]], axis=1)

    def edge_midpoints(self):
        a, i, j, k = self.edge_multi_index(np.arange(self.n_edges))
        pos = np.stack([i, j, k], axis=1).astype(float)
        pos[np.arange(len(a)), a] += 0.5
        return np.asarray(self.origin) + pos * np.asarray(self.spacing)

    def face_centers(self):
        a, i, j, k = self.face_multi_index(np.arange(self.n_faces))
        pos = np.stack([i, j, k], axis=1).astype(float) + 0.5
        pos[np.arange(len(a)), a] -= 0.5
        return np.asarray(self.origin) + pos * np.asarray(self.spacing)

    # ---- cell-local connectivity ----------------------------------------
    @cached_property
    def cell_edges(self):
        """``(n_cells, 12)`` global edge indices; 4 per direction, offsets (p, q)."""
        i, j, k = self.cell_multi_index()
        base = (i, j, k)
        cols = []
        for a in range(3):
            b, c = _OTHER[a]
            for p in (0, 1):
                for q in (0, 1):
                    idx = list(base)
                    idx[b] = idx[b] + p
                    idx[c] = idx[c] + q
                    cols.append(self.edge_index(a, *idx))
        return np.stack(cols, axis=1)

    @cached_property
    def cell_faces(self):
        """``(n_cells, 6)`` global face indices; lower then upper per direction."""
        i, j, k = self.cell_multi_index()
        cols = []
        for a in range(3):
            for s in (0, 1):
                idx = [i, j, k]
                idx[a] = idx[a] + s
                cols.append(self.face_index(a, *idx))
        return np.stack(cols, axis=1)


def build_mesh(counts, spacing, origin=(0.0, 0.0, 0.0), periodic=(False, False, False)):
    """Validate parameters and construct a :class:`BrickMesh`.

    A periodic axis may have any positive cell count. With one cell the two
    opposite sides are the same entity, which is how pseudo-1D/2D problems
    are realized.
    """
    counts = tuple(int(n) for n in counts)
    spacing = tuple(float(h) for h in spacing)
    origin = tuple(float(o) for o in origin)
    periodic = tuple(bool(p) for p in periodic)
    if len(counts) != 3 or len(spacing) != 3 or len(origin) != 3 or len(periodic) != 3:
        raise ValueError("counts, spacing, origin and periodic need three entries each")
    for a in range(3):
        if counts[a] < 1:
            raise ValueError(f"cell count on axis {a} must be >= 1, got {counts[a]}")
        if not spacing[a] > 0.0 or not np.isfinite(spacing[a]):
            raise ValueError(f"spacing on axis {a} must be positive, got {spacing[a]}")
    return BrickMesh(counts, spacing, origin, periodic)


# ---------------------------------------------------------------------------
# Region predicates


def _points_in_polygon(pts, verts):
    """Even-odd ray casting; ``pts`` is ``(n, 2)``, ``verts`` is ``(m, 2)``."""
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    x0 = verts[:, 0][None, :]
    y0 = verts[:, 1][None, :]
    x1 = np.roll(verts[:, 0], -1)[None, :]
    y1 = np.roll(verts[:, 1], -1)[None, :]
    straddle = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (x < xcross)
    return (np.count_nonzero(hits, axis=1) % 2) == 1


class _Pred:
    """Membership test on points plus an optional axis-aligned bounding box."""

    def __init__(self, fn, bbox=None):
        self.fn = fn
        self.bbox = bbox

    def __call__(self, pts):
        return np.asarray(self.fn(np.asarray(pts, dtype=float)), dtype=bool)


def _bound(v, default):
    return default if v is None else float(v)


def make_predicate(spec):
    """Build a point-membership predicate from a JSON-style description.

    Supported ``type`` values: ``all``, ``none``, ``box`` (``lo``, ``hi``;
    ``null`` entries are unbounded), ``ball`` (``center``, ``radius``,
    optional ``inner_radius`` and ``axes`` so that ``axes=[0, 1]`` gives a
    cylinder), ``polygon`` (``vertices`` in the plane of ``axes``, extruded
    along the remaining axis, optional ``lo``/``hi`` along it), and the
    combinators ``and``/``or`` (``terms``) and ``not`` (``term``). A list is
    shorthand for ``or``.
    """
    if spec is None:
        return _Pred(lambda p: np.zeros(len(p), bool), bbox=None)
    if isinstance(spec, list):
        spec = {"type": "or", "terms": spec}
    kind = spec.get("type")
    if kind == "all":
        return _Pred(lambda p: np.ones(len(p), bool))
    if kind == "none":
        return _Pred(lambda p: np.zeros(len(p), bool))
    if kind == "box":
        lo = np.array([_bound(v, -np.inf) for v in spec["lo"]])
        hi = np.array([_bound(v, np.inf) for v in spec["hi"]])
        return _Pred(lambda p: np.all((p >= lo) & (p <= hi), axis=1), bbox=(lo, hi))
    if kind == "ball":
        c = np.asarray(spec["center"], dtype=float)
        r = float(spec["radius"])
        r_in = float(spec.get("inner_radius", 0.0))
        axes = list(spec.get("axes", [0, 1, 2]))

        def ball(p):
            d2 = np.sum((p[:, axes] - c[axes]) ** 2, axis=1)
            inside = d2 <= r * r
            if r_in > 0.0:
                inside &= d2 >= r_in * r_in
            return inside

        lo = np.full(3, -np.inf)
        hi = np.full(3, np.inf)
        lo[axes] = c[axes] - r
        hi[axes] = c[axes] + r
        return _Pred(ball, bbox=(lo, hi))
    if kind == "polygon":
        verts = np.asarray(spec["vertices"], dtype=float)
        axes = list(spec.get("axes", [0, 1]))
        rest = [a for a in range(3) if a not in axes][0]
        zlo = _bound(spec.get("lo"), -np.inf)
        zhi = _bound(spec.get("hi"), np.inf)

        def poly(p):
            inside = _points_in_polygon(p[:, axes], verts)
            return inside & (p[:, rest] >= zlo) & (p[:, rest] <= zhi)

        lo = np.full(3, -np.inf)
        hi = np.full(3, np.inf)
        lo[axes] = verts.min(axis=0)
        hi[axes] = verts.max(axis=0)
        lo[rest], hi[rest] = zlo, zhi
        return _Pred(poly, bbox=(lo, hi))
    if kind in ("and", "or"):
        terms = [make_predicate(t) for t in spec["terms"]]
        op = np.logical_and if kind == "and" else np.logical_or

        def combo(p):
            out = terms[0](p) if terms else np.full(len(p), kind == "and")
            for t in terms[1:]:
                out = op(out, t(p))
            return out

        bbox = None
        boxes = [t.bbox for t in terms]
        if kind == "or" and boxes and all(b is not None for b in boxes):
            bbox = (np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0))
        elif kind == "and":
            known = [b for b in boxes if b is not None]
            if known:
                bbox = (np.max([b[0] for b in known], axis=0), np.min([b[1] for b in known], axis=0))
        return _Pred(combo, bbox=bbox)
    if kind == "not":
        inner = make_predicate(spec["term"])
        return _Pred(lambda p: ~inner(p))
    raise ValueError(f"unknown predicate type {kind!r}")


@dataclass(frozen=True, eq=False)
class RegionSet:
    """Per-cell region tags and the derived edge/face memberships."""

    mesh: BrickMesh
    cells: dict
    warnings: tuple = field(default=())

    def cell_mask(self, name):
        return self.cells.get(name, np.zeros(self.mesh.n_cells, bool))

    def edge_mask(self, name):
        """Edges bounding at least one tagged cell."""
        out = np.zeros(self.mesh.n_edges, bool)
        out[self.mesh.cell_edges[self.cell_mask(name)].ravel()] = True
        return out

    def face_mask(self, name):
        out = np.zeros(self.mesh.n_faces, bool)
        out[self.mesh.cell_faces[self.cell_mask(name)].ravel()] = True
        return out

    def count(self, name):
        return int(np.count_nonzero(self.cell_mask(name)))


def tag_regions(mesh, predicates):
    """Tag cells whose centers satisfy each region's predicate.

    ``predicates`` maps region names to predicate specs (see
    :func:`make_predicate`) or to callables on ``(n, 3)`` point arrays.
    A predicate whose bounding box misses the mesh yields an empty region
    and a warning entry.
    """
    centers = mesh.cell_centers()
    lo, hi = mesh.bounds
    cells = {}
    warnings = []
    for name, spec in predicates.items():
        pred = spec if callable(spec) else make_predicate(spec)
        bbox = getattr(pred, "bbox", None)
        if bbox is not None and (np.any(bbox[0] > hi) or np.any(bbox[1] < lo)):
            cells[name] = np.zeros(mesh.n_cells, bool)
            warnings.append(f"region {name!r} lies outside the mesh bounding box")
            continue
        mask = np.asarray(pred(centers), dtype=bool)
        if mask.shape != (mesh.n_cells,):
            raise ValueError(f"predicate for region {name!r} returned shape {mask.shape}")
        cells[name] = mask
    for name in REGION_NAMES:
        cells.setdefault(name, np.zeros(mesh.n_cells, bool))
    return RegionSet(mesh, cells, tuple(warnings))


@dataclass(frozen=True, eq=False)
class BoundaryMask:
    """PEC-constrained edges and nodes (those lying in non-periodic boundary planes)."""

    edges: np.ndarray
    nodes: np.ndarray

    @cached_property
    def interior_edges(self):
        return np.flatnonzero(~self.edges)

    @cached_property
    def interior_nodes(self):
        return np.flatnonzero(~self.nodes)

    @property
    def n_boundary(self):
        return int(np.count_nonzero(self.edges))


def boundary_edges(mesh):
    """Edges tangential to, and nodes on, the non-periodic boundary planes."""
    e_mask = np.zeros(mesh.n_edges, bool)
    a, i, j, k = mesh.edge_multi_index(np.arange(mesh.n_edges))
    pos = (i, j, k)
    for d in range(3):
        if mesh.periodic[d]:
            continue
        on_plane = (pos[d] == 0) | (pos[d] == mesh.counts[d])
        # an edge along d is never tangential to a d-plane
        e_mask |= on_plane & (a != d)
    n_mask = np.zeros(mesh.n_nodes, bool)
    ni, nj, nk = mesh._unflat(np.arange(mesh.n_nodes), mesh.node_dims)
    npos = (ni, nj, nk)
    for d in range(3):
        if not mesh.periodic[d]:
            n_mask |= (npos[d] == 0) | (npos[d] == mesh.counts[d])
    return BoundaryMask(e_mask, n_mask)
