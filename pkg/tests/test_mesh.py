import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxcloak.config import from_preset
from maxcloak.mesh import boundary_edges, build_mesh, make_predicate, tag_regions

counts_st = st.tuples(*[st.integers(1, 4)] * 3)
periodic_st = st.tuples(*[st.booleans()] * 3)


def test_counts_2x2x2_nonperiodic():
    m = build_mesh((2, 2, 2), (1.0, 1.0, 1.0))
    # tensor-product formulas: (n+1)^3, 3 n (n+1)^2, 3 n^2 (n+1), n^3
    assert (m.n_nodes, m.n_edges, m.n_faces, m.n_cells) == (27, 54, 36, 8)


def test_torus_single_cell():
    m = build_mesh((1, 1, 1), (1.0, 1.0, 1.0), periodic=(True, True, True))
    assert (m.n_nodes, m.n_edges, m.n_faces, m.n_cells) == (1, 3, 3, 1)


def test_pseudo_1d_layout():
    m = build_mesh((1, 1, 4), (1.0, 1.0, 1.0), periodic=(True, True, False))
    assert m.n_cells == 4
    # nodes: one per z level; z-edges: 4; x/y edges: 5 each
    assert m.n_nodes == 5
    assert m.n_edges == 5 + 5 + 4


@given(counts_st, periodic_st)
@settings(max_examples=60, deadline=None)
def test_entity_counts_closed_form(counts, periodic):
    m = build_mesh(counts, (0.5, 1.0, 2.0), periodic=periodic)
    node = [n if p else n + 1 for n, p in zip(counts, periodic)]
    cell = list(counts)
    assert m.n_nodes == np.prod(node)
    assert m.n_edges == sum(cell[a] * np.prod([node[d] for d in range(3) if d != a]) for a in range(3))
    assert m.n_faces == sum(node[a] * np.prod([cell[d] for d in range(3) if d != a]) for a in range(3))
    assert m.n_cells == np.prod(cell)
    if all(periodic):
        assert m.n_nodes - m.n_edges + m.n_faces - m.n_cells == 0


@given(counts_st, periodic_st)
@settings(max_examples=40, deadline=None)
def test_numbering_is_bijective(counts, periodic):
    m = build_mesh(counts, (1.0, 1.0, 1.0), periodic=periodic)
    for n, multi, index in ((m.n_edges, m.edge_multi_index, m.edge_index),
                            (m.n_faces, m.face_multi_index, m.face_index)):
        a, i, j, k = multi(np.arange(n))
        back = np.empty(n, dtype=np.int64)
        for d in range(3):
            sel = a == d
            back[sel] = index(d, i[sel], j[sel], k[sel])
        assert np.array_equal(back, np.arange(n))
    i, j, k = m.cell_multi_index(np.arange(m.n_cells))
    assert np.array_equal(m.cell_index(i, j, k), np.arange(m.n_cells))


def test_invalid_mesh_rejected():
    with pytest.raises(ValueError):
        build_mesh((0, 1, 1), (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        build_mesh((1, 1, 1), (1.0, -1.0, 1.0))


def test_boundary_2x2x2_has_48_edges():
    m = build_mesh((2, 2, 2), (1.0, 1.0, 1.0))
    bm = boundary_edges(m)
    # brute force: an edge lies in a boundary plane iff both endpoints share a boundary coordinate
    mids = m.edge_midpoints()
    a, *_ = m.edge_multi_index(np.arange(m.n_edges))
    expect = np.zeros(m.n_edges, bool)
    for d in range(3):
        on = np.isclose(mids[:, d], 0.0) | np.isclose(mids[:, d], 2.0)
        expect |= on & (a != d)
    assert bm.n_boundary == 48
    assert np.array_equal(bm.edges, expect)


def test_boundary_fully_periodic_empty():
    m = build_mesh((2, 3, 1), (1.0, 1.0, 1.0), periodic=(True, True, True))
    assert boundary_edges(m).n_boundary == 0


def test_boundary_pseudo_1d():
    m = build_mesh((1, 1, 4), (1.0, 1.0, 1.0), periodic=(True, True, False))
    bm = boundary_edges(m)
    a, i, j, k = m.edge_multi_index(np.flatnonzero(bm.edges))
    assert set(a.tolist()) == {0, 1}
    assert set(k.tolist()) == {0, 4}
    assert bm.n_boundary == 4


def test_example1_source_has_four_cells():
    cfg = from_preset("example1")
    g = cfg.data["geometry"]
    m = build_mesh(tuple(g["counts"]), tuple(g["spacing"]), tuple(g["origin"]), tuple(g["periodic"]))
    r = tag_regions(m, cfg.data["regions"])
    assert r.count("source") == 4


def test_empty_predicate_gives_empty_region():
    m = build_mesh((3, 3, 3), (1.0, 1.0, 1.0))
    r = tag_regions(m, {"source": {"type": "none"}, "control": None})
    assert r.count("source") == 0 and r.count("control") == 0
    far = tag_regions(m, {"observation": {"type": "box", "lo": [10, 10, 10], "hi": [11, 11, 11]}})
    assert far.count("observation") == 0 and far.warnings


@given(st.floats(0.5, 9.0), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
@settings(max_examples=30, deadline=None)
def test_disk_count_matches_brute_force(r, cx, cy):
    m = build_mesh((20, 20, 1), (1.0, 1.0, 1.0), origin=(-10.0, -10.0, 0.0), periodic=(False, False, True))
    reg = tag_regions(m, {"control": {"type": "ball", "center": [cx, cy, 0.0], "radius": r, "axes": [0, 1]}})
    n = 0
    for i in range(20):
        for j in range(20):
            x, y = -10.0 + i + 0.5, -10.0 + j + 0.5
            n += (x - cx) ** 2 + (y - cy) ** 2 <= r * r
    assert reg.count("control") == n


def test_region_edges_by_adjacency_scan(rng):
    m = build_mesh((3, 2, 2), (1.0, 1.0, 1.0))
    cells = rng.random(m.n_cells) < 0.4
    reg = tag_regions(m, {"control": lambda p: cells})
    em = reg.edge_mask("control")
    mids = m.edge_midpoints()
    centers = m.cell_centers()
    for e in range(m.n_edges):
        # an edge bounds a cell iff its midpoint is within half a cell width in every axis
        adj = np.all(np.abs(centers - mids[e]) <= 0.5 + 1e-12, axis=1)
        assert em[e] == bool(np.any(cells & adj))


def test_predicate_combinators():
    p = make_predicate({"type": "and", "terms": [
        {"type": "ball", "center": [0, 0, 0], "radius": 2.0, "inner_radius": 1.0},
        {"type": "box", "lo": [None, None, None], "hi": [None, None, 0.0]}]})
    pts = np.array([[0, 0, -1.5], [0, 0, 1.5], [0, 0, -0.5], [0, 0, -2.5]], float)
    assert p(pts).tolist() == [True, False, False, False]
    poly = make_predicate({"type": "polygon", "vertices": [[0, 0], [1, 0], [0, 1]], "axes": [0, 1]})
    assert poly(np.array([[0.2, 0.2, 5.0], [0.8, 0.8, 0.0]])).tolist() == [True, False]
    with pytest.raises(ValueError):
        make_predicate({"type": "hexagon"})
