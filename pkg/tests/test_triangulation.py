import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kdt.errors import (
    DegenerateInputError,
    DegenerateResultError,
    DuplicatePointError,
    InvalidInputError,
    InvalidVertexError,
    TooFewPointsError,
)
from kdt.oracle import brute_force_delaunay, hull_size, oracle_edge_set
from kdt.triangulation import (
    Triangulation,
    build_initial,
    dump_json,
    dumps,
    load_json,
    orientation_of,
)

from conftest import uniform

TRI = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]


def position_edges(tri):
    """Canonical edges keyed by coordinates, so vertex numbering does not matter."""
    p = tri.coords
    return {tuple(sorted((tuple(p[a]), tuple(p[b])))) for a, b in tri.canonical_edge_set()}


def rebuilt_edges(tri):
    return position_edges(build_initial(tri.coords[tri.vertex_ids]))


def assert_euler(tri):
    n = tri.n_vertices
    h = tri.hull_size()
    assert tri.n_real == 2 * n - 2 - h
    assert len(tri.triangles()) == tri.n_real
    assert tri.n_ghost == h


# --- build_initial -------------------------------------------------------


def test_single_triangle():
    tri = build_initial(TRI)
    assert tri.n_real == 1
    assert tri.n_ghost == 3
    assert tri.is_delaunay().ok


def test_interior_point_splits():
    tri = build_initial([(0, 0), (4, 0), (2, 3), (2, 1)])
    assert tri.n_real == 3
    assert_euler(tri)


def test_twenty_points_match_oracle():
    pts = uniform(20, 42)
    tri = build_initial(pts)
    got = {tuple(sorted(map(int, t))) for t in tri.triangles()}
    assert got == set(brute_force_delaunay(pts))


@pytest.mark.parametrize("seed", range(5))
def test_build_independent_of_insertion_order(seed):
    pts = uniform(300, 9)
    assert build_initial(pts, seed=seed).canonical_edge_set() == \
        build_initial(pts, seed=seed + 100).canonical_edge_set()


def test_build_errors():
    with pytest.raises(TooFewPointsError):
        build_initial([(0, 0), (1, 1)])
    with pytest.raises(DegenerateInputError):
        build_initial([(0, 0), (1, 1), (2, 2), (3, 3)])
    with pytest.raises(DuplicatePointError) as exc:
        build_initial([(0, 0), (1, 0), (0, 1), (1, 0)])
    assert exc.value.indices == (1, 3)
    with pytest.raises(InvalidInputError):
        build_initial([(0, 0), (1, 0), (np.nan, 1)])


def test_grid_is_canonical():
    pts = np.array([(x, y) for x in range(12) for y in range(9)], dtype=float)
    a = build_initial(pts, seed=1).canonical_edge_set()
    n = len(pts)
    # same point set, reversed numbering and another insertion order
    b = build_initial(pts[::-1].copy(), seed=2).canonical_edge_set()
    b = sorted(tuple(sorted((n - 1 - u, n - 1 - v))) for u, v in b)
    assert a == b
    # each unit cell is cut by exactly one diagonal
    assert len(a) == 11 * 9 + 12 * 8 + 11 * 8


def test_small_grid_matches_oracle():
    pts = np.array([(x, y) for y in range(4) for x in range(5)], dtype=float)
    assert build_initial(pts).canonical_edge_set() == oracle_edge_set(pts)


# --- locate --------------------------------------------------------------


def test_locate_examples():
    tri = build_initial(TRI)
    assert tri.locate((0.2, 0.2)).kind == "in_triangle"
    r = tri.locate((0.5, 0.0))
    assert r.kind == "on_edge"
    a, b, c = tri.triangle(r.triangle)
    edge = {(a, b, c)[k] for k in range(3) if k != r.edge}
    assert edge == {0, 1}
    out = tri.locate((5.0, 5.0))
    assert out.kind == "outside_hull"
    assert tri.is_ghost(out.triangle)
    v = tri.locate((0.0, 1.0))
    assert v.kind == "on_vertex" and v.vertex == 2


def test_locate_from_every_hint(rng):
    pts = rng.random((200, 2))
    tri = build_initial(pts)
    q = (0.37, 0.61)
    kinds = {tri.locate(q, hint=t).triangle for t in tri.triangle_ids()}
    assert len(kinds) == 1


# --- insert --------------------------------------------------------------


def test_insert_centroid():
    tri = build_initial(TRI)
    v, log = tri.insert((1 / 3, 1 / 3))
    assert v == 3
    assert tri.n_real == 3
    assert len([t for t in log.removed if not tri.is_ghost(t)]) <= 1
    real_removed = 1
    real_created = sum(1 for t in log.created if not tri.is_ghost(t))
    assert real_removed == 1 and real_created == 3
    assert log.n_deleted == 0 and log.n_inserted == 3


def test_insert_cocircular_uses_canonical_diagonal():
    tri = build_initial(TRI)
    tri.insert((1.0, 1.0))
    assert tri.n_real == 2
    pts = TRI + [(1.0, 1.0)]
    assert tri.canonical_edge_set() == oracle_edge_set(pts)
    # the fan starts at the smallest point (0, 0)
    assert (0, 3) in tri.canonical_edge_set()


def test_insert_far_outside(rng):
    pts = rng.random((40, 2))
    tri = build_initial(pts)
    tri.insert((10.0, -7.0))
    assert tri.is_delaunay().ok
    assert position_edges(tri) == rebuilt_edges(tri)
    assert_euler(tri)


def test_insert_duplicate():
    tri = build_initial(TRI)
    with pytest.raises(DuplicatePointError):
        tri.insert((1.0, 0.0))
    assert tri.is_delaunay().ok
    assert tri.n_vertices == 3


# --- delete --------------------------------------------------------------


def test_delete_degree_three():
    tri = build_initial([(0, 0), (4, 0), (2, 3), (2, 1)])
    tri.delete(3)
    assert tri.n_real == 1
    assert tri.is_delaunay().ok


def test_delete_interior_degree_k(rng):
    pts = rng.random((60, 2))
    tri = build_initial(pts)
    on_hull = {u for t in tri.triangle_ids(ghosts=True) if tri.is_ghost(t)
               for u in tri.triangle(t)[:2]}
    tv = tri.triangles()
    for v in sorted(set(range(60)) - on_hull)[:10]:
        t = tri.copy()
        deg = int(np.count_nonzero((tv == v).any(axis=1)))
        log = t.delete(v)
        assert len(log.created) == deg - 2
        assert t.n_real == tri.n_real - 2
        assert t.is_delaunay().ok


def test_delete_hull_vertex_matches_rebuild():
    pts = uniform(10, 7)
    tri = build_initial(pts)
    g = next(t for t in tri.triangle_ids(ghosts=True) if tri.is_ghost(t))
    v = tri.triangle(g)[0]
    tri.delete(v)
    assert tri.is_delaunay().ok
    assert position_edges(tri) == position_edges(build_initial(np.delete(pts, v, axis=0)))


def test_delete_errors():
    tri = build_initial([(0, 0), (4, 0), (2, 3), (2, 1)])
    with pytest.raises(InvalidVertexError):
        tri.delete(17)
    tri.delete(3)
    with pytest.raises(InvalidVertexError):
        tri.delete(3)
    with pytest.raises(DegenerateResultError):
        tri.delete(0)
    # a failed delete leaves the mesh untouched
    assert tri.n_real == 1 and tri.is_delaunay().ok


def test_delete_leaving_collinear():
    tri = build_initial([(0, 0), (1, 0), (2, 0), (1, 1)])
    with pytest.raises(DegenerateResultError):
        tri.delete(3)
    assert tri.is_delaunay().ok and tri.n_vertices == 4


def test_mass_delete_to_three(rng):
    pts = rng.random((30, 2))
    tri = build_initial(pts)
    for v in range(27):
        tri.delete(v)
        tri.commit()
    assert len(tri.canonical_edge_set()) == 3
    assert tri.n_real == 1


# --- move_point ----------------------------------------------------------


def test_move_to_own_position(rng):
    pts = rng.random((50, 2))
    tri = build_initial(pts)
    before = tri.canonical_edge_set()
    tri.move_point(7, tuple(pts[7]))
    assert tri.canonical_edge_set() == before


def test_move_tiny(rng):
    pts = rng.random((50, 2))
    tri = build_initial(pts)
    tri.move_point(11, (pts[11, 0] + 1e-9, pts[11, 1]))
    assert tri.is_delaunay().ok
    assert position_edges(tri) == rebuilt_edges(tri)


def test_move_across_neighborhood():
    pts = uniform(30, 3)
    tri = build_initial(pts)
    tri.move_point(4, (pts[4, 0] + 0.4, 1.3))
    assert tri.is_delaunay().ok
    assert position_edges(tri) == rebuilt_edges(tri)
    assert tri.point(4) == (pts[4, 0] + 0.4, 1.3)


def test_move_onto_other_vertex():
    tri = build_initial(uniform(20, 1))
    with pytest.raises(DuplicatePointError):
        tri.move_point(0, tri.point(5))
    assert tri.is_delaunay().ok and tri.n_vertices == 20


# --- randomized mixed operations ----------------------------------------


def _mixed_run(seed, ops=1000, n0=100):
    rng = np.random.default_rng(seed)
    tri = build_initial(rng.random((n0, 2)), seed=seed)
    alive = list(range(n0))
    for i in range(ops):
        r = rng.random()
        if r < 0.35 or len(alive) < 10:
            v, log = tri.insert(tuple(rng.random(2)))
            alive.append(v)
        elif r < 0.65:
            v = alive.pop(int(rng.integers(len(alive))))
            log = tri.delete(v)
        else:
            v = alive[int(rng.integers(len(alive)))]
            p = tri.point(v)
            tri.move_point(v, (p[0] + rng.normal(0, 0.05), p[1] + rng.normal(0, 0.05)))
            continue
        # a single insert or delete never removes and re-adds the same edge
        assert not set(log.edges_deleted) & set(log.edges_inserted)
        if i % 50 == 0:
            tri.commit()
    return tri


@pytest.mark.parametrize("seed", range(50))
def test_mixed_operations(seed):
    tri = _mixed_run(seed)
    rep = tri.is_delaunay()
    assert rep.ok, rep
    assert_euler(tri)
    assert position_edges(tri) == rebuilt_edges(tri)


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=3, max_size=30,
                unique=True))
def test_lattice_points(cells):
    pts = np.array(cells, dtype=float)
    try:
        tri = build_initial(pts)
    except DegenerateInputError:
        return
    assert tri.is_delaunay().ok
    assert_euler(tri)
    assert tri.canonical_edge_set() == oracle_edge_set(pts)
    assert hull_size(pts) >= tri.hull_size()


# --- validation, edges, dumps -------------------------------------------


def test_flipped_diagonal_has_two_violations():
    pts = [(0.0, 0.0), (2.0, 0.0), (2.2, 1.5), (0.0, 1.0)]
    good = build_initial(pts)
    assert good.is_delaunay().ok
    edges = good.canonical_edge_set()
    diag = next(e for e in edges if e in ((0, 2), (1, 3)))
    if diag == (0, 2):
        bad = [(0, 1, 3), (1, 2, 3)]
    else:
        bad = [(0, 1, 2), (0, 2, 3)]
    rep = Triangulation.from_triangles(pts, bad).is_delaunay()
    assert not rep.ok
    assert len(rep.violations) == 2
    assert len({t for t, _ in rep.violations}) == 2


def test_single_triangle_edges():
    assert build_initial(TRI).canonical_edge_set() == [(0, 1), (0, 2), (1, 2)]


def test_square_has_five_edges():
    tri = build_initial([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert len(tri.canonical_edge_set()) == 5


def test_from_triangles_round_trip(rng):
    pts = rng.random((80, 2))
    tri = build_initial(pts)
    doc = dump_json(tri)
    verts, tris = load_json(json.dumps(doc))
    again = Triangulation.from_triangles(verts, tris)
    assert again.is_delaunay().ok
    assert again.canonical_edge_set() == tri.canonical_edge_set()
    assert np.array_equal(verts, pts)
    assert all(orientation_of(again, t) == 1 for t in again.triangle_ids())


def test_dumps_extra_and_bad_json():
    tri = build_initial(TRI)
    doc = json.loads(dumps(tri, t=4))
    assert doc["t"] == 4 and doc["triangles"] == [[0, 1, 2]]
    with pytest.raises(InvalidInputError):
        load_json("{not json")
    with pytest.raises(InvalidInputError):
        load_json({"vertices": []})


def test_from_triangles_rejects_non_manifold():
    pts = [(0, 0), (1, 0), (0, 1), (1, 1)]
    with pytest.raises(InvalidInputError):
        Triangulation.from_triangles(pts, [(0, 1, 2), (0, 1, 3)])
    with pytest.raises(InvalidInputError):
        Triangulation.from_triangles(pts, [(0, 1, 2)])


def test_snapshot_restore(rng):
    tri = build_initial(rng.random((40, 2)))
    snap = tri.snapshot()
    before = tri.canonical_edge_set()
    tri.insert((0.5, 0.5))
    tri.delete(3)
    tri.restore(snap)
    assert tri.canonical_edge_set() == before
    assert tri.n_vertices == 40


def test_ids_not_reused_before_commit(rng):
    tri = build_initial(rng.random((40, 2)))
    log1 = tri.delete(5)
    _, log2 = tri.insert((0.31, 0.77))
    assert not set(log1.removed) & set(log2.created)
    tri.commit()
    _, log3 = tri.insert((0.61, 0.17))
    assert set(log3.created) & (set(log1.removed) | set(log2.removed))


def test_difflog_edges_match_mesh(rng):
    tri = build_initial(rng.random((60, 2)))
    before = set(map(tuple, tri.edges_array().tolist()))
    before = {tuple(sorted(e)) for e in before}
    log = tri.move_point(10, (0.5, 0.5))
    after = {tuple(sorted(e)) for e in map(tuple, tri.edges_array().tolist())}
    assert set(log.edges_deleted) == before - after
    assert set(log.edges_inserted) == after - before
