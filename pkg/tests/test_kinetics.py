import json
import math
from types import SimpleNamespace

import numpy as np
import pytest

from kdt.errors import InvalidInputError
from kdt.kinetics import (
    DIRECTIONS,
    KineticConfig,
    KineticState,
    mindistance,
    n_spread,
    nth_nearest_distance,
    select_moves,
    simulate,
    step,
    update_d,
)
from kdt.triangulation import build_initial

from conftest import uniform


def brute_mindistance(pts, N):
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(d, np.inf)
    return float(np.sort(d, axis=1)[:, N - 1].min())


def position_edges(tri):
    p = tri.coords
    return {tuple(sorted((tuple(p[a]), tuple(p[b])))) for a, b in tri.canonical_edge_set()}


LINE = [(0, 0), (1, 0), (2, 0), (3, 0)]


def test_nth_nearest_examples():
    assert nth_nearest_distance(LINE, (0, 0), 2) == 2.0
    grid = [(x, y) for x in range(5) for y in range(5)]
    assert nth_nearest_distance(grid, (2, 2), 1) == 1.0
    with pytest.raises(InvalidInputError):
        nth_nearest_distance(LINE, (0, 0), 4)


def test_nth_nearest_random(rng):
    pts = rng.random((50, 2))
    for i in range(50):
        others = sorted(math.dist(pts[i], q) for j, q in enumerate(pts) if j != i)
        assert nth_nearest_distance(pts, pts[i], 3) == pytest.approx(others[2], rel=1e-15)


def test_mindistance_examples(rng):
    assert mindistance([(0, 0), (3, 4)], 1) == 5.0
    assert mindistance(LINE, 2) == 1.0
    pts = rng.random((80, 2))
    closest = min(math.dist(p, q) for i, p in enumerate(pts) for q in pts[i + 1:])
    assert mindistance(pts, 1) == pytest.approx(closest, rel=1e-15)
    with pytest.raises(InvalidInputError):
        mindistance([(0, 0), (1, 1)], 2)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        KineticConfig(N=0)
    with pytest.raises(InvalidInputError):
        KineticConfig(mode="fast")
    with pytest.raises(InvalidInputError):
        KineticConfig(workers=0)
    assert KineticConfig(mode="serial-kinetic", workers=8).resolved_workers() == 1


def test_initial_d_is_mindistance():
    pts = uniform(500, 1)
    state = KineticState(pts, KineticConfig(threshold=16))
    assert state.d == brute_mindistance(pts, 5)


def test_d_unchanged_when_spreading():
    pts = uniform(60, 2)
    state = KineticState(pts, KineticConfig(N=2, threshold=100))
    d0 = state.d
    c = pts.mean(axis=0)
    state.coords = c + (pts - c) * 1.01
    assert update_d(state) == d0


def test_d_tracks_drifting_pair():
    pts = uniform(40, 5)
    state = KineticState(pts, KineticConfig(N=1, threshold=100))
    lowest = state.d
    target = state.coords[1].copy()
    for k in range(10):
        state.coords[0] = state.coords[0] + 0.2 * (target - state.coords[0])
        lowest = min(lowest, brute_mindistance(state.coords, 1))
        assert update_d(state) == lowest


def test_single_point_block_always_chosen():
    pts = [(0.1, 0.1), (0.2, 0.15), (0.15, 0.3), (0.9, 0.9), (0.12, 0.22), (0.3, 0.1)]
    state = KineticState(pts, KineticConfig(N=1, threshold=5, seed=4))
    lone = [b for b in state.qt.blocks if b.count == 1]
    assert lone
    for t in range(20):
        state.t = t
        chosen = {m.block: m.vertex for m in select_moves(state).moves}
        for b in lone:
            assert chosen[b.id] == b.owned[0]


def test_magnitudes_bounded():
    state = KineticState(uniform(1000, 6), KineticConfig(N=1, threshold=1, seed=2))
    mags = []
    for t in range(100):
        state.t = t
        mags.extend(m.mag for m in select_moves(state).moves)
    mags = np.array(mags)
    assert len(mags) >= 100_000
    assert np.all(mags > 0) and np.all(mags <= state.d)
    # uniform on (0, d]: mean close to d / 2
    assert abs(mags.mean() / state.d - 0.5) < 0.01


def test_move_plan_deterministic():
    pts = uniform(100, 99)

    def plan(mode, workers):
        state = KineticState(pts, KineticConfig(threshold=16, seed=99, mode=mode,
                                                workers=workers))
        return [[m.to_json() for m in step(state).moves] for _ in range(5)]

    first = plan("parallel-kinetic", 4)
    assert plan("parallel-kinetic", 4) == first
    assert plan("parallel-kinetic", 1) == first
    assert plan("serial-kinetic", None) == first


def test_n_spread_examples():
    fake = SimpleNamespace(
        qt=SimpleNamespace(blocks=[SimpleNamespace(owned=[0, 1]), SimpleNamespace(owned=[2])]),
        coords=np.array([(0.0, 0.0), (3.0, 4.0), (9.0, 9.0)]),
        min_distance=5.0,
        t=0,
    )
    assert n_spread(fake, 0) == 1.0
    assert n_spread(fake, 1) == 0.0


def test_spread_running_max():
    pts = uniform(400, 8)
    state = KineticState(pts, KineticConfig(threshold=24, seed=8))
    expect = {}
    for _ in range(20):
        md = brute_mindistance(state.coords, state.config.N)
        for b in state.qt.blocks:
            if b.count:
                own = state.coords[b.owned]
                diam = max(math.dist(p, q) for p in own for q in own)
                expect[b.key] = max(expect.get(b.key, -1.0), diam / md)
                assert n_spread(state, b.id) == pytest.approx(diam / md, rel=1e-12)
        step(state)
    assert state.spread_max.keys() == expect.keys()
    for k, v in expect.items():
        assert state.spread_max[k] == pytest.approx(v, rel=1e-12)


def test_zero_steps():
    pts = uniform(50, 3)
    state = simulate(pts, KineticConfig(threshold=8, steps=0))
    assert state.t == 0
    assert np.array_equal(state.coords, pts)
    assert state.d == brute_mindistance(pts, 5)
    assert state.tri.canonical_edge_set() == build_initial(pts).canonical_edge_set()


def test_four_points_one_block():
    pts = [(0.0, 0.0), (1.0, 0.1), (0.2, 1.0), (0.7, 0.6)]
    state = simulate(pts, KineticConfig(N=1, threshold=4, steps=1, seed=12))
    assert state.t == 1
    assert not np.array_equal(state.coords, np.array(pts))
    assert position_edges(state.tri) == position_edges(build_initial(state.coords))


def test_thousand_points_stay_delaunay():
    cfg = KineticConfig(threshold=32, steps=100, seed=5, validate="none")

    def check(state, m):
        rep = state.tri.is_delaunay()
        assert rep.ok and not rep.violations

    simulate(uniform(1000, 5), cfg, on_step=check)


def test_moves_obey_model():
    state = KineticState(uniform(600, 10), KineticConfig(threshold=20, seed=10, workers=2))
    for _ in range(30):
        before = state.coords.copy()
        d_prev = state.d
        m = step(state)
        assert m.d <= d_prev
        moved = set()
        for mv in m.moves:
            delta = state.coords[mv.vertex] - before[mv.vertex]
            assert np.count_nonzero(delta) == 1
            assert mv.dir in DIRECTIONS
            assert 0 < abs(delta).max() <= m.d
            assert mv.vertex not in moved
            moved.add(mv.vertex)
        assert m.transfers == sum(mv.block != mv.to_block for mv in m.moves)
        assert m.extras["max_contacts"] <= 1


def test_every_step_repartition():
    pts = uniform(500, 13)
    a = simulate(pts, KineticConfig(threshold=16, steps=15, seed=1, repartition="every-step"))
    b = simulate(pts, KineticConfig(threshold=16, steps=15, seed=1, mode="rebuild",
                                    repartition="every-step"))
    assert a.tri.canonical_edge_set() == b.tri.canonical_edge_set()
    assert a.tri.is_delaunay().ok


def test_modes_agree():
    pts = uniform(1000, 21)
    edges = set()
    for mode in ("parallel-kinetic", "serial-kinetic", "rebuild"):
        state = simulate(pts, KineticConfig(threshold=32, steps=100, seed=21, mode=mode))
        edges.add(tuple(state.tri.canonical_edge_set()))
    assert len(edges) == 1


def test_metrics_json_shape():
    state = KineticState(uniform(200, 2), KineticConfig(threshold=16, seed=2))
    doc = json.loads(json.dumps(step(state).to_json()))
    assert list(doc)[:10] == ["t", "d", "moves", "transfers", "hops_total", "edges_deleted",
                              "edges_inserted", "conflicts", "wall_ms", "mindistance"]
    assert set(doc["moves"][0]) == {"block", "vertex", "dir", "mag", "to_block"}
    assert doc["t"] == 0


def test_churn_matches_mesh_diff():
    state = KineticState(uniform(300, 30), KineticConfig(threshold=16, seed=30, workers=2))
    for _ in range(5):
        before = {tuple(e) for e in np.sort(state.tri.edges_array(), axis=1).tolist()}
        m = step(state)
        after = {tuple(e) for e in np.sort(state.tri.edges_array(), axis=1).tolist()}
        # batched churn counts every edge removed or created; net change is a lower bound
        assert m.edges_deleted >= len(before - after)
        assert m.edges_inserted >= len(after - before)
        assert m.edges_inserted - m.edges_deleted == len(after) - len(before)


def test_clustered_collisions_and_clamping():
    # many points pinned to the root boundary and a tight cluster
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.random((100, 2)) * 1e-3, [(0, 1), (1, 0), (1, 1), (0.5, 1)]])
    state = simulate(pts, KineticConfig(N=1, threshold=4, steps=40, seed=0))
    cx, cy, h = state.root
    assert np.all(np.abs(state.coords[:, 0] - cx) <= h)
    assert np.all(np.abs(state.coords[:, 1] - cy) <= h)
    assert len(np.unique(state.coords, axis=0)) == len(pts)
    assert position_edges(state.tri) == position_edges(build_initial(state.coords))
