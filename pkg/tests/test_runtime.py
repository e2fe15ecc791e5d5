import threading

import numpy as np
import pytest

from kdt import _kernels as K
from kdt.errors import InvalidInputError
from kdt.kinetics import KineticConfig, KineticState, Move, step
from kdt.partition import quad_tree_division
from kdt.runtime import (
    THREADS_ENV,
    PhaseError,
    comm_counters,
    default_workers,
    detect_conflicts,
    reduce_min,
    run_phase,
    split_even,
)
from kdt.triangulation import build_initial

from conftest import uniform

UNIT = (0.5, 0.5, 0.5)


def test_reduce_min_examples(rng):
    assert reduce_min([5]) == 5
    assert reduce_min([3, 1, 2]) == 1
    vals = rng.random(64)
    acc = vals[0]
    for v in vals[1:]:
        acc = v if v < acc else acc
    assert reduce_min(vals) == acc
    with pytest.raises(InvalidInputError):
        reduce_min([])


@pytest.mark.parametrize("workers", [1, 2, 4, 8])
def test_run_phase_identity(workers):
    items = list(range(37))
    assert run_phase(items, lambda x: x, workers) == items


def test_run_phase_waits_for_all_items():
    seen = []
    lock = threading.Lock()

    def work(x):
        with lock:
            seen.append(x)
        if x == 3:
            raise RuntimeError("boom")
        return x

    with pytest.raises(PhaseError):
        run_phase(range(20), work, workers=4)
    assert sorted(seen) == list(range(20))


def test_run_phase_inline_error():
    with pytest.raises(PhaseError):
        run_phase([1, 0], lambda x: 1 / x, workers=1)


def test_split_even():
    parts = split_even(np.arange(10), 3)
    assert [len(p) for p in parts] == [4, 3, 3]
    assert np.array_equal(np.concatenate(parts), np.arange(10))
    assert len(split_even(np.arange(2), 8)) == 2


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert default_workers() == 3
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(InvalidInputError):
        default_workers()
    monkeypatch.delenv(THREADS_ENV)
    assert default_workers() >= 1


def _stars(tri, vs):
    ptr = [0]
    region = []
    for v in vs:
        st, _ = K.star(tri._tv, tri._tn, tri._vtri, v)
        region.extend(st.tolist())
        ptr.append(len(region))
    return np.array(ptr, dtype=np.int64), np.array(region, dtype=np.int64)


def test_far_apart_movers_do_not_conflict():
    pts = np.array([(x, y) for x in range(10) for y in range(10)], dtype=float)
    pts += np.random.default_rng(0).normal(0, 1e-3, pts.shape)
    tri = build_initial(pts)
    ptr, region = _stars(tri, [11, 88])
    report, single, groups = detect_conflicts(tri._tn, ptr, region, np.array([0, 5]))
    assert report.count == 0 and list(single) == [0, 1] and not groups


def test_adjacent_movers_conflict():
    pts = np.array([(x, y) for x in range(10) for y in range(10)], dtype=float)
    pts += np.random.default_rng(0).normal(0, 1e-3, pts.shape)
    tri = build_initial(pts)
    # 44 and 45 are grid neighbors, so their stars share triangles
    ptr, region = _stars(tri, [44, 45, 99])
    report, single, groups = detect_conflicts(tri._tn, ptr, region, np.array([2, 3, 7]))
    assert report.count == 1
    assert report.groups == [[2, 3]]
    assert report.singletons == [7]
    assert [list(g) for g in groups] == [[0, 1]]


def test_single_mover_never_conflicts():
    tri = build_initial(uniform(30, 2))
    ptr, region = _stars(tri, [5])
    report, single, _ = detect_conflicts(tri._tn, ptr, region, np.array([0]))
    assert report.count == 0 and list(single) == [0]
    empty = detect_conflicts(tri._tn, np.zeros(1, dtype=np.int64),
                             np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    assert empty[0].count == 0


def _qt():
    pts = [(0.1, 0.1), (0.9, 0.1), (0.1, 0.9), (0.9, 0.9), (0.2, 0.2)]
    return quad_tree_division(pts, 2, root=UNIT)


def _move(block, to_block, v=0):
    return Move(block, v, "right", 0.1, to_block, (0.0, 0.0), (0.1, 0.0))


def test_comm_counters_no_transfers():
    c = comm_counters([_move(0, 0), _move(1, 1)], _qt())
    assert c["max_contacts"] == 0 and c["neighbor_contacts"] == {}
    assert c["non_neighbor_transfers"] == 0


def test_comm_counters_one_transfer():
    c = comm_counters([_move(0, 1), _move(3, 3)], _qt())
    assert c["neighbor_contacts"] == {0: 1}
    assert c["max_contacts"] == 1
    # SW to NE is diagonal, not a neighbor link
    c = comm_counters([_move(0, 3)], _qt())
    assert c["non_neighbor_transfers"] == 1


def test_failed_step_rolls_back(monkeypatch):
    import kdt.kinetics as kin

    state = KineticState(uniform(300, 4), KineticConfig(threshold=16, seed=3, workers=2))
    step(state)
    before = (state.coords.copy(), state.t, state.d, state.tri.canonical_edge_set(),
              state.qt.copy_ownership(), dict(state.spread_max))
    real = kin._apply_moves_kinetic

    def broken(st, plan):
        real(st, plan)  # mutate the mesh first, then fail
        raise PhaseError("worker failed")

    monkeypatch.setattr(kin, "_apply_moves_kinetic", broken)
    with pytest.raises(PhaseError):
        step(state)
    after = (state.coords, state.t, state.d, state.tri.canonical_edge_set(),
             state.qt.copy_ownership(), state.spread_max)
    assert np.array_equal(before[0], after[0])
    assert before[1:] == after[1:]
    monkeypatch.undo()
    # the restored state keeps working
    step(state)
    assert state.tri.is_delaunay().ok
