"""Moving points over discrete time steps.

Each step computes the movement bound d, re-partitions if needed, lets every
non-empty block move one of its points along an axis by at most d, removes
all moved points from the mesh and then re-inserts them at their new
positions.  Mesh updates whose regions do not touch run in parallel; touching
ones run one after another in block order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import (
    DegenerateResultError,
    InternalConsistencyError,
    InvalidInputError,
)
from .partition import QuadTree, quad_tree_division, root_square, transfer_point
from .runtime import (
    comm_counters,
    default_workers,
    detect_conflicts,
    reduce_min,
    run_phase,
    split_even,
)
from .triangulation import GHOST, Triangulation, build_initial

__all__ = [
    "MODES",
    "DIRECTIONS",
    "KineticConfig",
    "Move",
    "MovePlan",
    "StepMetrics",
    "KineticState",
    "nth_nearest_distance",
    "mindistance",
    "mindistance_sq",
    "blocked_mindistance_sq",
    "update_d",
    "select_moves",
    "n_spread",
    "step",
    "simulate",
]

MODES = ("parallel-kinetic", "serial-kinetic", "rebuild")
DIRECTIONS = ("left", "right", "up", "down")
_AXIS = {"left": (0, -1.0), "right": (0, 1.0), "up": (1, 1.0), "down": (1, -1.0)}
_HALO_SLACK = 1e-9


@dataclass
class KineticConfig:
    N: int = 5
    threshold: int = 32
    steps: int = 100
    seed: int = 0
    mode: str = "parallel-kinetic"
    repartition: str = "lazy"
    routing: str = "tree"
    workers: int | None = None
    # "local": structure + per-edge check each step, "full": exhaustive, "none"
    validate: str = "local"

    def __post_init__(self):
        if self.N < 1:
            raise InvalidInputError("N must be positive")
        if self.threshold < 1:
            raise InvalidInputError("threshold must be positive")
        if self.steps < 0:
            raise InvalidInputError("steps must be non-negative")
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.repartition not in ("lazy", "every-step"):
            raise InvalidInputError(f"unknown repartition policy {self.repartition!r}")
        if self.routing not in ("tree", "direct"):
            raise InvalidInputError(f"unknown routing {self.routing!r}")
        if self.validate not in ("local", "full", "none"):
            raise InvalidInputError(f"unknown validation level {self.validate!r}")
        if self.workers is not None and self.workers < 1:
            raise InvalidInputError("workers must be at least 1")

    def resolved_workers(self) -> int:
        if self.mode == "serial-kinetic":
            return 1
        return self.workers if self.workers is not None else default_workers()


@dataclass
class Move:
    block: int
    vertex: int
    dir: str
    mag: float
    to_block: int
    src: tuple
    dst: tuple

    def to_json(self) -> dict:
        return {"block": self.block, "vertex": self.vertex, "dir": self.dir,
                "mag": self.mag, "to_block": self.to_block}


@dataclass
class MovePlan:
    moves: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # blocks whose move collided twice

    def __len__(self):
        return len(self.moves)


@dataclass
class StepMetrics:
    t: int
    d: float
    moves: list
    transfers: int = 0
    hops_total: int = 0
    edges_deleted: int = 0
    edges_inserted: int = 0
    conflicts: int = 0
    wall_ms: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "t": self.t,
            "d": self.d,
            "moves": [m.to_json() for m in self.moves],
            "transfers": self.transfers,
            "hops_total": self.hops_total,
            "edges_deleted": self.edges_deleted,
            "edges_inserted": self.edges_inserted,
            "conflicts": self.conflicts,
            "wall_ms": self.wall_ms,
        }
        out.update(self.extras)
        return out


# --- distances -----------------------------------------------------------


def _points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("non-finite coordinate")
    return pts


def nth_nearest_distance(points, p, N: int) -> float:
    """Distance from p to its N-th nearest other point of the collection."""
    pts = _points(points)
    px, py = float(p[0]), float(p[1])
    dx = pts[:, 0] - px
    dy = pts[:, 1] - py
    d2 = dx * dx + dy * dy
    same = np.flatnonzero(d2 == 0.0)
    if len(same):
        d2 = np.delete(d2, same[0])  # p itself is not its own neighbor
    if N < 1 or len(d2) < N:
        raise InvalidInputError(f"need at least {N} other points, have {len(d2)}")
    return math.sqrt(float(np.partition(d2, N - 1)[N - 1]))


def mindistance_sq(points, N: int) -> float:
    """Global single-pass min over p of the squared N-th neighbor distance."""
    pts = _points(points)
    n = len(pts)
    if N < 1 or n < N + 1:
        raise InvalidInputError(f"need at least {N + 1} points, have {n}")
    best = math.inf
    chunk = max(1, 4_000_000 // n)
    for s in range(0, n, chunk):
        blk = pts[s: s + chunk]
        dx = pts[None, :, 0] - blk[:, None, 0]
        dy = pts[None, :, 1] - blk[:, None, 1]
        d2 = dx * dx + dy * dy
        d2[np.arange(len(blk)), np.arange(s, s + len(blk))] = np.inf
        best = min(best, float(np.partition(d2, N - 1, axis=1)[:, N - 1].min()))
    return best


def mindistance(points, N: int) -> float:
    return math.sqrt(mindistance_sq(points, N))


def _square_gap_sq(qt: QuadTree, a: int, others: np.ndarray, cx, cy, hh) -> np.ndarray:
    b = qt.blocks[a]
    gx = np.maximum(0.0, np.abs(cx - b.cx) - (hh + b.half))
    gy = np.maximum(0.0, np.abs(cy - b.cy) - (hh + b.half))
    return gx * gx + gy * gy


def blocked_mindistance_sq(coords: np.ndarray, qt: QuadTree, N: int,
                           workers: int = 1) -> tuple:
    """Per-block squared N-th neighbor minimum (with halo), min-reduced.

    First pass: each block searches its own and its four-direction neighbors'
    points, which bounds the answer from above by U.  Second pass: each block
    searches every leaf within sqrt(U) of its square, which holds all N
    nearest neighbors of any point whose distance is at most sqrt(U), so the
    reduced minimum is exact.  Returns (min, per-block values, per-block
    squared diameters).
    """
    px = np.ascontiguousarray(coords[:, 0])
    py = np.ascontiguousarray(coords[:, 1])
    owned = [np.array(b.owned, dtype=np.int64) for b in qt.blocks]
    nb = len(qt.blocks)
    ids = np.arange(nb)

    def first(chunk):
        out = []
        for i in chunk:
            own = owned[i]
            if len(own) == 0:
                out.append((math.inf, 0.0))
                continue
            cand = np.concatenate([own] + [owned[j] for j in sorted(qt.blocks[i].neighbor_ids())])
            out.append((K.block_min_nth_sq(px, py, own, cand, N, math.inf),
                        K.max_sqdist_ids(px, py, own)))
        return out

    parts = split_even(ids, workers)
    res = [r for chunk in run_phase(parts, first, workers) for r in chunk]
    upper = reduce_min(v for v, _ in res)
    diam_sq = np.array([s for _, s in res])
    if not math.isfinite(upper):
        everyone = np.concatenate(owned)
        vals = np.array([K.block_min_nth_sq(px, py, owned[i], everyone, N, math.inf)
                         if len(owned[i]) else math.inf for i in ids])
        return reduce_min(vals), vals, diam_sq
    reach = (math.sqrt(upper) * (1.0 + _HALO_SLACK)) ** 2
    cx = np.array([b.cx for b in qt.blocks])
    cy = np.array([b.cy for b in qt.blocks])
    hh = np.array([b.half for b in qt.blocks])

    def second(chunk):
        out = []
        for i in chunk:
            own = owned[i]
            if len(own) == 0:
                out.append(math.inf)
                continue
            near = np.flatnonzero(_square_gap_sq(qt, i, ids, cx, cy, hh) <= reach)
            cand = np.concatenate([owned[j] for j in near])
            # anything above the first-pass bound cannot be the minimum
            out.append(K.block_min_nth_sq(px, py, own, cand, N, bound))
        return out

    bound = math.nextafter(upper, math.inf)
    vals = np.array([r for chunk in run_phase(parts, second, workers) for r in chunk])
    return reduce_min(vals), vals, diam_sq


# --- state ---------------------------------------------------------------


class KineticState:
    """Everything a run carries from one step to the next."""

    def __init__(self, points, config: KineticConfig):
        pts = _points(points)
        if len(pts) < config.N + 1:
            raise InvalidInputError(
                f"N={config.N} needs at least {config.N + 1} points, have {len(pts)}")
        self.config = config
        self.workers = config.resolved_workers()
        self.coords = pts.copy()
        self.n = len(pts)
        self.tri: Triangulation = build_initial(pts, seed=config.seed)
        self.t = 0
        probe = quad_tree_division(pts, config.threshold)
        d0 = math.sqrt(blocked_mindistance_sq(pts, probe, config.N, self.workers)[0])
        self.root = root_square(pts, pad=2.0 * d0)
        self.bounds = _clamp_bounds(self.root)
        self.qt = quad_tree_division(pts, config.threshold, root=self.root)
        self._sync_owners()
        self.d = d0
        self.min_distance = d0
        self.min_distance_t = 0
        self.occupied = set(map(tuple, pts.tolist()))
        self.spread_max: dict = {}  # block key -> running max of diam / mindistance
        self.spread_global = 0.0
        self.last_conflicts: dict = {}

    def _sync_owners(self):
        for b in self.qt.blocks:
            for v in b.owned:
                self.tri.set_owner(v, b.id)

    @property
    def seed_word(self) -> int:
        return self.config.seed & 0xFFFFFFFFFFFFFFFF

    def block_rng(self, block_id: int) -> np.random.Generator:
        return np.random.default_rng([self.seed_word, self.t, block_id])

    def snapshot(self) -> dict:
        return {
            "tri": self.tri.snapshot(),
            "coords": self.coords.copy(),
            "qt": self.qt,
            "owned": self.qt.copy_ownership(),
            "t": self.t,
            "d": self.d,
            "min_distance": self.min_distance,
            "min_distance_t": self.min_distance_t,
            "occupied": set(self.occupied),
            "spread_max": dict(self.spread_max),
            "spread_global": self.spread_global,
        }

    def restore(self, snap: dict):
        self.tri.restore(snap["tri"])
        self.coords = snap["coords"].copy()
        self.qt = snap["qt"]
        self.qt.restore_ownership(snap["owned"])
        self.t = snap["t"]
        self.d = snap["d"]
        self.min_distance = snap["min_distance"]
        self.min_distance_t = snap["min_distance_t"]
        self.occupied = set(snap["occupied"])
        self.spread_max = dict(snap["spread_max"])
        self.spread_global = snap["spread_global"]


def update_d(state: KineticState) -> float:
    """d <- min(d, mindistance of current positions), computed per block."""
    md2, _, diam_sq = blocked_mindistance_sq(state.coords, state.qt, state.config.N,
                                             state.workers)
    md = math.sqrt(md2)
    state.min_distance = md
    state.min_distance_t = state.t
    state.d = min(state.d, md)
    for b, s in zip(state.qt.blocks, diam_sq):
        if b.owned:
            val = math.sqrt(s) / md
            key = b.key
            if val > state.spread_max.get(key, -1.0):
                state.spread_max[key] = val
            state.spread_global = max(state.spread_global, val)
    return state.d


def n_spread(state: KineticState, block: int) -> float:
    """diam(block's points) / current global mindistance; 0 for a singleton."""
    b = state.qt.blocks[block]
    if len(b.owned) < 2:
        return 0.0
    own = np.array(b.owned, dtype=np.int64)
    diam = math.sqrt(K.max_sqdist_ids(np.ascontiguousarray(state.coords[:, 0]),
                                      np.ascontiguousarray(state.coords[:, 1]), own))
    md = state.min_distance
    if getattr(state, "min_distance_t", state.t) != state.t:
        # points moved since the last d-calculation
        md = math.sqrt(blocked_mindistance_sq(state.coords, state.qt, state.config.N,
                                              state.workers)[0])
    return diam / md


def _clamp_bounds(root: tuple) -> tuple:
    """Per-axis (lo, hi) that the root square's containment test accepts.

    ``c + h`` can round past the square, so the bounds are pulled inward.
    """
    cx, cy, h = root
    out = []
    for c in (cx, cy):
        lo, hi = c - h, c + h
        while abs(lo - c) > h:
            lo = math.nextafter(lo, c)
        while abs(hi - c) > h:
            hi = math.nextafter(hi, c)
        out.append((lo, hi))
    return tuple(out)


def _axis_target(state: KineticState, x: float, y: float, direction: str, mag: float):
    axis, sign = _AXIS[direction]
    lo, hi = state.bounds[axis]
    src = x if axis == 0 else y
    dst = min(max(src + sign * mag, lo), hi)
    # rounding of src + mag may overshoot d by an ulp
    while abs(dst - src) > state.d:
        dst = math.nextafter(dst, src)
    return ((dst, y) if axis == 0 else (x, dst)), abs(dst - src)


def select_moves(state: KineticState) -> MovePlan:
    """One random axis move of magnitude in (0, d] per non-empty block."""
    plan = MovePlan()
    taken: set = set()
    d = state.d
    for b in state.qt.blocks:
        if not b.owned:
            continue
        rng = state.block_rng(b.id)
        v = b.owned[int(rng.integers(len(b.owned)))]
        x, y = (float(c) for c in state.coords[v])
        direction = DIRECTIONS[int(rng.integers(4))]
        mag = d * (1.0 - rng.random())
        dst, actual = _axis_target(state, x, y, direction, mag)
        tries = 0
        while actual == 0.0 and tries < 16:
            # pinned against the root boundary; pick another direction
            direction = DIRECTIONS[int(rng.integers(4))]
            dst, actual = _axis_target(state, x, y, direction, mag)
            tries += 1
        ok = actual > 0.0 and dst not in state.occupied and dst not in taken
        if not ok and actual > 0.0:
            mag = d * (1.0 - rng.random())
            dst, actual = _axis_target(state, x, y, direction, mag)
            ok = actual > 0.0 and dst not in state.occupied and dst not in taken
        if not ok:
            plan.skipped.append(b.id)
            continue
        taken.add(dst)
        plan.moves.append(Move(b.id, int(v), direction, actual, state.qt.find_block(dst),
                               (x, y), dst))
    return plan


# --- mesh update ---------------------------------------------------------


def _concat_plans(parts: list, m_parts: list) -> tuple:
    """Join chunked CSR plans; ptr arrays are re-based onto global offsets."""
    ptr = [np.zeros(1, dtype=np.int64)]
    base = 0
    for p, m in zip(parts, m_parts):
        ptr.append(p[0][1:] + base)
        base += p[0][m]
    cols = [np.concatenate([p[k] for p in parts]) for k in range(1, len(parts[0]))]
    return (np.concatenate(ptr), *cols)


def _chunked(work, m: int, workers: int):
    chunks = split_even(np.arange(m), workers)
    parts = run_phase(chunks, work, workers)
    return _concat_plans(parts, [len(c) for c in chunks])


class _BatchDegenerate(Exception):
    pass


def _apply_moves_kinetic(state: KineticState, plan: MovePlan) -> dict:
    tri = state.tri
    workers = state.workers
    moves = plan.moves
    m = len(moves)
    out = {"edges_deleted": 0, "edges_inserted": 0, "conflicts": 0,
           "delete_groups": [], "insert_groups": []}
    if m == 0:
        return out
    movers = np.array([mv.vertex for mv in moves], dtype=np.int64)
    blocks = np.array([mv.block for mv in moves], dtype=np.int64)
    if tri.n_vertices - m < 3:
        raise _BatchDegenerate()

    # phase 4: stars of all movers against the pre-step mesh
    pts, tv, tn = tri._pts, tri._tv, tri._tn
    ptr, fst, flk, fo, fs, fe, delta, ok = _chunked(
        lambda c: K.plan_deletes(pts, tv, tn, tri._vtri, movers[c]), m, workers)
    if np.any(np.diff(ptr) < 3):
        raise InternalConsistencyError("broken vertex star")
    report, single, groups = detect_conflicts(tn, ptr, fst, blocks)
    if not np.all(ok[single]) or tri._nreal + int(delta[single].sum()) <= 0:
        raise _BatchDegenerate()
    out["delete_groups"] = report.groups

    # phase 5: deletions, disjoint stars in parallel
    sizes = np.zeros(m, dtype=np.int64)
    sizes[single] = np.diff(ptr)[single] - 2
    slab_ptr = np.concatenate([[0], np.cumsum(sizes)])
    slab = tri._alloc(int(slab_ptr[-1]))
    tv, tn, talive = tri._tv, tri._tn, tri._talive  # _alloc may grow the arrays
    ndel = np.zeros(m, dtype=np.int64)
    nins = np.zeros(m, dtype=np.int64)
    hints = np.full(m, -1, dtype=np.int64)
    run_phase(split_even(single, workers),
              lambda c: K.apply_deletes(tv, tn, talive, tri._valive, tri._vtri, movers, c,
                                        ptr, fst, flk, fo, fs, fe, slab_ptr, slab,
                                        ndel, nins, hints),
              workers)
    K.fix_vertex_hints(tv, tri._vtri, slab)
    for i in single:
        tri._release(fst[ptr[i]:ptr[i + 1]])
    tri._nreal += int(delta[single].sum())
    tri._n_alive -= len(single)
    for g in groups:
        for i in g:
            try:
                log = tri.delete(int(movers[i]))
            except DegenerateResultError as exc:
                raise _BatchDegenerate() from exc
            ndel[i] = log.n_deleted
            nins[i] = log.n_inserted
            hints[i] = log.created[0]
    out["edges_deleted"] += int(ndel.sum())
    out["edges_inserted"] += int(nins.sum())

    # phase 6: ownership follows the new position
    _transfer(state, moves)

    # phase 7: insertions against the post-deletion mesh
    for i in range(m):
        h = hints[i]
        if h < 0 or not tri._talive[h]:
            hints[i] = _alive_hint(tri, flk[ptr[i]:ptr[i + 1]])
    xs = np.array([mv.dst[0] for mv in moves])
    ys = np.array([mv.dst[1] for mv in moves])
    pts, tv, tn, talive = tri._pts, tri._tv, tri._tn, tri._talive
    iptr, fc, fa, fb, bo, bs, kinds, iok = _chunked(
        lambda c: K.plan_inserts(pts, tv, tn, talive, xs[c], ys[c], hints[c]), m, workers)
    if np.any(kinds == K.LOC_VERTEX) or np.any(kinds < 0):
        raise InternalConsistencyError("insertion point coincides with a vertex or was not located")
    report, single, groups = detect_conflicts(tn, iptr, fc, blocks)
    if not np.all(iok[single]):
        raise InternalConsistencyError("cavity is not a topological disk")
    out["insert_groups"] = report.groups
    sizes = np.zeros(m, dtype=np.int64)
    sizes[single] = np.diff(iptr)[single] + 2
    slab_ptr = np.concatenate([[0], np.cumsum(sizes)])
    slab = tri._alloc(int(slab_ptr[-1]))
    tv, tn, talive = tri._tv, tri._tn, tri._talive
    real_new = 0
    for i in single:
        lo, hi = iptr[i] + 2 * i, iptr[i + 1] + 2 * i + 2
        real_new += int(np.count_nonzero((fa[lo:hi] != GHOST) & (fb[lo:hi] != GHOST)))
        real_new -= int(np.count_nonzero(tv[fc[iptr[i]:iptr[i + 1]], 2] != GHOST))
    tri._pts[movers[single]] = np.column_stack([xs[single], ys[single]])
    tri._valive[movers[single]] = 1
    ndel[:] = 0
    nins[:] = 0
    run_phase(split_even(single, workers),
              lambda c: K.apply_inserts(tv, tn, talive, tri._vtri, movers, c, iptr, fc,
                                        fa, fb, bo, bs, slab_ptr, slab, ndel, nins),
              workers)
    K.fix_vertex_hints(tv, tri._vtri, slab)
    for i in single:
        tri._release(fc[iptr[i]:iptr[i + 1]])
    tri._nreal += real_new
    tri._n_alive += len(single)
    for g in groups:
        for i in g:
            start = hints[i] if tri._talive[hints[i]] else _alive_hint(tri, flk[ptr[i]:ptr[i + 1]])
            log = tri._insert_at(int(movers[i]), xs[i], ys[i], int(start))
            ndel[i] = log.n_deleted
            nins[i] = log.n_inserted
    out["edges_deleted"] += int(ndel.sum())
    out["edges_inserted"] += int(nins.sum())
    out["conflicts"] = len(out["delete_groups"]) + len(out["insert_groups"])
    return out


def _alive_hint(tri: Triangulation, link: np.ndarray) -> int:
    for w in link:
        if w != GHOST and tri._valive[w]:
            t = tri._vtri[w]
            if tri._talive[t]:
                return int(t)
    return tri._default_hint()


def _transfer(state: KineticState, moves: list) -> tuple:
    transfers = 0
    hops = 0
    for mv in moves:
        if mv.to_block != mv.block:
            hops += transfer_point(state.qt, mv.vertex, mv.block, mv.to_block,
                                   state.config.routing)
            transfers += 1
            state.tri.set_owner(mv.vertex, mv.to_block)
    return transfers, hops


def _edge_keys(tri: Triangulation) -> np.ndarray:
    e = tri.edges_array()
    return e[:, 0] * np.int64(tri._nv) + e[:, 1]


def _rebuild(state: KineticState, plan: MovePlan, churn: bool = True) -> dict:
    before = _edge_keys(state.tri) if churn else None
    _transfer(state, plan.moves)
    coords = state.coords.copy()
    for mv in plan.moves:
        coords[mv.vertex] = mv.dst
    owners = state.tri.owners.copy()
    state.tri = build_initial(coords, seed=state.config.seed)
    state.tri._owner[: len(owners)] = owners
    out = {"edges_deleted": 0, "edges_inserted": 0, "conflicts": 0,
           "delete_groups": [], "insert_groups": []}
    if churn:
        after = _edge_keys(state.tri)
        out["edges_deleted"] = len(np.setdiff1d(before, after, assume_unique=True))
        out["edges_inserted"] = len(np.setdiff1d(after, before, assume_unique=True))
    return out


def _validate(state: KineticState):
    tri = state.tri
    level = state.config.validate
    if level == "none":
        return
    if level == "full":
        rep = tri.is_delaunay()
        if not rep.ok:
            raise InternalConsistencyError(
                f"mesh invalid after step {state.t}: {len(rep.violations)} violations, "
                f"{rep.bad_orientation} bad orientations, {rep.bad_links} bad links")
        return
    bad_o, bad_l = K.check_structure(tri._pts, tri._tv, tri._tn, tri._talive, tri._used)
    bad_d = K.local_violations(tri._pts, tri._tv, tri._tn, tri._talive, tri._used)
    if bad_o or bad_l or bad_d:
        raise InternalConsistencyError(
            f"mesh invalid after step {state.t}: {bad_d} non-Delaunay edges, "
            f"{bad_o} bad orientations, {bad_l} bad links")


def step(state: KineticState) -> StepMetrics:
    """Advance one time step; on any failure the state is rolled back."""
    snap = state.snapshot()
    try:
        return _step(state)
    except BaseException:
        state.restore(snap)
        raise


def _step(state: KineticState) -> StepMetrics:
    cfg = state.config
    start = time.perf_counter()
    # phases 1-2: local d with halo, then min-reduce
    update_d(state)
    repartitioned = False
    if cfg.repartition == "every-step" or any(b.count > cfg.threshold for b in state.qt.blocks):
        alive = np.arange(state.n)
        state.qt = quad_tree_division(state.coords, cfg.threshold, root=state.root, ids=alive)
        state._sync_owners()
        repartitioned = True
    # phase 3
    plan = select_moves(state)
    comm = None
    fallback = False
    if cfg.mode == "rebuild":
        comm = comm_counters(plan.moves, state.qt)
        res = _rebuild(state, plan)
    else:
        mesh = state.tri.snapshot()
        owned = state.qt.copy_ownership()
        comm = comm_counters(plan.moves, state.qt)
        try:
            res = _apply_moves_kinetic(state, plan)
        except _BatchDegenerate:
            # too few or collinear survivors for delete-all-then-insert-all
            state.tri.restore(mesh)
            state.qt.restore_ownership(owned)
            res = _rebuild(state, plan)
            fallback = True
    transfers = sum(1 for mv in plan.moves if mv.to_block != mv.block)
    hops = sum(state.qt.hops(mv.block, mv.to_block, cfg.routing) for mv in plan.moves)
    for mv in plan.moves:
        state.occupied.discard(mv.src)
        state.occupied.add(mv.dst)
        state.coords[mv.vertex] = mv.dst
    _validate(state)
    state.tri.commit()
    wall = (time.perf_counter() - start) * 1000.0
    metrics = StepMetrics(
        t=state.t,
        d=state.d,
        moves=plan.moves,
        transfers=transfers,
        hops_total=hops,
        edges_deleted=res["edges_deleted"],
        edges_inserted=res["edges_inserted"],
        conflicts=res["conflicts"],
        wall_ms=wall,
        extras={
            "mindistance": state.min_distance,
            "blocks": len(state.qt.blocks),
            "skipped": plan.skipped,
            "repartitioned": repartitioned,
            "fallback": fallback,
            "conflict_groups": {"delete": res["delete_groups"], "insert": res["insert_groups"]},
            "max_contacts": comm["max_contacts"],
            "non_neighbor_transfers": comm["non_neighbor_transfers"],
            "spread_max": state.spread_global,
            "tree_depth": state.qt.depth,
        },
    )
    state.last_conflicts = metrics.extras["conflict_groups"]
    state.t += 1
    return metrics


def simulate(points, config: KineticConfig, on_step=None) -> KineticState:
    """Run ``config.steps`` steps; ``on_step(state, metrics)`` after each."""
    state = KineticState(points, config)
    for _ in range(config.steps):
        m = step(state)
        if on_step is not None:
            on_step(state, m)
    return state
