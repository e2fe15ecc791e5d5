"""Delaunay mesh store with incremental insertion and vertex deletion.

The mesh is triangle based: every triangle keeps its three vertices in
counter-clockwise order and the three triangles across its edges.  The outside
of the convex hull is covered by *ghost* triangles that share one symbolic
vertex at infinity (``GHOST``), so hull changes need no special casing and no
bounding super-triangle is ever introduced.

Vertex ids are dense and stable: :meth:`Triangulation.move_point` keeps the id
of the moved vertex.  Triangle ids freed by a mutation are only recycled after
:meth:`Triangulation.commit`, so the ids recorded in a :class:`DiffLog` stay
meaningful until the caller closes the current time step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .errors import (
    DegenerateInputError,
    DegenerateResultError,
    DuplicatePointError,
    InternalConsistencyError,
    InvalidInputError,
    InvalidVertexError,
    TooFewPointsError,
)
from .geometry import orient2d_sign

GHOST = K.GHOST

__all__ = [
    "GHOST",
    "DiffLog",
    "LocateResult",
    "ValidationReport",
    "Triangulation",
    "build_initial",
    "brio_order",
    "dump_json",
    "load_json",
]


class LocateResult(NamedTuple):
    """Where a query point sits in the mesh.

    ``kind`` is one of ``"in_triangle"``, ``"on_edge"``, ``"on_vertex"`` or
    ``"outside_hull"``.  For ``on_edge`` the edge is the one opposite slot
    ``edge`` of ``triangle``; for ``outside_hull`` the triangle is the ghost
    whose hull edge sees the point.
    """

    kind: str
    triangle: int
    edge: int = -1
    vertex: int = -1


_KIND_NAMES = {
    K.LOC_IN: "in_triangle",
    K.LOC_EDGE: "on_edge",
    K.LOC_VERTEX: "on_vertex",
    K.LOC_OUTSIDE: "outside_hull",
}


@dataclass
class DiffLog:
    """Triangles and real edges removed/created by one or more mutations."""

    removed: list = field(default_factory=list)
    created: list = field(default_factory=list)
    edges_deleted: list = field(default_factory=list)
    edges_inserted: list = field(default_factory=list)

    @property
    def n_deleted(self) -> int:
        return len(self.edges_deleted)

    @property
    def n_inserted(self) -> int:
        return len(self.edges_inserted)

    def extend(self, other: "DiffLog") -> "DiffLog":
        self.removed.extend(other.removed)
        self.created.extend(other.created)
        self.edges_deleted.extend(other.edges_deleted)
        self.edges_inserted.extend(other.edges_inserted)
        return self


@dataclass
class ValidationReport:
    ok: bool
    violations: list
    bad_orientation: int = 0
    bad_links: int = 0

    def __bool__(self):
        return self.ok


def _tri_edges(tv, ids):
    out = set()
    for t in ids:
        a, b, c = (int(x) for x in tv[t])
        for u, w in ((a, b), (b, c), (c, a)):
            if u != GHOST and w != GHOST:
                out.add((min(u, w), max(u, w)))
    return out


def _check_points(points) -> np.ndarray:
    pts = np.array(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        pts = pts.reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("coordinates must be finite")
    return pts


def find_duplicate(pts: np.ndarray):
    """First pair (i, j), i < j, of coincident rows, or None."""
    if len(pts) < 2:
        return None
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    s = pts[order]
    same = np.flatnonzero((s[1:, 0] == s[:-1, 0]) & (s[1:, 1] == s[:-1, 1]))
    if len(same) == 0:
        return None
    i, j = sorted((int(order[same[0]]), int(order[same[0] + 1])))
    return i, j


def brio_order(pts: np.ndarray, seed: int = 0) -> np.ndarray:
    """Biased randomized insertion order: random rounds, Hilbert-sorted within.

    Each point lands in round r with probability 2^-(r+1) (last round
    largest), which keeps the randomized analysis while making consecutive
    insertions spatially close so the location walk stays short.
    """
    n = len(pts)
    rng = np.random.default_rng(seed)
    rounds = np.minimum(rng.geometric(0.5, size=n) - 1, 30)
    lo = pts.min(axis=0)
    side = float(np.max(pts.max(axis=0) - lo))
    keys = K.hilbert_keys(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]),
                          float(lo[0]), float(lo[1]), side, 16)
    tiebreak = rng.permutation(n)
    return np.lexsort((tiebreak, keys, -rounds)).astype(np.int64)


class Triangulation:
    """Mutable Delaunay triangulation; construct with :func:`build_initial`."""

    def __init__(self, pts, tv, tn, talive, vtri, owner=None):
        nv = len(pts)
        self._pts = pts
        self._valive = np.ones(nv, dtype=np.uint8)
        self._vtri = vtri
        self._owner = np.zeros(nv, dtype=np.int64) if owner is None else owner
        self._nv = nv
        self._tv = tv
        self._tn = tn
        self._talive = talive
        self._used = len(tv)
        self._free: list = []
        self._pending: list = []
        self._nreal = int(np.count_nonzero(tv[:, 2] != GHOST))
        self._n_alive = nv

    # -- storage ---------------------------------------------------------

    def _ensure_tri_capacity(self, need: int):
        cap = self._tv.shape[0]
        if need <= cap:
            return
        new = max(need, 2 * cap, 64)
        tv = np.full((new, 3), -2, dtype=np.int64)
        tn = np.full((new, 3), -2, dtype=np.int64)
        ta = np.zeros(new, dtype=np.uint8)
        tv[:cap] = self._tv
        tn[:cap] = self._tn
        ta[:cap] = self._talive
        self._tv, self._tn, self._talive = tv, tn, ta

    def _ensure_vertex_capacity(self, need: int):
        cap = self._pts.shape[0]
        if need <= cap:
            return
        new = max(need, 2 * cap)
        pts = np.zeros((new, 2))
        pts[:cap] = self._pts
        va = np.zeros(new, dtype=np.uint8)
        va[:cap] = self._valive
        vt = np.full(new, -1, dtype=np.int64)
        vt[:cap] = self._vtri
        ow = np.zeros(new, dtype=np.int64)
        ow[:cap] = self._owner
        self._pts, self._valive, self._vtri, self._owner = pts, va, vt, ow

    def _alloc(self, count: int) -> np.ndarray:
        take = min(count, len(self._free))
        ids = np.empty(count, dtype=np.int64)
        if take:
            ids[:take] = self._free[len(self._free) - take:]
            del self._free[len(self._free) - take:]
        fresh = count - take
        if fresh:
            self._ensure_tri_capacity(self._used + fresh)
            ids[take:] = np.arange(self._used, self._used + fresh)
            self._used += fresh
        return ids

    def _release(self, ids):
        self._pending.extend(int(t) for t in ids)

    def commit(self):
        """Close a time step: triangle ids freed since the last commit become reusable."""
        self._free.extend(self._pending)
        self._pending = []

    def snapshot(self) -> dict:
        return {
            k: (v.copy() if isinstance(v, np.ndarray) else list(v) if isinstance(v, list) else v)
            for k, v in self.__dict__.items()
        }

    def restore(self, snap: dict):
        self.__dict__.update(
            {k: (v.copy() if isinstance(v, np.ndarray) else list(v) if isinstance(v, list) else v)
             for k, v in snap.items()}
        )

    # -- inspection ------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self._n_alive

    @property
    def vertex_ids(self) -> np.ndarray:
        return np.flatnonzero(self._valive[: self._nv])

    def point(self, v: int) -> tuple:
        self._check_vertex(v)
        return float(self._pts[v, 0]), float(self._pts[v, 1])

    @property
    def coords(self) -> np.ndarray:
        """(V, 2) coordinates indexed by vertex id (dead rows keep stale values)."""
        return self._pts[: self._nv]

    @property
    def owners(self) -> np.ndarray:
        return self._owner[: self._nv]

    def set_owner(self, v: int, block: int):
        self._owner[v] = block

    def triangle(self, t: int) -> tuple:
        return tuple(int(x) for x in self._tv[t])

    def is_ghost(self, t: int) -> bool:
        return self._tv[t, 2] == GHOST

    def triangle_ids(self, ghosts: bool = False) -> np.ndarray:
        alive = self._talive[: self._used] == 1
        if not ghosts:
            alive &= self._tv[: self._used, 2] != GHOST
        return np.flatnonzero(alive)

    def triangles(self) -> np.ndarray:
        """Real triangles as an (m, 3) array of vertex ids, CCW."""
        return self._tv[self.triangle_ids()].copy()

    def neighbors(self, t: int) -> tuple:
        return tuple(int(x) for x in self._tn[t])

    @property
    def n_real(self) -> int:
        return self._nreal

    @property
    def n_ghost(self) -> int:
        return int(np.count_nonzero((self._talive[: self._used] == 1)
                                    & (self._tv[: self._used, 2] == GHOST)))

    def hull_size(self) -> int:
        return self.n_ghost

    def incident_triangle(self, v: int) -> int:
        self._check_vertex(v)
        return int(self._vtri[v])

    def copy(self) -> "Triangulation":
        other = Triangulation.__new__(Triangulation)
        other.restore(self.snapshot())
        return other

    # -- queries ---------------------------------------------------------

    def _check_vertex(self, v):
        if not (0 <= v < self._nv) or not self._valive[v]:
            raise InvalidVertexError(f"vertex {v} is not alive")

    def _default_hint(self) -> int:
        for t in range(self._used):
            if self._talive[t]:
                return t
        raise InternalConsistencyError("mesh has no triangles")

    def locate(self, p, hint: int | None = None) -> LocateResult:
        """Straight visibility walk from ``hint`` to the point p."""
        qx, qy = float(p[0]), float(p[1])
        start = self._default_hint() if hint is None else int(hint)
        kind, t, idx = K.locate(self._pts, self._tv, self._tn, self._talive, start, qx, qy)
        if kind < 0:
            raise InternalConsistencyError(f"could not locate {p!r}")
        if kind == K.LOC_VERTEX:
            return LocateResult("on_vertex", int(t), vertex=int(self._tv[t, idx]))
        if kind == K.LOC_EDGE:
            return LocateResult("on_edge", int(t), edge=int(idx))
        return LocateResult(_KIND_NAMES[kind], int(t))

    # -- mutation --------------------------------------------------------

    def _insert_at(self, vid: int, qx: float, qy: float, hint: int) -> DiffLog:
        kind, t, idx = K.locate(self._pts, self._tv, self._tn, self._talive, hint, qx, qy)
        if kind == K.LOC_VERTEX:
            other = int(self._tv[t, idx])
            raise DuplicatePointError(other, vid, f"point ({qx}, {qy}) coincides with vertex {other}")
        if kind < 0:
            raise InternalConsistencyError("point location failed")
        cav = K.cavity(self._pts, self._tv, self._tn, kind, t, idx, qx, qy)
        ba, bb, bo, bs, good = K.cavity_boundary(self._tv, self._tn, cav)
        if not good:
            raise InternalConsistencyError("cavity is not a topological disk")
        ids = self._alloc(len(ba))
        self._pts[vid] = (qx, qy)
        self._valive[vid] = 1
        K.apply_insert(self._tv, self._tn, self._talive, self._vtri, vid, cav, ba, bb, bo, bs, ids)
        self._release(cav)
        self._nreal += int(np.count_nonzero((ba != GHOST) & (bb != GHOST)))
        self._nreal -= int(np.count_nonzero(self._tv[cav, 2] != GHOST))
        self._n_alive += 1
        return self._difflog(cav, ids)

    def _difflog(self, removed, created) -> DiffLog:
        before = _tri_edges(self._tv, removed)
        after = _tri_edges(self._tv, created)
        return DiffLog(
            removed=[int(t) for t in removed],
            created=[int(t) for t in created],
            edges_deleted=sorted(before - after),
            edges_inserted=sorted(after - before),
        )

    def insert(self, p, owner: int = 0, hint: int | None = None) -> tuple:
        """Bowyer-Watson insertion of a new vertex; returns (vertex id, DiffLog)."""
        qx, qy = float(p[0]), float(p[1])
        if not (np.isfinite(qx) and np.isfinite(qy)):
            raise InvalidInputError("coordinates must be finite")
        vid = self._nv
        self._ensure_vertex_capacity(vid + 1)
        start = self._default_hint() if hint is None else int(hint)
        log = self._insert_at(vid, qx, qy, start)
        self._nv += 1
        self._owner[vid] = owner
        return vid, log

    def _plan_delete(self, v: int):
        st, lk = K.star(self._tv, self._tn, self._vtri, v)
        if len(st) < 3:
            raise InternalConsistencyError(f"broken star around vertex {v}")
        ears, ok = K.ear_clip(self._pts, lk)
        if not ok:
            raise DegenerateResultError(f"deleting vertex {v} leaves a degenerate point set")
        if self._nreal + K.real_delta_delete(self._tv, st, lk, ears) <= 0:
            raise DegenerateResultError(f"deleting vertex {v} leaves only collinear vertices")
        return st, lk, ears

    def delete(self, v: int) -> DiffLog:
        """Remove vertex v and retriangulate its star polygon."""
        self._check_vertex(v)
        if self._n_alive - 1 < 3:
            raise DegenerateResultError("a triangulation needs at least 3 vertices")
        st, lk, ears = self._plan_delete(v)
        return self._apply_delete(v, st, lk, ears)

    def _apply_delete(self, v, st, lk, ears) -> DiffLog:
        outer, oslot = K.star_outer(self._tv, self._tn, v, st)
        ids = self._alloc(len(st) - 2)
        self._nreal += K.real_delta_delete(self._tv, st, lk, ears)
        K.apply_delete(self._tv, self._tn, self._talive, self._valive, self._vtri,
                       v, st, lk, outer, oslot, ears, ids)
        self._release(st)
        self._n_alive -= 1
        return self._difflog(st, ids)

    def move_point(self, v: int, q) -> DiffLog:
        """Delete v and re-insert it at q under the same vertex id."""
        self._check_vertex(v)
        qx, qy = float(q[0]), float(q[1])
        if not (np.isfinite(qx) and np.isfinite(qy)):
            raise InvalidInputError("coordinates must be finite")
        where = self.locate((qx, qy), hint=int(self._vtri[v]))
        if where.kind == "on_vertex" and where.vertex != v:
            raise DuplicatePointError(where.vertex, v)
        if self._n_alive - 1 < 3:
            raise DegenerateResultError("a triangulation needs at least 3 vertices")
        st, lk, ears = self._plan_delete(v)
        log = self._apply_delete(v, st, lk, ears)
        hint = log.created[0]
        log.extend(self._insert_at(v, qx, qy, hint))
        return log

    # -- validation ------------------------------------------------------

    def is_delaunay(self) -> ValidationReport:
        """Exhaustive empty-circumcircle check plus structural consistency."""
        bad_orient, bad_links = K.check_structure(self._pts, self._tv, self._tn,
                                                  self._talive, self._used)
        vt, vv = K.delaunay_violations(self._pts[: self._nv], self._valive[: self._nv],
                                       self._tv, self._talive, self._used)
        violations = [(int(t), int(v)) for t, v in zip(vt, vv)]
        ok = not violations and bad_orient == 0 and bad_links == 0
        return ValidationReport(ok, violations, int(bad_orient), int(bad_links))

    def edges_array(self) -> np.ndarray:
        """Real edges, one row (lo, hi) each, unsorted, no canonicalization."""
        e = K.real_edges(self._pts, self._tv, self._tn, self._talive, self._used)
        return e[:, :2].copy()

    def canonical_edges_array(self) -> np.ndarray:
        """Sorted (m, 2) array of real edges with cocircular cells fanned.

        Every maximal group of cocircular triangles is re-triangulated as a fan
        from its lexicographically smallest point (x first, then y), so the
        result depends only on the point set.
        """
        e = K.real_edges(self._pts, self._tv, self._tn, self._talive, self._used)
        flagged = e[:, 2] == 1
        keep = e[~flagged, :2]
        if flagged.any():
            keep = np.vstack([keep, self._fan_cells(e[flagged])]) if len(keep) else self._fan_cells(e[flagged])
            keep = np.unique(keep, axis=0)
        order = np.lexsort((keep[:, 1], keep[:, 0]))
        return keep[order]

    def _fan_cells(self, flagged: np.ndarray) -> np.ndarray:
        parent: dict = {}

        def root(x):
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for _, _, _, t, slot in flagged:
            a, b = root(int(t)), root(int(self._tn[t, slot]))
            if a != b:
                parent[max(a, b)] = min(a, b)
        cells: dict = {}
        for t in list(parent):
            cells.setdefault(root(t), set()).update(int(x) for x in self._tv[t])
        out = []
        for verts in cells.values():
            verts = sorted(verts, key=lambda v: (self._pts[v, 0], self._pts[v, 1]))
            s = verts[0]
            out.extend((min(s, u), max(s, u)) for u in verts[1:])
        return np.array(out, dtype=np.int64).reshape(-1, 2)

    def canonical_edge_set(self) -> list:
        return [tuple(int(x) for x in row) for row in self.canonical_edges_array()]

    @classmethod
    def from_triangles(cls, points, triangles) -> "Triangulation":
        """Wrap an externally supplied triangle list without changing it.

        Triangles must be consistently oriented and edge-manifold; hull edges
        get ghost triangles.  Orientation and the Delaunay property are left
        for :meth:`is_delaunay` to judge.
        """
        pts = _check_points(points)
        tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        n = len(pts)
        if len(tris) == 0:
            raise InvalidInputError("no triangles")
        if tris.min() < 0 or tris.max() >= n:
            raise InvalidInputError("triangle refers to a missing vertex")
        m = len(tris)
        edge_owner: dict = {}
        for t, (a, b, c) in enumerate(tris.tolist()):
            if len({a, b, c}) < 3:
                raise InvalidInputError(f"triangle {t} repeats a vertex")
            for slot, (u, w) in enumerate(((b, c), (c, a), (a, b))):
                if (u, w) in edge_owner:
                    raise InvalidInputError(f"edge ({u}, {w}) is used twice in the same direction")
                edge_owner[(u, w)] = (t, slot)
        hull = [(u, w) for (u, w) in edge_owner if (w, u) not in edge_owner]
        cap = m + len(hull)
        tv = np.full((max(cap, 64), 3), -2, dtype=np.int64)
        tn = np.full((max(cap, 64), 3), -2, dtype=np.int64)
        talive = np.zeros(max(cap, 64), dtype=np.uint8)
        tv[:m] = tris
        talive[:cap] = 1
        for (u, w), (t, slot) in edge_owner.items():
            if (w, u) in edge_owner:
                tn[t, slot] = edge_owner[(w, u)][0]
        by_first: dict = {}
        by_second: dict = {}
        for g, (u, w) in enumerate(hull, start=m):
            # the real triangle has u -> w, so the ghost runs w -> u
            tv[g] = (w, u, GHOST)
            if w in by_first or u in by_second:
                raise InvalidInputError("hull boundary is not a simple cycle")
            by_first[w] = g
            by_second[u] = g
            t, slot = edge_owner[(u, w)]
            tn[t, slot] = g
            tn[g, 2] = t
        for g in range(m, cap):
            p, q = int(tv[g, 0]), int(tv[g, 1])
            if q not in by_first or p not in by_second:
                raise InvalidInputError("hull boundary is not a simple cycle")
            tn[g, 0] = by_first[q]
            tn[g, 1] = by_second[p]
        vtri = np.full(n, -1, dtype=np.int64)
        for t in range(m):
            vtri[tv[t]] = t
        if np.any(vtri < 0):
            raise InvalidInputError("some vertices belong to no triangle")
        tri = cls(pts.copy(), tv, tn, talive, vtri)
        tri._used = cap
        tri._nreal = m
        return tri


def build_initial(points, seed: int = 0) -> Triangulation:
    """Delaunay triangulation of ``points``; vertex i is ``points[i]``.

    Points are inserted one at a time in a biased randomized order derived
    from ``seed``.
    """
    pts = _check_points(points)
    n = len(pts)
    if n < 3:
        raise TooFewPointsError(f"need at least 3 points, got {n}")
    dup = find_duplicate(pts)
    if dup is not None:
        raise DuplicatePointError(*dup)
    order = brio_order(pts, seed)
    tv, tn, talive, vtri, used, status, i, j = K.build(pts, order)
    if status == K.ERR_COLLINEAR:
        raise DegenerateInputError("all points are collinear")
    if status == K.ERR_DUPLICATE:
        raise DuplicatePointError(*sorted((int(i), int(j))))
    if status != K.OK:
        raise InternalConsistencyError(f"construction failed at point {i}")
    alive = np.flatnonzero(talive[:used])
    remap = np.full(used + 1, -1, dtype=np.int64)
    remap[alive] = np.arange(len(alive))
    cap = max(2 * len(alive), 64)
    tv2 = np.full((cap, 3), -2, dtype=np.int64)
    tn2 = np.full((cap, 3), -2, dtype=np.int64)
    ta2 = np.zeros(cap, dtype=np.uint8)
    tv2[: len(alive)] = tv[alive]
    tn2[: len(alive)] = remap[tn[alive]]
    ta2[: len(alive)] = 1
    tri = Triangulation(pts.copy(), tv2, tn2, ta2, remap[vtri])
    tri._used = len(alive)
    tri._nreal = int(np.count_nonzero(tv2[: len(alive), 2] != GHOST))
    return tri


def dump_json(tri: Triangulation) -> dict:
    """Vertices by position and CCW real triangles, smallest index first, sorted."""
    ids = tri.vertex_ids
    remap = np.full(tri._nv, -1, dtype=np.int64)
    remap[ids] = np.arange(len(ids))
    t = remap[tri.triangles()]
    k = np.argmin(t, axis=1)
    rows = np.arange(len(t))
    t = np.stack([t[rows, k], t[rows, (k + 1) % 3], t[rows, (k + 2) % 3]], axis=1)
    t = t[np.lexsort((t[:, 2], t[:, 1], t[:, 0]))]
    return {
        "vertices": [[float(x), float(y)] for x, y in tri.coords[ids]],
        "triangles": t.tolist(),
    }


def dumps(tri: Triangulation, **extra) -> str:
    doc = dump_json(tri)
    doc.update(extra)
    return json.dumps(doc)


def load_json(doc) -> tuple:
    """(vertices (n, 2) array, triangles (m, 3) array) from a dump dict or string."""
    try:
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        verts = np.array(doc["vertices"], dtype=np.float64).reshape(-1, 2)
        tris = np.array(doc["triangles"], dtype=np.int64).reshape(-1, 3)
    except (KeyError, TypeError, ValueError) as exc:  # JSONDecodeError is a ValueError
        raise InvalidInputError(f"not a triangulation dump: {exc}") from exc
    return verts, tris


def orientation_of(tri: Triangulation, t: int) -> int:
    a, b, c = tri.triangle(t)
    p = tri.coords
    return orient2d_sign(p[a, 0], p[a, 1], p[b, 0], p[b, 1], p[c, 0], p[c, 1])
