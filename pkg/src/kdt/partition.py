"""Quad-tree blocks over a fixed root square.

Nodes are identified by integer keys ``(level, ix, iy)`` so adjacency between
leaves of different sizes is decided exactly; float centers are only used to
route points.  A point whose coordinate equals a node's center line goes to
the child on the higher side.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateOverflowError,
    InvalidInputError,
    InvalidTransferError,
    OutOfDomainError,
)

__all__ = [
    "DIRECTIONS",
    "Block",
    "QuadTree",
    "root_square",
    "quad_tree_division",
    "find_block",
    "neighbor_links",
    "transfer_point",
    "needs_repartition",
]

DIRECTIONS = ("left", "right", "up", "down")
_OPPOSITE = {"left": "right", "right": "left", "up": "down", "down": "up"}
_STEP = {"left": (-1, 0), "right": (1, 0), "up": (0, 1), "down": (0, -1)}
# children in SW, SE, NW, NE order; (dx, dy) offsets in the child grid
_CHILD_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))
MAX_DEPTH = 48


@dataclass
class Block:
    id: int
    key: tuple
    cx: float
    cy: float
    half: float
    owned: list = field(default_factory=list)
    neighbors: dict = field(default_factory=lambda: {d: [] for d in DIRECTIONS})

    @property
    def depth(self) -> int:
        return self.key[0]

    @property
    def count(self) -> int:
        return len(self.owned)

    def neighbor_ids(self) -> set:
        return {b for d in DIRECTIONS for b in self.neighbors[d]}


def root_square(points, pad: float = 0.0) -> tuple:
    """Smallest square covering the points, centered on their bounding box."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise InvalidInputError("no points")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    cx = 0.5 * (lo[0] + hi[0])
    cy = 0.5 * (lo[1] + hi[1])
    half = 0.5 * float(max(hi[0] - lo[0], hi[1] - lo[1]))
    # the midpoint can round; grow until both extremes are covered
    half = max(half, cx - lo[0], hi[0] - cx, cy - lo[1], hi[1] - cy) + pad
    if half == 0.0:
        half = 0.5
    return float(cx), float(cy), float(half)


class QuadTree:
    """Leaves are the blocks; ``blocks[i].id == i`` in SW, SE, NW, NE depth-first order."""

    def __init__(self, root: tuple, threshold: int):
        self.root = root
        self.threshold = threshold
        self.blocks: list = []
        self._keys: dict = {}  # key -> node index
        self._ncx: list = []
        self._ncy: list = []
        self._child: list = []  # first child node index, -1 for leaves
        self._leaf: list = []  # block id, -1 for internal nodes
        self._nkey: list = []
        self.depth = 0

    # -- construction ----------------------------------------------------

    def _add_node(self, key, cx, cy):
        idx = len(self._nkey)
        self._keys[key] = idx
        self._nkey.append(key)
        self._ncx.append(cx)
        self._ncy.append(cy)
        self._child.append(-1)
        self._leaf.append(-1)
        return idx

    def _finish(self):
        self._ncx_a = np.array(self._ncx)
        self._ncy_a = np.array(self._ncy)
        self._child_a = np.array(self._child, dtype=np.int64)
        self._leaf_a = np.array(self._leaf, dtype=np.int64)

    def half_at(self, level: int) -> float:
        return self.root[2] / (1 << level)

    # -- queries ---------------------------------------------------------

    def contains(self, x: float, y: float) -> bool:
        cx, cy, h = self.root
        return abs(x - cx) <= h and abs(y - cy) <= h

    def find_block(self, p) -> int:
        x, y = float(p[0]), float(p[1])
        if not self.contains(x, y):
            raise OutOfDomainError(f"point ({x}, {y}) lies outside the root square")
        node = 0
        while self._child[node] >= 0:
            node = self._child[node] + (y >= self._ncy[node]) * 2 + (x >= self._ncx[node])
        return self._leaf[node]

    def find_blocks(self, xs, ys) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        cx, cy, h = self.root
        if np.any(np.abs(xs - cx) > h) or np.any(np.abs(ys - cy) > h):
            raise OutOfDomainError("point outside the root square")
        node = np.zeros(len(xs), dtype=np.int64)
        while True:
            ch = self._child_a[node]
            inner = ch >= 0
            if not inner.any():
                break
            n = node[inner]
            node[inner] = (ch[inner] + (ys[inner] >= self._ncy_a[n]) * 2
                           + (xs[inner] >= self._ncx_a[n]))
        return self._leaf_a[node]

    def node_of(self, key):
        return self._keys.get(key)

    def _lca_hops(self, a: tuple, b: tuple) -> int:
        la, ia, ja = a
        lb, ib, jb = b
        da, db = la, lb
        while la > lb:
            la, ia, ja = la - 1, ia >> 1, ja >> 1
        while lb > la:
            lb, ib, jb = lb - 1, ib >> 1, jb >> 1
        while (ia, ja) != (ib, jb):
            la, ia, ja, ib, jb = la - 1, ia >> 1, ja >> 1, ib >> 1, jb >> 1
        return da + db - 2 * la

    def hops(self, a: int, b: int, routing: str = "tree") -> int:
        if a == b:
            return 0
        if routing == "direct":
            return 1
        return self._lca_hops(self.blocks[a].key, self.blocks[b].key)

    def counts(self) -> np.ndarray:
        return np.array([b.count for b in self.blocks], dtype=np.int64)

    def copy_ownership(self) -> list:
        return [list(b.owned) for b in self.blocks]

    def restore_ownership(self, saved: list):
        for b, owned in zip(self.blocks, saved):
            b.owned = list(owned)

    def to_json(self) -> str:
        return json.dumps([
            {
                "id": b.id,
                "square": [b.cx, b.cy, b.half],
                "owned": b.count,
                "neighbors": {d: list(b.neighbors[d]) for d in DIRECTIONS},
            }
            for b in self.blocks
        ])


def quad_tree_division(points, threshold: int, root: tuple | None = None,
                       ids=None) -> QuadTree:
    """Split the root square until every leaf owns at most ``threshold`` points.

    ``ids`` names the points (defaults to their positions in ``points``);
    leaves own ids in ascending order.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if threshold < 1:
        raise InvalidInputError("threshold must be at least 1")
    if len(pts) == 0:
        raise InvalidInputError("no points to partition")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("non-finite coordinate")
    ids = np.arange(len(pts)) if ids is None else np.asarray(ids, dtype=np.int64)
    if root is None:
        root = root_square(pts)
    qt = QuadTree(root, threshold)
    cx, cy, h = root
    if np.any(np.abs(pts[:, 0] - cx) > h) or np.any(np.abs(pts[:, 1] - cy) > h):
        raise OutOfDomainError("points outside the given root square")

    # breadth-first over levels keeps node indices of siblings consecutive
    qt._add_node((0, 0, 0), cx, cy)
    frontier = [(0, np.arange(len(pts)))]
    leaves = []
    while frontier:
        nxt = []
        for node, sel in frontier:
            level, ix, iy = qt._nkey[node]
            if len(sel) <= threshold:
                leaves.append((node, sel))
                continue
            if level >= MAX_DEPTH:
                raise DuplicateOverflowError(
                    f"more than {threshold} points coincide near ({qt._ncx[node]}, {qt._ncy[node]})")
            ncx, ncy = qt._ncx[node], qt._ncy[node]
            q = qt.half_at(level + 1)
            xs = pts[sel, 0]
            ys = pts[sel, 1]
            quadrant = (ys >= ncy) * 2 + (xs >= ncx)
            qt._child[node] = len(qt._nkey)
            for k, (ox, oy) in enumerate(_CHILD_OFFSETS):
                child = qt._add_node(
                    (level + 1, 2 * ix + ox, 2 * iy + oy),
                    ncx + (q if ox else -q),
                    ncy + (q if oy else -q),
                )
                nxt.append((child, sel[quadrant == k]))
        frontier = nxt
    # number leaves depth-first in SW, SE, NW, NE order
    by_node = dict(leaves)
    stack = [0]
    while stack:
        node = stack.pop()
        if qt._child[node] >= 0:
            first = qt._child[node]
            stack.extend(range(first + 3, first - 1, -1))
            continue
        level = qt._nkey[node][0]
        bid = len(qt.blocks)
        qt._leaf[node] = bid
        qt.blocks.append(Block(bid, qt._nkey[node], qt._ncx[node], qt._ncy[node],
                               qt.half_at(level), sorted(int(v) for v in ids[by_node[node]])))
        qt.depth = max(qt.depth, level)
    qt._finish()
    _link_neighbors(qt)
    return qt


def _descend_side(qt: QuadTree, node: int, direction: str, out: list):
    """Leaves under ``node`` touching its side that faces ``direction``."""
    first = qt._child[node]
    if first < 0:
        out.append(qt._leaf[node])
        return
    # children facing left are SW/NW, right SE/NE, up NW/NE, down SW/SE
    pick = {"left": (0, 2), "right": (1, 3), "up": (2, 3), "down": (0, 1)}[direction]
    for k in pick:
        _descend_side(qt, first + k, direction, out)


def _link_neighbors(qt: QuadTree):
    for b in qt.blocks:
        level, ix, iy = b.key
        size = 1 << level
        for d in DIRECTIONS:
            dx, dy = _STEP[d]
            jx, jy = ix + dx, iy + dy
            if not (0 <= jx < size and 0 <= jy < size):
                continue
            lv, kx, ky = level, jx, jy
            while (lv, kx, ky) not in qt._keys:
                lv, kx, ky = lv - 1, kx >> 1, ky >> 1
            node = qt._keys[(lv, kx, ky)]
            found: list = []
            # a larger or equal neighbor is a leaf; a same-size internal node
            # contributes its leaves along the shared side
            _descend_side(qt, node, _OPPOSITE[d], found)
            b.neighbors[d] = sorted(found)


def find_block(qt: QuadTree, p) -> int:
    return qt.find_block(p)


def neighbor_links(qt: QuadTree) -> dict:
    """{block id: {direction: [leaf ids sharing a boundary segment]}}."""
    return {b.id: {d: list(b.neighbors[d]) for d in DIRECTIONS} for b in qt.blocks}


def transfer_point(qt: QuadTree, v: int, src: int, dst: int, routing: str = "tree") -> int:
    """Move ownership of v from block ``src`` to ``dst``; returns the hop count."""
    owned = qt.blocks[src].owned
    i = bisect.bisect_left(owned, v)
    if i == len(owned) or owned[i] != v:
        raise InvalidTransferError(f"vertex {v} is not owned by block {src}")
    if src == dst:
        return 0
    del owned[i]
    bisect.insort(qt.blocks[dst].owned, v)
    return qt.hops(src, dst, routing)


def needs_repartition(qt: QuadTree, coords=None) -> bool:
    """True if a leaf is over threshold or (given coords) owns a point outside it."""
    if any(b.count > qt.threshold for b in qt.blocks):
        return True
    if coords is None:
        return False
    coords = np.asarray(coords)
    for b in qt.blocks:
        if not b.owned:
            continue
        own = np.array(b.owned)
        where = qt.find_blocks(coords[own, 0], coords[own, 1])
        if np.any(where != b.id):
            return True
    return False
