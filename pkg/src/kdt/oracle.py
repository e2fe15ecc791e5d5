"""Brute-force reference implementations for tests and `kdt validate --oracle`.

Nothing here touches the mesh kernels or the filtered predicates.  Signs are
computed with Python integers: every finite double is a dyadic rational, so a
set of coordinates scaled by a common power of two becomes a set of integers
and the determinants are evaluated without rounding.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .errors import InvalidInputError
from .geometry import Sign

__all__ = [
    "OracleTriangleSet",
    "brute_force_delaunay",
    "oracle_edge_set",
    "exact_sign_oracle",
    "to_integers",
    "hull_vertices",
    "hull_size",
    "hull_area2",
    "triangle_area2",
    "ORACLE_MAX_POINTS",
]

ORACLE_MAX_POINTS = 128


def to_integers(coords) -> list:
    """Scale floats by one common power of two so all become exact integers."""
    coords = [float(c) for c in coords]
    shift = 0
    for c in coords:
        if c != 0.0:
            _, e = math.frexp(c)  # c = m * 2**e, |m| in [0.5, 1)
            shift = max(shift, 53 - e)
    out = []
    for c in coords:
        num, den = c.as_integer_ratio()
        # den is a power of two no larger than 2**shift
        out.append(num * ((1 << shift) // den) if shift >= 0 else num)
    return out


def _orient_int(ax, ay, bx, by, cx, cy) -> int:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _incircle_int(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    return ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
            + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
            + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))


def _sgn(v) -> int:
    return (v > 0) - (v < 0)


def exact_sign_oracle(kind: str, *points) -> Sign:
    """Sign of the orient2d (3 points) or raw incircle (4 points) determinant.

    The incircle determinant is positive when the fourth point is inside the
    circle through the first three taken counter-clockwise.
    """
    flat = [c for p in points for c in (p[0], p[1])]
    if not all(math.isfinite(float(c)) for c in flat):
        raise InvalidInputError("non-finite coordinate")
    ints = to_integers(flat)
    if kind == "orient2d":
        if len(points) != 3:
            raise InvalidInputError("orient2d takes 3 points")
        return Sign(_sgn(_orient_int(*ints)))
    if kind == "incircle":
        if len(points) != 4:
            raise InvalidInputError("incircle takes 4 points")
        return Sign(_sgn(_incircle_int(*ints)))
    raise InvalidInputError(f"unknown determinant kind {kind!r}")


class OracleTriangleSet(frozenset):
    """Sorted vertex-index triples with empty circumcircles.

    ``degenerate`` is set when some empty circle passes through four or more
    input points; such a cell contributes every triple of its points, and
    ``cells`` lists the vertex sets of those cells.
    """

    degenerate: bool = False
    cells: tuple = ()


def _as_array(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("non-finite coordinate")
    return pts


def brute_force_delaunay(points, max_points: int = ORACLE_MAX_POINTS) -> OracleTriangleSet:
    """All triples whose circumcircle strictly contains no other input point.

    Every triple is tested against every point.  A numpy float pass settles
    the clear cases; anything within a wide error margin of zero is redone
    in exact integer arithmetic.
    """
    pts = _as_array(points)
    n = len(pts)
    if n < 3:
        raise InvalidInputError("need at least 3 points")
    if n > max_points:
        raise InvalidInputError(f"oracle is capped at {max_points} points, got {n}")
    ints = to_integers(pts.ravel().tolist())
    ip = [(ints[2 * i], ints[2 * i + 1]) for i in range(n)]
    triples = np.array(list(combinations(range(n), 3)), dtype=np.int64)
    found = []
    cocircular = {}
    chunk = max(1, 400_000 // n)
    for s in range(0, len(triples), chunk):
        tr = triples[s: s + chunk]
        a, b, c = pts[tr[:, 0]], pts[tr[:, 1]], pts[tr[:, 2]]
        # orientation with an exact recheck near zero
        l = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
        r = (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        orient = np.sign(l - r).astype(np.int64)
        unsure = np.abs(l - r) <= 1e-10 * (np.abs(l) + np.abs(r))
        for k in np.flatnonzero(unsure):
            i, j, m = tr[k]
            orient[k] = _sgn(_orient_int(*ip[i], *ip[j], *ip[m]))
        # incircle of every point against every triple
        adx = a[:, None, 0] - pts[None, :, 0]
        ady = a[:, None, 1] - pts[None, :, 1]
        bdx = b[:, None, 0] - pts[None, :, 0]
        bdy = b[:, None, 1] - pts[None, :, 1]
        cdx = c[:, None, 0] - pts[None, :, 0]
        cdy = c[:, None, 1] - pts[None, :, 1]
        al = adx * adx + ady * ady
        bl = bdx * bdx + bdy * bdy
        cl = cdx * cdx + cdy * cdy
        t1 = bdx * cdy - cdx * bdy
        t2 = cdx * ady - adx * cdy
        t3 = adx * bdy - bdx * ady
        det = al * t1 + bl * t2 + cl * t3
        perm = (al * (np.abs(bdx * cdy) + np.abs(cdx * bdy))
                + bl * (np.abs(cdx * ady) + np.abs(adx * cdy))
                + cl * (np.abs(adx * bdy) + np.abs(bdx * ady)))
        side = np.sign(det).astype(np.int64) * orient[:, None]
        near = np.abs(det) <= 1e-10 * perm
        rows = np.arange(len(tr))
        for col in range(3):
            side[rows, tr[:, col]] = 0
            near[rows, tr[:, col]] = False
        rejected = np.any((side > 0) & ~near, axis=1) | (orient == 0)
        for k in np.flatnonzero(~rejected):
            i, j, m = (int(x) for x in tr[k])
            on = []
            inside = False
            for q in range(n):
                if q in (i, j, m):
                    continue
                if near[k, q]:
                    v = orient[k] * _sgn(_incircle_int(*ip[i], *ip[j], *ip[m], *ip[q]))
                else:
                    v = int(side[k, q])
                if v > 0:
                    inside = True
                    break
                if v == 0:
                    on.append(q)
            if inside:
                continue
            found.append((i, j, m))
            if on:
                cocircular[tuple(sorted((i, j, m, *on)))] = True
    result = OracleTriangleSet(found)
    result.degenerate = bool(cocircular)
    result.cells = tuple(sorted(cocircular))
    return result


def oracle_edge_set(points, triangles: OracleTriangleSet | None = None) -> list:
    """Sorted Delaunay edge list with every cocircular cell fanned.

    Each cell of four or more cocircular points contributes its boundary
    edges plus the fan from its lexicographically smallest point (x, then y).
    """
    pts = _as_array(points)
    tris = brute_force_delaunay(pts) if triangles is None else triangles
    ints = to_integers(pts.ravel().tolist())
    ip = [(ints[2 * i], ints[2 * i + 1]) for i in range(len(pts))]
    in_cell = set()
    edges = set()
    for cell in tris.cells:
        members = set(cell)
        for t in combinations(cell, 3):
            in_cell.add(t)
        s = min(cell, key=lambda v: (pts[v, 0], pts[v, 1]))
        for u, w in combinations(cell, 2):
            signs = {_sgn(_orient_int(*ip[u], *ip[w], *ip[q])) for q in members - {u, w}}
            if len(signs) == 1 or s in (u, w):
                edges.add((min(u, w), max(u, w)))
    for t in tris:
        if t in in_cell:
            continue
        i, j, m = t
        edges.update(((i, j), (i, m), (j, m)))
    return sorted(edges)


def hull_vertices(points) -> list:
    """Indices of convex hull corners (collinear boundary points excluded), brute force."""
    pts = _as_array(points)
    n = len(pts)
    ints = to_integers(pts.ravel().tolist())
    ip = [(ints[2 * i], ints[2 * i + 1]) for i in range(n)]
    corners = set()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            # directed edge i->j is a hull edge if nothing lies right of it
            # and collinear points lie within the segment
            ok = True
            for q in range(n):
                if q in (i, j):
                    continue
                o = _orient_int(*ip[i], *ip[j], *ip[q])
                if o < 0:
                    ok = False
                    break
                if o == 0:
                    dot = ((ip[q][0] - ip[i][0]) * (ip[j][0] - ip[i][0])
                           + (ip[q][1] - ip[i][1]) * (ip[j][1] - ip[i][1]))
                    len2 = (ip[j][0] - ip[i][0]) ** 2 + (ip[j][1] - ip[i][1]) ** 2
                    if dot < 0 or dot > len2:
                        ok = False
                        break
            if ok:
                corners.update((i, j))
    return sorted(corners)


def hull_size(points) -> int:
    """Number of points on the hull boundary, collinear boundary points included."""
    pts = _as_array(points)
    n = len(pts)
    ints = to_integers(pts.ravel().tolist())
    ip = [(ints[2 * i], ints[2 * i + 1]) for i in range(n)]
    corners = hull_vertices(pts)
    on = set(corners)
    for i, j in combinations(corners, 2):
        side = {_sgn(_orient_int(*ip[i], *ip[j], *ip[q])) for q in range(n)} - {0}
        if len(side) <= 1:
            for q in range(n):
                if _orient_int(*ip[i], *ip[j], *ip[q]) == 0:
                    on.add(q)
    return len(on)


def triangle_area2(points, tri) -> int:
    """Twice the signed area of a triangle, in the common integer scale of ``points``."""
    pts = _as_array(points)
    ints = to_integers(pts.ravel().tolist())
    i, j, k = tri
    return _orient_int(ints[2 * i], ints[2 * i + 1], ints[2 * j], ints[2 * j + 1],
                       ints[2 * k], ints[2 * k + 1])


def hull_area2(points) -> int:
    """Twice the hull area, in the common integer scale of ``points``."""
    pts = _as_array(points)
    ints = to_integers(pts.ravel().tolist())
    ip = [(ints[2 * i], ints[2 * i + 1]) for i in range(len(pts))]
    corners = hull_vertices(pts)
    cx = sum(ip[c][0] for c in corners)
    cy = sum(ip[c][1] for c in corners)
    k = len(corners)
    # sort corners by angle around the (scaled) centroid; exact enough for a
    # strictly convex polygon
    order = sorted(corners, key=lambda c: math.atan2(ip[c][1] * k - cy, ip[c][0] * k - cx))
    total = 0
    for a, b in zip(order, order[1:] + order[:1]):
        total += ip[a][0] * ip[b][1] - ip[a][1] * ip[b][0]
    return total
