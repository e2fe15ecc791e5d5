"""Compiled mesh kernels operating on flat triangle arrays.

Layout shared with :mod:`kdt.triangulation`:

* ``pts``   (V, 2) float64 vertex coordinates
* ``tv``    (T, 3) int64 vertex ids, counter-clockwise; ghost triangles keep
  the ghost vertex (-1) in slot 2 so ``(u, w, GHOST)`` means the hull edge
  u -> w has the outside on its left
* ``tn``    (T, 3) int64, ``tn[t, i]`` is the triangle across the edge
  opposite ``tv[t, i]``
* ``talive`` (T,) uint8, ``valive`` (V,) uint8, ``vtri`` (V,) one incident
  triangle per alive vertex

All kernels release the GIL.  Plan kernels only read; apply kernels write the
triangles they were given plus single neighbor slots of the ring around them.
"""

import math

import numpy as np
from numba import njit

from .geometry import incircle_sign, orient2d_sign

GHOST = -1

LOC_IN = 0
LOC_EDGE = 1
LOC_VERTEX = 2
LOC_OUTSIDE = 3

# build status codes
OK = 0
ERR_COLLINEAR = 1
ERR_DUPLICATE = 2
ERR_CONSISTENCY = 3

_nj = dict(cache=True, nogil=True)


@njit(**_nj)
def _push(buf, n, value):
    if n == buf.shape[0]:
        grown = np.empty(2 * buf.shape[0], dtype=buf.dtype)
        grown[:n] = buf[:n]
        buf = grown
    buf[n] = value
    return buf


@njit(**_nj)
def _find(buf, n, value):
    for i in range(n):
        if buf[i] == value:
            return i
    return -1


@njit(**_nj)
def _strictly_between(ax, ay, bx, by, qx, qy):
    # q is known to be collinear with a and b
    if ax != bx:
        return min(ax, bx) < qx < max(ax, bx)
    return min(ay, by) < qy < max(ay, by)


@njit(**_nj)
def _ghost_contains(pts, u, w, qx, qy):
    ux = pts[u, 0]
    uy = pts[u, 1]
    wx = pts[w, 0]
    wy = pts[w, 1]
    o = orient2d_sign(ux, uy, wx, wy, qx, qy)
    if o != 0:
        return o > 0
    return _strictly_between(ux, uy, wx, wy, qx, qy)


@njit(**_nj)
def tri_contains(pts, tv, t, qx, qy):
    """Is q strictly inside the circumcircle of t (half-plane for ghosts)?"""
    a = tv[t, 0]
    b = tv[t, 1]
    c = tv[t, 2]
    if c == GHOST:
        return _ghost_contains(pts, a, b, qx, qy)
    return incircle_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                         pts[c, 0], pts[c, 1], qx, qy) > 0


@njit(**_nj)
def write_tri(tv, tn, t, a, b, c, na, nb, nc):
    """Store triangle (a, b, c) rotated so a ghost vertex lands in slot 2.

    Returns the shift s such that original slot i is stored at (i + s) % 3.
    """
    if a == GHOST:
        tv[t, 0] = b
        tv[t, 1] = c
        tv[t, 2] = a
        tn[t, 0] = nb
        tn[t, 1] = nc
        tn[t, 2] = na
        return 2
    if b == GHOST:
        tv[t, 0] = c
        tv[t, 1] = a
        tv[t, 2] = b
        tn[t, 0] = nc
        tn[t, 1] = na
        tn[t, 2] = nb
        return 1
    tv[t, 0] = a
    tv[t, 1] = b
    tv[t, 2] = c
    tn[t, 0] = na
    tn[t, 1] = nb
    tn[t, 2] = nc
    return 0


@njit(**_nj)
def slot_of(tn, t, nb):
    for k in range(3):
        if tn[t, k] == nb:
            return k
    return -1


# --- point location ------------------------------------------------------


@njit(**_nj)
def _locate_scan(pts, tv, talive, qx, qy):
    # exhaustive fallback; only reached if the walk exceeds its step budget
    for t in range(tv.shape[0]):
        if talive[t] == 0 or tv[t, 2] == GHOST:
            continue
        zeros = 0
        z0 = -1
        z1 = -1
        inside = True
        for i in range(3):
            u = tv[t, (i + 1) % 3]
            w = tv[t, (i + 2) % 3]
            o = orient2d_sign(pts[u, 0], pts[u, 1], pts[w, 0], pts[w, 1], qx, qy)
            if o < 0:
                inside = False
                break
            if o == 0:
                if zeros == 0:
                    z0 = i
                else:
                    z1 = i
                zeros += 1
        if inside:
            if zeros == 0:
                return LOC_IN, t, -1
            if zeros == 1:
                return LOC_EDGE, t, z0
            return LOC_VERTEX, t, 3 - z0 - z1
    for t in range(tv.shape[0]):
        if talive[t] == 1 and tv[t, 2] == GHOST:
            if _ghost_contains(pts, tv[t, 0], tv[t, 1], qx, qy):
                return LOC_OUTSIDE, t, -1
    return -1, -1, -1


@njit(**_nj)
def locate(pts, tv, tn, talive, start, qx, qy):
    """Visibility walk from ``start``; returns (kind, triangle, index).

    For LOC_EDGE the index is the slot opposite the edge holding q; for
    LOC_VERTEX it is the slot of the coincident vertex.
    """
    t = start
    if t < 0 or t >= tv.shape[0] or talive[t] == 0:
        t = -1
        for s in range(tv.shape[0]):
            if talive[s] == 1:
                t = s
                break
        if t < 0:
            return -1, -1, -1
    if tv[t, 2] == GHOST:
        t = tn[t, 2]
    came = -1
    budget = 2 * tv.shape[0] + 16
    for _ in range(budget):
        moved = False
        zeros = 0
        z0 = -1
        z1 = -1
        for i in range(3):
            nb = tn[t, i]
            if nb == came:
                continue
            u = tv[t, (i + 1) % 3]
            w = tv[t, (i + 2) % 3]
            o = orient2d_sign(pts[u, 0], pts[u, 1], pts[w, 0], pts[w, 1], qx, qy)
            if o < 0:
                if tv[nb, 2] == GHOST:
                    return LOC_OUTSIDE, nb, -1
                came = t
                t = nb
                moved = True
                break
            if o == 0:
                if zeros == 0:
                    z0 = i
                else:
                    z1 = i
                zeros += 1
        if not moved:
            if zeros == 0:
                return LOC_IN, t, -1
            if zeros == 1:
                return LOC_EDGE, t, z0
            return LOC_VERTEX, t, 3 - z0 - z1
    return _locate_scan(pts, tv, talive, qx, qy)


# --- insertion -----------------------------------------------------------


@njit(**_nj)
def cavity(pts, tv, tn, kind, t, idx, qx, qy):
    """Triangles whose circumcircle strictly contains q, grown from the seed."""
    cav = np.empty(16, dtype=np.int64)
    rej = np.empty(16, dtype=np.int64)
    cav[0] = t
    nc = 1
    nr = 0
    if kind == LOC_EDGE:
        cav[1] = tn[t, idx]
        nc = 2
    head = 0
    while head < nc:
        s = cav[head]
        head += 1
        for i in range(3):
            nb = tn[s, i]
            if _find(cav, nc, nb) >= 0 or _find(rej, nr, nb) >= 0:
                continue
            if tri_contains(pts, tv, nb, qx, qy):
                cav = _push(cav, nc, nb)
                nc += 1
            else:
                rej = _push(rej, nr, nb)
                nr += 1
    return cav[:nc].copy()


@njit(**_nj)
def cavity_boundary(tv, tn, cav):
    """Boundary edges (a, b) of the cavity with the outer triangle and its slot."""
    m = cav.shape[0] + 2
    ba = np.empty(m, dtype=np.int64)
    bb = np.empty(m, dtype=np.int64)
    bo = np.empty(m, dtype=np.int64)
    bs = np.empty(m, dtype=np.int64)
    n = 0
    nc = cav.shape[0]
    for j in range(nc):
        s = cav[j]
        for i in range(3):
            nb = tn[s, i]
            if _find(cav, nc, nb) >= 0:
                continue
            if n == m:
                return ba, bb, bo, bs, False
            ba[n] = tv[s, (i + 1) % 3]
            bb[n] = tv[s, (i + 2) % 3]
            bo[n] = nb
            bs[n] = slot_of(tn, nb, s)
            n += 1
    return ba, bb, bo, bs, n == m


@njit(**_nj)
def apply_insert(tv, tn, talive, vtri, q, cav, ba, bb, bo, bs, ids):
    """Star q to the cavity boundary; returns (edges deleted, edges inserted)."""
    m = ba.shape[0]
    nxt = np.empty(m, dtype=np.int64)
    prv = np.empty(m, dtype=np.int64)
    if m <= 32:
        for j in range(m):
            for k in range(m):
                if ba[k] == bb[j]:
                    nxt[j] = k
                    prv[k] = j
                    break
    else:
        order = np.argsort(ba)
        keys = ba[order]
        for j in range(m):
            k = order[np.searchsorted(keys, bb[j])]
            nxt[j] = k
            prv[k] = j
    # interior edges of the cavity disappear
    nc = cav.shape[0]
    ndel = 0
    for j in range(nc):
        s = cav[j]
        for i in range(3):
            nb = tn[s, i]
            if nb > s and _find(cav, nc, nb) >= 0:
                if tv[s, (i + 1) % 3] != GHOST and tv[s, (i + 2) % 3] != GHOST:
                    ndel += 1
    nins = 0
    for j in range(m):
        t = ids[j]
        write_tri(tv, tn, t, ba[j], bb[j], q, ids[nxt[j]], ids[prv[j]], bo[j])
        tn[bo[j], bs[j]] = t
        talive[t] = 1
        if ba[j] != GHOST:
            vtri[ba[j]] = t
            nins += 1
    for j in range(nc):
        talive[cav[j]] = 0
    vtri[q] = ids[0]
    return ndel, nins


# --- deletion ------------------------------------------------------------


@njit(**_nj)
def star(tv, tn, vtri, v):
    """Star of v: triangles, link vertices, outer triangles and their slots.

    Rotated so the link starts at the smallest real vertex id, which makes
    every later decision independent of the incident-triangle hint.
    """
    st = np.empty(16, dtype=np.int64)
    lk = np.empty(16, dtype=np.int64)
    t0 = vtri[v]
    t = t0
    k = 0
    while True:
        i = -1
        for s in range(3):
            if tv[t, s] == v:
                i = s
        if i < 0 or k > tv.shape[0]:
            return st[:0], lk[:0]
        st = _push(st, k, t)
        lk = _push(lk, k, tv[t, (i + 1) % 3])
        k += 1
        t = tn[t, (i + 1) % 3]
        if t == t0:
            break
    start = 0
    for j in range(k):
        if lk[j] != GHOST and (lk[start] == GHOST or lk[j] < lk[start]):
            start = j
    st2 = np.empty(k, dtype=np.int64)
    lk2 = np.empty(k, dtype=np.int64)
    for j in range(k):
        st2[j] = st[(start + j) % k]
        lk2[j] = lk[(start + j) % k]
    return st2, lk2


@njit(**_nj)
def star_outer(tv, tn, v, st):
    k = st.shape[0]
    outer = np.empty(k, dtype=np.int64)
    oslot = np.empty(k, dtype=np.int64)
    for j in range(k):
        t = st[j]
        for s in range(3):
            if tv[t, s] == v:
                outer[j] = tn[t, s]
        oslot[j] = slot_of(tn, outer[j], t)
    return outer, oslot


@njit(**_nj)
def _valid_ear(pts, lk, active, p, x, q):
    a = lk[p]
    b = lk[x]
    c = lk[q]
    k = lk.shape[0]
    if a != GHOST and b != GHOST and c != GHOST:
        ax = pts[a, 0]
        ay = pts[a, 1]
        bx = pts[b, 0]
        by = pts[b, 1]
        cx = pts[c, 0]
        cy = pts[c, 1]
        if orient2d_sign(ax, ay, bx, by, cx, cy) <= 0:
            return False
        for y in range(k):
            if not active[y] or y == p or y == x or y == q or lk[y] == GHOST:
                continue
            w = lk[y]
            if incircle_sign(ax, ay, bx, by, cx, cy, pts[w, 0], pts[w, 1]) > 0:
                return False
        return True
    # ghost ear: rotate to (u, w, GHOST), the prospective hull edge u -> w
    if a == GHOST:
        u = b
        w = c
    elif b == GHOST:
        u = c
        w = a
    else:
        u = a
        w = b
    for y in range(k):
        if not active[y] or y == p or y == x or y == q or lk[y] == GHOST:
            continue
        z = lk[y]
        if _ghost_contains(pts, u, w, pts[z, 0], pts[z, 1]):
            return False
    return True


@njit(**_nj)
def ear_clip(pts, lk):
    """Delaunay retriangulation of a star polygon by ear clipping.

    Returns (ears, ok); ears[e] holds link positions (p, x, q) in clipping
    order, the last row being the final remaining triangle.
    """
    k = lk.shape[0]
    ears = np.empty((max(k - 2, 0), 3), dtype=np.int64)
    if k < 3:
        return ears, False
    prv = np.empty(k, dtype=np.int64)
    nxt = np.empty(k, dtype=np.int64)
    active = np.ones(k, dtype=np.bool_)
    for j in range(k):
        prv[j] = (j - 1 + k) % k
        nxt[j] = (j + 1) % k
    m = k
    ne = 0
    while m > 3:
        found = False
        for x in range(k):
            if not active[x]:
                continue
            p = prv[x]
            q = nxt[x]
            if _valid_ear(pts, lk, active, p, x, q):
                ears[ne, 0] = p
                ears[ne, 1] = x
                ears[ne, 2] = q
                ne += 1
                active[x] = False
                nxt[p] = q
                prv[q] = p
                m -= 1
                found = True
                break
        if not found:
            return ears, False
    for x in range(k):
        if active[x]:
            p = prv[x]
            q = nxt[x]
            a = lk[p]
            b = lk[x]
            c = lk[q]
            if a != GHOST and b != GHOST and c != GHOST:
                if orient2d_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                                 pts[c, 0], pts[c, 1]) <= 0:
                    return ears, False
            ears[ne, 0] = p
            ears[ne, 1] = x
            ears[ne, 2] = q
            break
    return ears, True


@njit(**_nj)
def real_delta_delete(tv, st, lk, ears):
    """Change in the number of real triangles caused by a deletion."""
    d = 0
    for j in range(st.shape[0]):
        if tv[st[j], 2] != GHOST:
            d -= 1
    for e in range(ears.shape[0]):
        if lk[ears[e, 0]] != GHOST and lk[ears[e, 1]] != GHOST and lk[ears[e, 2]] != GHOST:
            d += 1
    return d


@njit(**_nj)
def apply_delete(tv, tn, talive, valive, vtri, v, st, lk, outer, oslot, ears, ids):
    """Replace the star of v by the clipped ears; returns (deleted, inserted) edges."""
    k = lk.shape[0]
    eo = outer.copy()
    es = oslot.copy()
    nins = 0
    for e in range(k - 2):
        p = ears[e, 0]
        x = ears[e, 1]
        q = ears[e, 2]
        t = ids[e]
        a = lk[p]
        b = lk[x]
        c = lk[q]
        last = e == k - 3
        n1 = eo[q] if last else -1
        shift = write_tri(tv, tn, t, a, b, c, eo[x], n1, eo[p])
        tn[eo[x], es[x]] = t
        tn[eo[p], es[p]] = t
        if last:
            tn[eo[q], es[q]] = t
        else:
            eo[p] = t
            es[p] = (1 + shift) % 3
            if a != GHOST and c != GHOST:
                nins += 1
        talive[t] = 1
        if a != GHOST:
            vtri[a] = t
        if b != GHOST:
            vtri[b] = t
        if c != GHOST:
            vtri[c] = t
    ndel = 0
    for j in range(k):
        if lk[j] != GHOST:
            ndel += 1
        talive[st[j]] = 0
    valive[v] = 0
    vtri[v] = -1
    return ndel, nins


# --- batched plans for the kinetic phases --------------------------------


@njit(**_nj)
def plan_deletes(pts, tv, tn, vtri, movers):
    """Stars and ear sequences for a batch of vertices (read-only).

    Returns CSR arrays: ptr, star, link, outer, oslot, ears (ear rows for
    mover i start at ptr[i] - 2 * i), real-triangle deltas and ok flags.
    """
    m = movers.shape[0]
    ptr = np.zeros(m + 1, dtype=np.int64)
    stars = []
    links = []
    for i in range(m):
        st, lk = star(tv, tn, vtri, movers[i])
        stars.append(st)
        links.append(lk)
        ptr[i + 1] = ptr[i] + st.shape[0]
    total = ptr[m]
    fst = np.empty(total, dtype=np.int64)
    flk = np.empty(total, dtype=np.int64)
    fo = np.empty(total, dtype=np.int64)
    fs = np.empty(total, dtype=np.int64)
    fe = np.zeros((max(total - 2 * m, 0), 3), dtype=np.int64)
    delta = np.zeros(m, dtype=np.int64)
    ok = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        st = stars[i]
        lk = links[i]
        k = st.shape[0]
        lo = ptr[i]
        if k < 3:
            continue
        outer, oslot = star_outer(tv, tn, movers[i], st)
        fst[lo:lo + k] = st
        flk[lo:lo + k] = lk
        fo[lo:lo + k] = outer
        fs[lo:lo + k] = oslot
        ears, good = ear_clip(pts, lk)
        ok[i] = good
        if good:
            fe[lo - 2 * i:lo - 2 * i + k - 2] = ears
            delta[i] = real_delta_delete(tv, st, lk, ears)
    return ptr, fst, flk, fo, fs, fe, delta, ok


@njit(**_nj)
def apply_deletes(tv, tn, talive, valive, vtri, movers, which,
                  ptr, fst, flk, fo, fs, fe, slab_ptr, slab, out_del, out_ins, out_hint):
    for w in range(which.shape[0]):
        i = which[w]
        lo = ptr[i]
        hi = ptr[i + 1]
        k = hi - lo
        ids = slab[slab_ptr[i]:slab_ptr[i + 1]]
        d, n = apply_delete(tv, tn, talive, valive, vtri, movers[i],
                            fst[lo:hi], flk[lo:hi], fo[lo:hi], fs[lo:hi],
                            fe[lo - 2 * i:lo - 2 * i + k - 2], ids)
        out_del[i] = d
        out_ins[i] = n
        out_hint[i] = ids[0]


@njit(**_nj)
def plan_inserts(pts, tv, tn, talive, xs, ys, hints):
    """Location, cavity and boundary for a batch of insertion points."""
    m = xs.shape[0]
    ptr = np.zeros(m + 1, dtype=np.int64)
    kinds = np.empty(m, dtype=np.int64)
    cavs = []
    for i in range(m):
        kind, t, idx = locate(pts, tv, tn, talive, hints[i], xs[i], ys[i])
        kinds[i] = kind
        if kind == LOC_VERTEX or kind < 0:
            c = np.empty(0, dtype=np.int64)
        else:
            c = cavity(pts, tv, tn, kind, t, idx, xs[i], ys[i])
        cavs.append(c)
        ptr[i + 1] = ptr[i] + c.shape[0]
    total = ptr[m]
    fc = np.empty(total, dtype=np.int64)
    nb = total + 2 * m
    fa = np.empty(nb, dtype=np.int64)
    fb = np.empty(nb, dtype=np.int64)
    fo = np.empty(nb, dtype=np.int64)
    fs = np.empty(nb, dtype=np.int64)
    ok = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        c = cavs[i]
        lo = ptr[i]
        fc[lo:lo + c.shape[0]] = c
        if c.shape[0] == 0:
            continue
        ba, bb, bo, bs, good = cavity_boundary(tv, tn, c)
        ok[i] = good
        blo = lo + 2 * i
        fa[blo:blo + c.shape[0] + 2] = ba
        fb[blo:blo + c.shape[0] + 2] = bb
        fo[blo:blo + c.shape[0] + 2] = bo
        fs[blo:blo + c.shape[0] + 2] = bs
    return ptr, fc, fa, fb, fo, fs, kinds, ok


@njit(**_nj)
def apply_inserts(tv, tn, talive, vtri, qids, which, ptr, fc, fa, fb, fo, fs,
                  slab_ptr, slab, out_del, out_ins):
    for w in range(which.shape[0]):
        i = which[w]
        lo = ptr[i]
        hi = ptr[i + 1]
        blo = lo + 2 * i
        bhi = hi + 2 * i + 2
        d, n = apply_insert(tv, tn, talive, vtri, qids[i], fc[lo:hi],
                            fa[blo:bhi], fb[blo:bhi], fo[blo:bhi], fs[blo:bhi],
                            slab[slab_ptr[i]:slab_ptr[i + 1]])
        out_del[i] = d
        out_ins[i] = n


@njit(**_nj)
def _uf_root(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(**_nj)
def _uf_union(parent, a, b):
    ra = _uf_root(parent, a)
    rb = _uf_root(parent, b)
    if ra != rb:
        parent[max(ra, rb)] = min(ra, rb)


@njit(**_nj)
def conflict_roots(tn, cap, ptr, region):
    """Union-find over movers whose regions overlap or share an edge.

    Returns, per mover, the smallest mover index of its group.
    """
    m = ptr.shape[0] - 1
    owner = np.full(cap, -1, dtype=np.int64)
    parent = np.arange(m)
    for i in range(m):
        for j in range(ptr[i], ptr[i + 1]):
            t = region[j]
            o = owner[t]
            if o >= 0 and o != i:
                _uf_union(parent, i, o)
            else:
                owner[t] = i
    for i in range(m):
        for j in range(ptr[i], ptr[i + 1]):
            t = region[j]
            for s in range(3):
                o = owner[tn[t, s]]
                if o >= 0 and o != i:
                    _uf_union(parent, i, o)
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        out[i] = _uf_root(parent, i)
    return out


@njit(**_nj)
def fix_vertex_hints(tv, vtri, ids):
    """Point every real vertex of the given triangles at the last one listed.

    Run serially after a parallel phase so the hints do not depend on which
    worker wrote last.
    """
    for j in range(ids.shape[0]):
        t = ids[j]
        for i in range(3):
            v = tv[t, i]
            if v != GHOST:
                vtri[v] = t


@njit(**_nj)
def local_violations(pts, tv, tn, talive, used):
    """Edges whose opposite vertex lies strictly inside the circle, plus
    reflex hull corners.  For a structurally sound mesh with CCW triangles
    this is zero exactly when the mesh is Delaunay."""
    bad = 0
    for t in range(used):
        if talive[t] == 0:
            continue
        a = tv[t, 0]
        b = tv[t, 1]
        c = tv[t, 2]
        if c == GHOST:
            # next hull vertex after b must not make a reflex turn
            nb = tn[t, 0]
            x = tv[nb, 1] if tv[nb, 0] == b else tv[nb, 0]
            if x != a and orient2d_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                                        pts[x, 0], pts[x, 1]) > 0:
                bad += 1
            continue
        for i in range(3):
            u = tn[t, i]
            if u < t or tv[u, 2] == GHOST:
                continue
            k = 0
            while tn[u, k] != t:
                k += 1
            x = tv[u, k]
            if incircle_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                             pts[c, 0], pts[c, 1], pts[x, 0], pts[x, 1]) > 0:
                bad += 1
    return bad


# --- construction --------------------------------------------------------


@njit(**_nj)
def _grow_tris(tv, tn, talive, need):
    cap = tv.shape[0]
    if need <= cap:
        return tv, tn, talive
    new = max(need, 2 * cap)
    tv2 = np.full((new, 3), -2, dtype=np.int64)
    tn2 = np.full((new, 3), -2, dtype=np.int64)
    ta2 = np.zeros(new, dtype=np.uint8)
    tv2[:cap] = tv
    tn2[:cap] = tn
    ta2[:cap] = talive
    return tv2, tn2, ta2


@njit(**_nj)
def build(pts, order):
    """Incremental Bowyer-Watson construction in the given insertion order.

    Returns (tv, tn, talive, vtri, used, status, i, j); on ERR_DUPLICATE the
    pair (i, j) names the coincident vertices.
    """
    n = order.shape[0]
    nv = pts.shape[0]
    cap = 2 * n + 64
    tv = np.full((cap, 3), -2, dtype=np.int64)
    tn = np.full((cap, 3), -2, dtype=np.int64)
    talive = np.zeros(cap, dtype=np.uint8)
    vtri = np.full(nv, -1, dtype=np.int64)
    a = order[0]
    b = order[1]
    c = -1
    cpos = -1
    for j in range(2, n):
        o = orient2d_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                          pts[order[j], 0], pts[order[j], 1])
        if o != 0:
            c = order[j]
            cpos = j
            if o < 0:
                a, b = b, a
            break
    if c < 0:
        return tv, tn, talive, vtri, 0, ERR_COLLINEAR, -1, -1
    # triangle 0 is real, 1..3 are ghosts across its edges
    tv[0, 0] = a
    tv[0, 1] = b
    tv[0, 2] = c
    tv[1, 0] = c
    tv[1, 1] = b
    tv[1, 2] = GHOST
    tv[2, 0] = a
    tv[2, 1] = c
    tv[2, 2] = GHOST
    tv[3, 0] = b
    tv[3, 1] = a
    tv[3, 2] = GHOST
    tn[0, 0] = 1
    tn[0, 1] = 2
    tn[0, 2] = 3
    # ghost (c, b, G): opp c = edge b-G shared with (b, a, G); opp b = edge G-c with (a, c, G)
    tn[1, 0] = 3
    tn[1, 1] = 2
    tn[1, 2] = 0
    tn[2, 0] = 1
    tn[2, 1] = 3
    tn[2, 2] = 0
    tn[3, 0] = 2
    tn[3, 1] = 1
    tn[3, 2] = 0
    for s in range(4):
        talive[s] = 1
    vtri[a] = 0
    vtri[b] = 0
    vtri[c] = 0
    used = 4
    free = np.empty(64, dtype=np.int64)
    nfree = 0
    hint = 0
    for j in range(n):
        if j == 0 or j == 1 or j == cpos:
            continue
        p = order[j]
        qx = pts[p, 0]
        qy = pts[p, 1]
        kind, t, idx = locate(pts, tv, tn, talive, hint, qx, qy)
        if kind == LOC_VERTEX:
            return tv, tn, talive, vtri, used, ERR_DUPLICATE, tv[t, idx], p
        if kind < 0:
            return tv, tn, talive, vtri, used, ERR_CONSISTENCY, p, -1
        cav = cavity(pts, tv, tn, kind, t, idx, qx, qy)
        ba, bb, bo, bs, good = cavity_boundary(tv, tn, cav)
        if not good:
            return tv, tn, talive, vtri, used, ERR_CONSISTENCY, p, -1
        need = ba.shape[0]
        ids = np.empty(need, dtype=np.int64)
        for r in range(need):
            if nfree > 0:
                nfree -= 1
                ids[r] = free[nfree]
            else:
                ids[r] = used
                used += 1
        tv, tn, talive = _grow_tris(tv, tn, talive, used)
        apply_insert(tv, tn, talive, vtri, p, cav, ba, bb, bo, bs, ids)
        for r in range(cav.shape[0]):
            free = _push(free, nfree, cav[r])
            nfree += 1
        hint = ids[0]
    return tv, tn, talive, vtri, used, OK, -1, -1


# --- validation ----------------------------------------------------------


@njit(**_nj)
def check_structure(pts, tv, tn, talive, used):
    """Count orientation and adjacency defects among alive triangles."""
    bad_orient = 0
    bad_links = 0
    for t in range(used):
        if talive[t] == 0:
            continue
        a = tv[t, 0]
        b = tv[t, 1]
        c = tv[t, 2]
        if c != GHOST:
            if orient2d_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                             pts[c, 0], pts[c, 1]) <= 0:
                bad_orient += 1
        for i in range(3):
            nb = tn[t, i]
            if nb < 0 or nb >= used or talive[nb] == 0:
                bad_links += 1
                continue
            u = tv[t, (i + 1) % 3]
            w = tv[t, (i + 2) % 3]
            k = slot_of(tn, nb, t)
            if k < 0 or tv[nb, (k + 1) % 3] != w or tv[nb, (k + 2) % 3] != u:
                bad_links += 1
    return bad_orient, bad_links


@njit(**_nj)
def delaunay_violations(pts, valive, tv, talive, used):
    """Every (real triangle, alive vertex) pair with the vertex strictly inside.

    Every pair is decided.  For a well-shaped triangle a float circumcircle
    with a wide relative tolerance certifies far vertices as outside, and the
    x-sorted vertex order lets whole runs of them be certified at once; any
    pair the float test cannot settle goes to the exact predicate.
    """
    out_t = np.empty(16, dtype=np.int64)
    out_v = np.empty(16, dtype=np.int64)
    n = 0
    ids = np.flatnonzero(valive)
    xs = pts[ids, 0]
    order = np.argsort(xs, kind="mergesort")
    ids = ids[order]
    xs = xs[order]
    m = ids.shape[0]
    for t in range(used):
        if talive[t] == 0 or tv[t, 2] == GHOST:
            continue
        a = tv[t, 0]
        b = tv[t, 1]
        c = tv[t, 2]
        ax = pts[a, 0]
        ay = pts[a, 1]
        bx = pts[b, 0] - ax
        by = pts[b, 1] - ay
        cx = pts[c, 0] - ax
        cy = pts[c, 1] - ay
        det = bx * cy - by * cx
        lb = bx * bx + by * by
        lc = cx * cx + cy * cy
        lmax = max(lb, lc, (bx - cx) * (bx - cx) + (by - cy) * (by - cy))
        lo = 0
        hi = m
        good = det > 1e-3 * lmax
        if good:
            ox = (cy * lb - by * lc) / (2.0 * det)
            oy = (bx * lc - cx * lb) / (2.0 * det)
            r2 = ox * ox + oy * oy
            ox += ax
            oy += ay
            r = math.sqrt(r2)
            pad = 1e-6 * (r + abs(ox) + abs(oy))
            lo = np.searchsorted(xs, ox - r - pad)
            hi = np.searchsorted(xs, ox + r + pad, side="right")
        for k in range(lo, hi):
            v = ids[k]
            if v == a or v == b or v == c:
                continue
            px = pts[v, 0]
            py = pts[v, 1]
            if good:
                dx = px - ox
                dy = py - oy
                q = dx * dx + dy * dy
                if q - r2 > 1e-6 * (q + r2 + pad * pad):
                    continue
            if incircle_sign(ax, ay, pts[b, 0], pts[b, 1], pts[c, 0], pts[c, 1], px, py) > 0:
                out_t = _push(out_t, n, t)
                out_v = _push(out_v, n, v)
                n += 1
    return out_t[:n].copy(), out_v[:n].copy()


@njit(**_nj)
def real_edges(pts, tv, tn, talive, used):
    """Each real edge once as (lo, hi, cocircular flag, t, slot)."""
    m = 0
    for t in range(used):
        if talive[t] == 1 and tv[t, 2] != GHOST:
            m += 3
    out = np.empty((m, 5), dtype=np.int64)
    n = 0
    for t in range(used):
        if talive[t] == 0 or tv[t, 2] == GHOST:
            continue
        for i in range(3):
            u = tv[t, (i + 1) % 3]
            w = tv[t, (i + 2) % 3]
            nb = tn[t, i]
            ghost_side = tv[nb, 2] == GHOST
            if not ghost_side and u > w:
                continue
            flag = 0
            if not ghost_side:
                c = tv[t, i]
                k = slot_of(tn, nb, t)
                d = tv[nb, k]
                if incircle_sign(pts[c, 0], pts[c, 1], pts[u, 0], pts[u, 1],
                                 pts[w, 0], pts[w, 1], pts[d, 0], pts[d, 1]) == 0:
                    flag = 1
            out[n, 0] = min(u, w)
            out[n, 1] = max(u, w)
            out[n, 2] = flag
            out[n, 3] = t
            out[n, 4] = i
            n += 1
    return out[:n].copy()


# --- distances -----------------------------------------------------------


@njit(**_nj)
def _kth_insert(best, k, d):
    # best holds the k smallest values seen so far, ascending
    if d >= best[k - 1]:
        return
    j = k - 1
    while j > 0 and best[j - 1] > d:
        best[j] = best[j - 1]
        j -= 1
    best[j] = d


@njit(**_nj)
def block_min_nth_sq(px, py, own, cand, nn, bound):
    """min over owned points of the squared distance to the nn-th nearest
    candidate, searched only below ``bound``; returns ``bound`` if nothing
    beats it.  ``own`` indexes into ``cand``-space via positions in (px, py);
    candidates are global ids too.
    """
    m = cand.shape[0]
    xs = np.empty(m)
    for j in range(m):
        xs[j] = px[cand[j]]
    order = np.argsort(xs)
    sx = xs[order]
    sid = cand[order]
    best = np.empty(nn)
    result = bound
    for r in range(own.shape[0]):
        p = own[r]
        x0 = px[p]
        y0 = py[p]
        for j in range(nn):
            best[j] = np.inf
        pos = np.searchsorted(sx, x0)
        # scan right then left while the x-gap alone cannot exceed the bound
        j = pos
        while j < m:
            dx = sx[j] - x0
            if dx * dx >= result:
                break
            q = sid[j]
            if q != p:
                dy = py[q] - y0
                _kth_insert(best, nn, dx * dx + dy * dy)
            j += 1
        j = pos - 1
        while j >= 0:
            dx = sx[j] - x0
            if dx * dx >= result:
                break
            q = sid[j]
            if q != p:
                dy = py[q] - y0
                _kth_insert(best, nn, dx * dx + dy * dy)
            j -= 1
        if best[nn - 1] < result:
            result = best[nn - 1]
    return result


@njit(**_nj)
def nth_sq_bruteforce(px, py, p, cand, nn):
    best = np.full(nn, np.inf)
    for j in range(cand.shape[0]):
        q = cand[j]
        if q == p:
            continue
        dx = px[q] - px[p]
        dy = py[q] - py[p]
        _kth_insert(best, nn, dx * dx + dy * dy)
    return best[nn - 1]


@njit(**_nj)
def max_sqdist_ids(px, py, ids):
    best = 0.0
    n = ids.shape[0]
    for i in range(n):
        a = ids[i]
        for j in range(i + 1, n):
            b = ids[j]
            dx = px[a] - px[b]
            dy = py[a] - py[b]
            d = dx * dx + dy * dy
            if d > best:
                best = d
    return best


@njit(**_nj)
def hilbert_keys(xs, ys, x0, y0, side, bits):
    n = xs.shape[0]
    out = np.empty(n, dtype=np.int64)
    scale = (1 << bits) - 1
    for i in range(n):
        if side > 0:
            fx = (xs[i] - x0) / side
            fy = (ys[i] - y0) / side
        else:
            fx = 0.0
            fy = 0.0
        x = int(min(max(fx, 0.0), 1.0) * scale)
        y = int(min(max(fy, 0.0), 1.0) * scale)
        d = 0
        s = 1 << (bits - 1)
        while s > 0:
            rx = 1 if (x & s) > 0 else 0
            ry = 1 if (y & s) > 0 else 0
            d += s * s * ((3 * rx) ^ ry)
            if ry == 0:
                if rx == 1:
                    x = s - 1 - x
                    y = s - 1 - y
                x, y = y, x
            s >>= 1
        out[i] = d
    return out
