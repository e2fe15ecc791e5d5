"""Exact-sign planar predicates and small distance utilities.

Both predicates run a floating-point filter first (static error bounds in the
style of adaptive-precision predicates) and fall back to exact expansion
arithmetic only when the filter cannot certify the sign.  The exact path
multiplies out every monomial of the determinant with error-free products and
accumulates the pieces into a non-overlapping expansion, whose most
significant component carries the sign.

Expansions stay exact only while no partial product underflows.  Inputs are
scaled by a power of two first; coordinates whose magnitudes differ by more
than the exponent range allows go to a rational evaluation instead.
"""

import enum
import math
import warnings
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit, objmode
from numba.core.errors import NumbaWarning

from .errors import DegenerateTriangleError, InvalidInputError

__all__ = [
    "Point",
    "Sign",
    "orient2d",
    "in_circle",
    "squared_distance",
    "diameter",
]

_EPS = 2.0**-53
_SPLITTER = 2.0**27 + 1.0
_CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_ICC_BOUND = (10.0 + 96.0 * _EPS) * _EPS
# below this magnitude partial underflow can break the filter's error model
_TINY = 1e-200
# exact path: exponent the largest coordinate is scaled to, and the smallest
# exponent a nonzero coordinate may then have (degree d products keep their
# low bits while d * (e - 53) >= -1074)
_ORIENT_TOP, _ORIENT_LOW = 500, -480
_INCIRCLE_TOP, _INCIRCLE_LOW = 240, -212

# the rational fallback runs in object mode; kernels that can reach it are
# compiled nogil and numba warns about that on every compile
warnings.filterwarnings("ignore", message="Code running in object mode", category=NumbaWarning)


class Point(NamedTuple):
    x: float
    y: float


class Sign(enum.IntEnum):
    NEGATIVE = -1
    ZERO = 0
    POSITIVE = 1
    # orientation aliases
    CW = -1
    COLLINEAR = 0
    CCW = 1
    # circle aliases
    OUTSIDE = -1
    ON_CIRCLE = 0
    INSIDE = 1


# --- error-free transformations ------------------------------------------


@njit(cache=True, inline="always")
def _two_sum(a, b):
    x = a + b
    bv = x - a
    av = x - bv
    return x, (a - av) + (b - bv)


@njit(cache=True, inline="always")
def _fast_two_sum(a, b):
    x = a + b
    return x, b - (x - a)


@njit(cache=True, inline="always")
def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


@njit(cache=True, inline="always")
def _two_product(a, b):
    x = a * b
    ahi, alo = _split(a)
    bhi, blo = _split(b)
    err = x - ahi * bhi
    err -= alo * bhi
    err -= ahi * blo
    return x, alo * blo - err


@njit(cache=True)
def _grow(e, elen, b, out):
    """out <- e + b, zero components eliminated; returns the new length."""
    q = b
    n = 0
    for i in range(elen):
        q, hh = _two_sum(q, e[i])
        if hh != 0.0:
            out[n] = hh
            n += 1
    if q != 0.0 or n == 0:
        out[n] = q
        n += 1
    return n


@njit(cache=True)
def _scale(e, elen, b, out):
    """out <- e * b exactly (e non-overlapping); returns the new length."""
    bhi, blo = _split(b)
    n = 0
    ahi, alo = _split(e[0])
    q = e[0] * b
    err = q - ahi * bhi
    err -= alo * bhi
    err -= ahi * blo
    hh = alo * blo - err
    if hh != 0.0:
        out[n] = hh
        n += 1
    for i in range(1, elen):
        ahi, alo = _split(e[i])
        p1 = e[i] * b
        err = p1 - ahi * bhi
        err -= alo * bhi
        err -= ahi * blo
        p0 = alo * blo - err
        s, hh = _two_sum(q, p0)
        if hh != 0.0:
            out[n] = hh
            n += 1
        q, hh = _fast_two_sum(p1, s)
        if hh != 0.0:
            out[n] = hh
            n += 1
    if q != 0.0 or n == 0:
        out[n] = q
        n += 1
    return n


@njit(cache=True)
def _accumulate(acc, alen, e, elen, tmp):
    """acc <- acc + e (component by component); returns (acc, tmp, length)."""
    for i in range(elen):
        alen = _grow(acc, alen, e[i], tmp)
        acc, tmp = tmp, acc
    return acc, tmp, alen


@njit(cache=True)
def _expansion_sign(e, elen):
    top = e[elen - 1]
    if top > 0.0:
        return 1
    if top < 0.0:
        return -1
    return 0


@njit(cache=True)
def _pow2_shift(vals, top):
    """vals * 2**k with k chosen so the largest magnitude lands in [2**(top-1), 2**top).

    The shift is applied per value with ldexp, so k may exceed the range of a
    single double.  All-zero input is returned unchanged.
    """
    m = 0.0
    for v in vals:
        m = max(m, abs(v))
    out = vals.copy()
    if m == 0.0:
        return out
    _, ex = math.frexp(m)
    for i in range(out.shape[0]):
        out[i] = math.ldexp(out[i], top - ex)
    return out


@njit(cache=True)
def _min_exponent(vals):
    """Smallest binary exponent among the nonzero values (0 if all are zero)."""
    lo = 0
    first = True
    for v in vals:
        if v != 0.0:
            _, ex = math.frexp(v)
            if first or ex < lo:
                lo = ex
                first = False
    return lo


def _rational_sign(vals) -> int:
    """Exact determinant sign by rational arithmetic (orient: 6 values, incircle: 8)."""
    q = [Fraction(v) for v in vals]
    if len(q) == 6:
        ax, ay, bx, by, cx, cy = q
        det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    else:
        ax, ay, bx, by, cx, cy, dx, dy = q
        adx, ady, bdx, bdy, cdx, cdy = ax - dx, ay - dy, bx - dx, by - dy, cx - dx, cy - dy
        det = ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
               + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
               + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))
    return (det > 0) - (det < 0)


@njit(cache=True)
def _rational_sign_nb(vals):
    with objmode(r="int64"):
        r = _rational_sign(vals.tolist())
    return r


@njit(cache=True)
def _orient_expansion(ax, ay, bx, by, cx, cy, out):
    """Exact expansion of det[[ax, ay, 1], [bx, by, 1], [cx, cy, 1]]."""
    buf = np.empty(16)
    n = 0
    terms = (
        (ax, by, 1.0), (ay, bx, -1.0),
        (bx, cy, 1.0), (by, cx, -1.0),
        (cx, ay, 1.0), (cy, ax, -1.0),
    )
    for u, v, s in terms:
        hi, lo = _two_product(u, v)
        n = _grow(out, n, s * lo, buf)
        out[:n] = buf[:n]
        n = _grow(out, n, s * hi, buf)
        out[:n] = buf[:n]
    return n


@njit(cache=True)
def orient2d_exact(ax, ay, bx, by, cx, cy):
    raw = np.array([ax, ay, bx, by, cx, cy])
    v = _pow2_shift(raw, _ORIENT_TOP)
    if _min_exponent(v) < _ORIENT_LOW:
        return _rational_sign_nb(raw)
    out = np.empty(16)
    n = _orient_expansion(v[0], v[1], v[2], v[3], v[4], v[5], out)
    return _expansion_sign(out, n)


@njit(cache=True)
def orient2d_sign(ax, ay, bx, by, cx, cy):
    """+1 if (a, b, c) turns counter-clockwise, -1 clockwise, 0 collinear."""
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    detsum = abs(detleft) + abs(detright)
    if detsum > _TINY:
        bound = _CCW_BOUND * detsum
        if det > bound:
            return 1
        if -det > bound:
            return -1
    return orient2d_exact(ax, ay, bx, by, cx, cy)


@njit(cache=True)
def _lifted_term(o, olen, px, py, sign, acc, alen, tmp):
    """acc += sign * (px^2 + py^2) * o"""
    t1 = np.empty(2 * olen)
    t2 = np.empty(4 * olen)
    n1 = _scale(o, olen, px, t1)
    n2 = _scale(t1, n1, sign * px, t2)
    acc, tmp, alen = _accumulate(acc, alen, t2, n2, tmp)
    n1 = _scale(o, olen, py, t1)
    n2 = _scale(t1, n1, sign * py, t2)
    acc, tmp, alen = _accumulate(acc, alen, t2, n2, tmp)
    return acc, tmp, alen


@njit(cache=True)
def incircle_exact(ax, ay, bx, by, cx, cy, dx, dy):
    raw = np.array([ax, ay, bx, by, cx, cy, dx, dy])
    v = _pow2_shift(raw, _INCIRCLE_TOP)
    if _min_exponent(v) < _INCIRCLE_LOW:
        return _rational_sign_nb(raw)
    ax, ay, bx, by, cx, cy, dx, dy = v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]
    # cofactor expansion along the lifted column of
    # | x  y  x^2+y^2  1 | for rows a, b, c, d
    acc = np.empty(512)
    tmp = np.empty(512)
    alen = 0
    o = np.empty(16)
    n = _orient_expansion(bx, by, cx, cy, dx, dy, o)
    acc, tmp, alen = _lifted_term(o, n, ax, ay, 1.0, acc, alen, tmp)
    n = _orient_expansion(ax, ay, cx, cy, dx, dy, o)
    acc, tmp, alen = _lifted_term(o, n, bx, by, -1.0, acc, alen, tmp)
    n = _orient_expansion(ax, ay, bx, by, dx, dy, o)
    acc, tmp, alen = _lifted_term(o, n, cx, cy, 1.0, acc, alen, tmp)
    n = _orient_expansion(ax, ay, bx, by, cx, cy, o)
    acc, tmp, alen = _lifted_term(o, n, dx, dy, -1.0, acc, alen, tmp)
    return _expansion_sign(acc, alen)


@njit(cache=True)
def incircle_sign(ax, ay, bx, by, cx, cy, dx, dy):
    """+1 if d lies inside the circle through a, b, c (taken counter-clockwise).

    For clockwise (a, b, c) the sign flips; collinear (a, b, c) returns the
    sign of the degenerate determinant.
    """
    adx = ax - dx
    bdx = bx - dx
    cdx = cx - dx
    ady = ay - dy
    bdy = by - dy
    cdy = cy - dy
    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    alift = adx * adx + ady * ady
    cdxady = cdx * ady
    adxcdy = adx * cdy
    blift = bdx * bdx + bdy * bdy
    adxbdy = adx * bdy
    bdxady = bdx * ady
    clift = cdx * cdx + cdy * cdy
    det = (alift * (bdxcdy - cdxbdy)
           + blift * (cdxady - adxcdy)
           + clift * (adxbdy - bdxady))
    permanent = ((abs(bdxcdy) + abs(cdxbdy)) * alift
                 + (abs(cdxady) + abs(adxcdy)) * blift
                 + (abs(adxbdy) + abs(bdxady)) * clift)
    if permanent > _TINY:
        bound = _ICC_BOUND * permanent
        if det > bound:
            return 1
        if -det > bound:
            return -1
    return incircle_exact(ax, ay, bx, by, cx, cy, dx, dy)


@njit(cache=True)
def orient2d_many(coords):
    """Row-wise orient2d over an (m, 6) array."""
    out = np.empty(coords.shape[0], dtype=np.int64)
    for i in range(coords.shape[0]):
        r = coords[i]
        out[i] = orient2d_sign(r[0], r[1], r[2], r[3], r[4], r[5])
    return out


@njit(cache=True)
def incircle_many(coords):
    """Row-wise raw incircle determinant sign over an (m, 8) array."""
    out = np.empty(coords.shape[0], dtype=np.int64)
    for i in range(coords.shape[0]):
        r = coords[i]
        out[i] = incircle_sign(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7])
    return out


@njit(cache=True)
def _max_sqdist(xs, ys):
    best = 0.0
    n = xs.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            dx = xs[i] - xs[j]
            dy = ys[i] - ys[j]
            d = dx * dx + dy * dy
            if d > best:
                best = d
    return best


# --- public API ----------------------------------------------------------


def _coords(p) -> tuple:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInputError(f"non-finite coordinate in {p!r}")
    return x, y


def orient2d(a, b, c) -> Sign:
    """Orientation of the triangle abc (CCW is positive)."""
    return Sign(orient2d_sign(*_coords(a), *_coords(b), *_coords(c)))


def in_circle(a, b, c, p) -> Sign:
    """Position of p relative to the circumcircle of abc.

    INSIDE means strictly inside.  The result does not depend on the
    orientation of abc; a collinear abc has no circumcircle and raises
    DegenerateTriangleError.
    """
    a, b, c, p = _coords(a), _coords(b), _coords(c), _coords(p)
    o = orient2d_sign(*a, *b, *c)
    if o == 0:
        raise DegenerateTriangleError(f"collinear triangle {a}, {b}, {c}")
    return Sign(o * incircle_sign(*a, *b, *c, *p))


def squared_distance(p, q) -> float:
    px, py = _coords(p)
    qx, qy = _coords(q)
    dx = px - qx
    dy = py - qy
    return dx * dx + dy * dy


def diameter(points: Sequence) -> float:
    """Largest pairwise distance (brute force)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise InvalidInputError("diameter of an empty point set")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("non-finite coordinate")
    return math.sqrt(_max_sqdist(np.ascontiguousarray(pts[:, 0]),
                                 np.ascontiguousarray(pts[:, 1])))
