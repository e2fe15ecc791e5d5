"""Why the mesh needs exact predicates.

Points that are almost collinear or almost cocircular make the plain
floating-point determinants return the wrong sign.  The filtered predicates
in kdt.geometry agree with an exact integer evaluation every time.
"""

import numpy as np

from kdt import Sign, exact_sign_oracle, in_circle, orient2d


def naive_orient(a, b, c):
    det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return int(np.sign(det))


rng = np.random.default_rng(0)
wrong_naive = 0
wrong_exact = 0
trials = 20_000
for _ in range(trials):
    # c lies on the line through a and b, up to rounding
    a = tuple(rng.random(2))
    b = tuple(rng.random(2) * 1e3)
    t = rng.random() * 2
    c = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
    want = exact_sign_oracle("orient2d", a, b, c)
    wrong_naive += naive_orient(a, b, c) != want
    wrong_exact += orient2d(a, b, c) != want

print(f"near-collinear triples: {trials}")
print(f"  naive float sign wrong: {wrong_naive}")
print(f"  filtered exact sign wrong: {wrong_exact}")

# a tiny triangle whose naive determinant underflows to zero
t = 1e-200
print("orient2d of a 1e-200 triangle:", orient2d((0, 0), (t, 0), (0, t)).name)

# the four corners of a square are exactly cocircular
print("square corner against the other three:",
      in_circle((0, 0), (1, 0), (0, 1), (1, 1)).name)
assert in_circle((0, 0), (1, 0), (0, 1), (1, 1)) == Sign.ZERO
