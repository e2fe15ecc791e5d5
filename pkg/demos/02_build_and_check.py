"""Build a Delaunay triangulation, then check it three ways.

1. the exhaustive empty-circle test,
2. the brute-force oracle on a small input,
3. a corrupted mesh, to show what a violation report looks like.
"""

import numpy as np

from kdt import Triangulation, build_initial, oracle_edge_set
from kdt.oracle import hull_size

rng = np.random.default_rng(42)

pts = rng.random((20_000, 2))
tri = build_initial(pts, seed=1)
rep = tri.is_delaunay()
print(f"{len(pts)} points -> {tri.n_real} triangles, hull {tri.hull_size()}, ok={rep.ok}")
# Euler: 2n - 2 - h real triangles
assert tri.n_real == 2 * len(pts) - 2 - tri.hull_size()

small = rng.random((40, 2))
same = build_initial(small).canonical_edge_set() == oracle_edge_set(small)
print(f"40 points: edges match brute-force oracle: {same}, hull size {hull_size(small)}")

# a grid is full of cocircular quads; the canonical edge set does not depend
# on insertion order
grid = np.array([(x, y) for x in range(30) for y in range(30)], dtype=float)
a = build_initial(grid, seed=1).canonical_edge_set()
b = build_initial(grid, seed=2).canonical_edge_set()
print(f"30x30 grid: {len(a)} canonical edges, seed-independent: {a == b}")

# flip the diagonal of a convex quad and ask the validator
quad = [(0.0, 0.0), (2.0, 0.0), (2.2, 1.5), (0.0, 1.0)]
good = build_initial(quad)
print("quad edges:", good.canonical_edge_set())
bad = Triangulation.from_triangles(quad, [(0, 1, 2), (0, 2, 3)])
if bad.canonical_edge_set() == good.canonical_edge_set():
    bad = Triangulation.from_triangles(quad, [(0, 1, 3), (1, 2, 3)])
rep = bad.is_delaunay()
print(f"flipped quad: ok={rep.ok}, violations={rep.violations}")

# local edits keep the mesh Delaunay
v, log = tri.insert((0.5, 0.5))
print(f"insert: {len(log.removed)} triangles out, {len(log.created)} in, "
      f"{log.n_deleted} edges deleted, {log.n_inserted} inserted")
log = tri.move_point(v, (0.5001, 0.5))
log.extend(tri.delete(17))
print("after move and delete:", tri.is_delaunay().ok)
