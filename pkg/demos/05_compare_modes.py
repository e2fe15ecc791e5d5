"""Time the three update strategies on one input.

parallel-kinetic and serial-kinetic update the mesh locally; rebuild
triangulates the moved points from scratch every step.  All three end with
the same mesh.
"""

import os
import time

import numpy as np

from kdt import KineticConfig, KineticState, step

n = int(os.environ.get("KDT_DEMO_N", 30_000))
steps = 20
pts = np.random.default_rng(8).random((n, 2))

results = {}
for mode in ("parallel-kinetic", "serial-kinetic", "rebuild"):
    state = KineticState(pts, KineticConfig(threshold=256, steps=steps, seed=8, mode=mode))
    start = time.perf_counter()
    for _ in range(steps):
        step(state)
    results[mode] = (time.perf_counter() - start, state.tri.canonical_edges_array())

base = results["rebuild"][0]
for mode, (wall, _) in results.items():
    print(f"{mode:<17} {wall:7.2f} s   {base / wall:5.2f}x vs rebuild")
edges = [e for _, e in results.values()]
print("identical final meshes:", all(np.array_equal(edges[0], e) for e in edges[1:]))
print("threads available:", os.cpu_count())
