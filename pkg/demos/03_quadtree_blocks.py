"""Quad-tree blocks, their neighbor links and transfer routing."""

import numpy as np

from kdt import neighbor_links, quad_tree_division, transfer_point

rng = np.random.default_rng(3)
# denser in one corner, so leaves end up at different depths
pts = rng.random((2000, 2)) ** 3

qt = quad_tree_division(pts, threshold=64)
counts = qt.counts()
print(f"{len(qt.blocks)} leaves, depth {qt.depth}, "
      f"owned per leaf min/max {counts.min()}/{counts.max()}")

links = neighbor_links(qt)
busiest = max(links, key=lambda b: sum(len(v) for v in links[b].values()))
print(f"leaf {busiest} at {qt.blocks[busiest].key} touches:")
for direction, ids in links[busiest].items():
    print(f"  {direction:>5}: {ids}")

# move one point across to a neighbor and count hops both ways
src = busiest
dst = next(iter(qt.blocks[src].neighbor_ids()))
v = qt.blocks[src].owned[0]
print("tree hops:", qt.hops(src, dst, "tree"), " direct hops:", qt.hops(src, dst, "direct"))
transfer_point(qt, v, src, dst)
print(f"vertex {v} now owned by leaf {dst}: {v in qt.blocks[dst].owned}")
