"""Point files: a `# kdt-points v1` header, then one `x,y` pair per line."""

from __future__ import annotations

import math

import numpy as np

from .errors import ParseError

HEADER = "# kdt-points v1"


def format_points(points) -> str:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    # repr gives the shortest string that round-trips
    lines = [HEADER] + [f"{float(x)!r},{float(y)!r}" for x, y in pts]
    return "\n".join(lines) + "\n"


def write_points(path, points):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_points(points))


def parse_points(text: str, path: str = "<string>") -> np.ndarray:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ParseError(path, 1, f"expected header {HEADER!r}")
    out = []
    for no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(path, no, f"expected 'x,y', got {raw!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(path, no, f"not a number pair: {raw!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError(path, no, "non-finite coordinate")
        out.append((x, y))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def read_points(path) -> np.ndarray:
    with open(path, encoding="ascii", errors="replace") as fh:
        return parse_points(fh.read(), str(path))


def generate(n: int, seed: int, distribution: str = "uniform") -> np.ndarray:
    """n distinct points in the unit square.

    ``clustered`` draws from ceil(sqrt(n)/4) Gaussian blobs with sigma 0.02,
    clipped to the square.  Duplicates are redrawn.
    """
    rng = np.random.default_rng(seed)
    if distribution == "uniform":
        def draw(k):
            return rng.random((k, 2))
    elif distribution == "clustered":
        centers = rng.random((math.ceil(math.sqrt(n) / 4), 2))

        def draw(k):
            which = rng.integers(len(centers), size=k)
            return np.clip(centers[which] + rng.normal(0.0, 0.02, size=(k, 2)), 0.0, 1.0)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    pts = draw(n)
    while True:
        _, first = np.unique(pts, axis=0, return_index=True)
        if len(first) == n:
            return pts
        keep = np.zeros(n, dtype=bool)
        keep[first] = True
        pts[~keep] = draw(int((~keep).sum()))
