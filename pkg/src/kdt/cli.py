"""Command-line front end: ``kdt gen | run | validate | bench``.

Exit codes: 0 ok, 2 invalid input, 3 validation failure, 4 internal
consistency failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import statistics
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DegenerateInputError,
    DuplicateOverflowError,
    DuplicatePointError,
    InternalConsistencyError,
    InvalidInputError,
    KDTError,
    OutOfDomainError,
    ParseError,
)
from .kinetics import MODES, KineticConfig, KineticState, step
from .oracle import ORACLE_MAX_POINTS, oracle_edge_set
from .pointio import generate, read_points, write_points
from .runtime import THREADS_ENV
from .triangulation import Triangulation, build_initial, dumps, load_json

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVALID = 3
EXIT_INTERNAL = 4


def _git_describe() -> str | None:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(command: str, args: argparse.Namespace, **resolved) -> dict:
    """Resolved configuration embedded at the top of every output."""
    flags = {k: v for k, v in vars(args).items() if k not in ("func",)}
    out = {
        "manifest": {
            "tool": "kdt",
            "version": __version__,
            "git": _git_describe(),
            "command": command,
            "flags": flags,
        }
    }
    out["manifest"].update(resolved)
    return out


def _config(args, mode=None, workers=None) -> KineticConfig:
    return KineticConfig(
        N=args.n_neighbors,
        threshold=args.threshold,
        steps=args.steps,
        seed=args.seed,
        mode=mode or args.mode,
        repartition=args.repartition,
        routing=args.routing,
        workers=workers if workers is not None else args.workers,
        validate=args.validate,
    )


# --- gen -----------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.n < 3:
        raise InvalidInputError("n must be at least 3")
    pts = generate(args.n, args.seed, args.distribution)
    write_points(args.out, pts)
    print(f"wrote {len(pts)} points to {args.out}")
    return EXIT_OK


# --- run -----------------------------------------------------------------


def cmd_run(args) -> int:
    pts = read_points(args.points)
    cfg = _config(args)
    man = manifest("run", args, config=vars(cfg) | {"workers": cfg.resolved_workers()},
                   points_sha256=_sha256(args.points), n=len(pts),
                   threads_env=THREADS_ENV)
    dump_dir = Path(args.out) if args.out else (
        Path(args.metrics).parent if args.metrics else Path("."))
    if args.dump_every:
        dump_dir.mkdir(parents=True, exist_ok=True)
    sink = open(args.metrics, "w", encoding="utf-8") if args.metrics else sys.stdout
    try:
        sink.write(json.dumps(man) + "\n")
        state = KineticState(pts, cfg)
        if args.dump_every and cfg.steps == 0:
            (dump_dir / "dump_t000000.json").write_text(
                dumps(state.tri, manifest=man["manifest"], t=0))
        for _ in range(cfg.steps):
            m = step(state)
            sink.write(json.dumps(m.to_json()) + "\n")
            if args.dump_every and state.t % args.dump_every == 0:
                path = dump_dir / f"dump_t{state.t:06d}.json"
                path.write_text(dumps(state.tri, manifest=man["manifest"], t=state.t))
        sink.flush()
    finally:
        if sink is not sys.stdout:
            sink.close()
    return EXIT_OK


# --- validate ------------------------------------------------------------


def _load_any(path) -> tuple:
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    if text.lstrip().startswith("{"):
        try:
            verts, tris = load_json(text)
        except InvalidInputError as exc:
            raise ParseError(str(path), 1, str(exc)) from None
        return verts, Triangulation.from_triangles(verts, tris), "dump"
    from .pointio import parse_points

    verts = parse_points(text, str(path))
    return verts, build_initial(verts), "points"


def cmd_validate(args) -> int:
    path = args.path or args.points
    if not path:
        raise InvalidInputError("validate needs a points or dump file")
    try:
        verts, tri, kind = _load_any(path)
    except InvalidInputError as exc:
        if Path(path).read_text(errors="replace").lstrip().startswith("{"):
            # a dump that is not even a triangulation
            print(f"invalid: {exc}")
            return EXIT_INVALID
        raise
    report = tri.is_delaunay()
    print(f"{kind}: {len(verts)} vertices, {tri.n_real} triangles")
    print(f"orientation errors: {report.bad_orientation}, link errors: {report.bad_links}, "
          f"violations: {len(report.violations)}")
    tv = tri._tv
    for t, v in report.violations:
        print(f"  violation: triangle {list(map(int, tv[t]))} contains vertex {v}")
    ok = report.ok
    if args.oracle:
        if len(verts) > ORACLE_MAX_POINTS:
            print(f"oracle: skipped (n={len(verts)} > {ORACLE_MAX_POINTS})")
        else:
            match = tri.canonical_edge_set() == oracle_edge_set(verts)
            print("oracle: match" if match else "oracle: MISMATCH")
            ok = ok and match
    print("valid" if ok else "invalid")
    return EXIT_OK if ok else EXIT_INVALID


# --- bench ---------------------------------------------------------------


def _edge_digest(tri) -> str:
    return hashlib.sha256(tri.canonical_edges_array().tobytes()).hexdigest()[:16]


def _bench_once(pts, cfg) -> tuple:
    state = KineticState(pts, cfg)
    start = time.perf_counter()
    churn = []
    for _ in range(cfg.steps):
        m = step(state)
        if m.moves:
            churn.append((m.edges_deleted + m.edges_inserted) / len(m.moves))
    wall = time.perf_counter() - start
    return wall, state, churn


def cmd_bench(args) -> int:
    pts = read_points(args.points)
    modes = args.modes.split(",")
    for mode in modes:
        if mode not in MODES:
            raise InvalidInputError(f"unknown mode {mode!r}")
    worker_list = [int(w) for w in args.workers_list.split(",")] if args.workers_list else [None]
    grid = []
    for mode in modes:
        if mode == "parallel-kinetic":
            grid.extend((mode, w) for w in worker_list)
        else:
            grid.append((mode, 1 if mode == "serial-kinetic" else worker_list[0]))
    rows = []
    for mode, workers in grid:
        cfg = _config(args, mode=mode, workers=workers)
        times = []
        digest = None
        churn = []
        spread = 0.0
        for _ in range(args.repeats):
            wall, state, churn = _bench_once(pts, cfg)
            times.append(wall)
            digest = _edge_digest(state.tri)
            spread = state.spread_global
        rows.append({
            "mode": mode,
            "workers": cfg.resolved_workers(),
            "median_s": statistics.median(times),
            "times_s": times,
            "edges_digest": digest,
            "churn_per_move_mean": float(np.mean(churn)) if churn else 0.0,
            "churn_per_move_max": float(np.max(churn)) if churn else 0.0,
            "spread_max": spread,
        })
    base = {r["mode"]: r["median_s"] for r in rows if r["mode"] != "parallel-kinetic"}
    for r in rows:
        if "rebuild" in base:
            r["speedup_vs_rebuild"] = base["rebuild"] / r["median_s"]
        if "serial-kinetic" in base:
            r["speedup_vs_serial"] = base["serial-kinetic"] / r["median_s"]
    man = manifest("bench", args, n=len(pts), points_sha256=_sha256(args.points),
                   cpu_count=os.cpu_count())
    doc = man | {"rows": rows}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"{'mode':<18}{'workers':>8}{'median s':>12}{'vs rebuild':>12}{'vs serial':>11}  edges")
    for r in rows:
        print(f"{r['mode']:<18}{r['workers']:>8}{r['median_s']:>12.3f}"
              f"{r.get('speedup_vs_rebuild', float('nan')):>12.2f}"
              f"{r.get('speedup_vs_serial', float('nan')):>11.2f}  {r['edges_digest']}")
    return EXIT_OK


# --- entry point ---------------------------------------------------------


def _add_sim_flags(p, steps_default=100):
    p.add_argument("--points", required=True, help="point file (# kdt-points v1)")
    p.add_argument("--steps", type=int, default=steps_default)
    p.add_argument("--n-neighbors", type=int, default=5, help="N for the N-th nearest neighbor")
    p.add_argument("--threshold", type=int, default=32, help="max points per quad-tree leaf")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repartition", choices=("lazy", "every-step"), default="lazy")
    p.add_argument("--routing", choices=("tree", "direct"), default="tree")
    p.add_argument("--validate", choices=("local", "full", "none"), default="local",
                   help="per-step mesh check (default: local edge test)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kdt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"kdt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a point file")
    g.add_argument("-n", "--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--distribution", choices=("uniform", "clustered"), default="uniform")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="simulate moving points")
    _add_sim_flags(r)
    r.add_argument("--mode", choices=MODES, default="parallel-kinetic")
    r.add_argument("--workers", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or CPU count)")
    r.add_argument("--metrics", default=None, help="JSON-lines metrics file (default stdout)")
    r.add_argument("--dump-every", type=int, default=0, help="dump the mesh every k steps")
    r.add_argument("--out", default=None, help="directory for mesh dumps")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a point file or mesh dump")
    v.add_argument("path", nargs="?")
    v.add_argument("--points", default=None)
    v.add_argument("--oracle", action="store_true",
                   help=f"also compare with the brute-force oracle (n <= {ORACLE_MAX_POINTS})")
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("bench", help="time modes and worker counts")
    _add_sim_flags(b)
    b.add_argument("--modes", default=",".join(MODES))
    b.add_argument("--workers", dest="workers_list", default=None,
                   help="comma-separated worker counts for parallel-kinetic")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--out", default=None, help="JSON report path")
    b.set_defaults(func=cmd_bench, mode=None, workers=None)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except InternalConsistencyError as exc:
        print(f"kdt: internal consistency failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ParseError, InvalidInputError, DegenerateInputError, DuplicatePointError,
            DuplicateOverflowError, OutOfDomainError, OSError) as exc:
        print(f"kdt: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KDTError as exc:
        print(f"kdt: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
