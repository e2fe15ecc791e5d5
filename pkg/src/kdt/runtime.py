"""Bulk-synchronous phase execution.

Work for a phase is split across a thread pool; the mesh kernels release the
GIL, so threads run them concurrently.  Every phase returns only after all of
its work items finished (the barrier), and results come back in submission
order so nothing downstream depends on scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from . import _kernels as K
from .errors import InvalidInputError, KDTError

__all__ = [
    "THREADS_ENV",
    "default_workers",
    "reduce_min",
    "run_phase",
    "split_even",
    "ConflictReport",
    "detect_conflicts",
    "comm_counters",
    "PhaseError",
]

THREADS_ENV = "KDT_THREADS"

_pools: dict = {}


class PhaseError(KDTError):
    """A work item failed; the step that ran the phase must be rolled back."""


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise InvalidInputError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        if n < 1:
            raise InvalidInputError(f"{THREADS_ENV} must be at least 1")
        return n
    return os.cpu_count() or 1


def _pool(workers: int) -> ThreadPoolExecutor:
    pool = _pools.get(workers)
    if pool is None:
        pool = _pools[workers] = ThreadPoolExecutor(max_workers=workers,
                                                    thread_name_prefix="kdt")
    return pool


def reduce_min(values) -> float:
    """Global minimum of per-block values."""
    vals = list(values)
    if not vals:
        raise InvalidInputError("reduce_min of no values")
    return reduce(min, vals)


def run_phase(items, work, workers: int = 1) -> list:
    """Apply ``work`` to every item; results in item order.

    With one worker everything runs inline.  Any failure is re-raised as
    PhaseError after all submitted work has stopped.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        try:
            return [work(x) for x in items]
        except KDTError:
            raise
        except Exception as exc:
            raise PhaseError(f"phase work failed: {exc!r}") from exc
    futures = [_pool(workers).submit(work, x) for x in items]
    results = []
    error = None
    for f in futures:
        try:
            results.append(f.result())
        except Exception as exc:  # wait for every item before failing
            if error is None:
                error = exc
            results.append(None)
    if error is not None:
        if isinstance(error, KDTError):
            raise error
        raise PhaseError(f"phase work failed: {error!r}") from error
    return results


def split_even(indices: np.ndarray, parts: int) -> list:
    """Contiguous, non-empty chunks of ``indices``."""
    parts = max(1, min(parts, len(indices)))
    return [c for c in np.array_split(indices, parts) if len(c)]


@dataclass
class ConflictReport:
    """Groups of movers (by block id) whose affected regions touch.

    ``groups`` lists each multi-member group in execution order, members in
    ascending block id.  ``singletons`` are the movers applied in parallel.
    """

    groups: list = field(default_factory=list)
    singletons: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.groups)

    def to_json(self) -> dict:
        return {"groups": [list(g) for g in self.groups]}


def detect_conflicts(tn: np.ndarray, ptr: np.ndarray, region: np.ndarray,
                     blocks: np.ndarray) -> tuple:
    """Group movers whose triangle sets overlap or are edge-adjacent.

    ``region[ptr[i]:ptr[i+1]]`` are the triangles mover i will replace and
    ``blocks[i]`` its block id (movers are given in ascending block order).
    Returns (report, singleton mover indices, list of group index arrays).
    """
    m = len(ptr) - 1
    if m == 0:
        return ConflictReport(), np.empty(0, dtype=np.int64), []
    roots = K.conflict_roots(tn, tn.shape[0], ptr, region)
    sizes = np.bincount(roots, minlength=m)
    single = np.flatnonzero(sizes[roots] == 1)
    groups = []
    for r in np.flatnonzero(sizes > 1):
        groups.append(np.flatnonzero(roots == r))
    report = ConflictReport(
        groups=[[int(blocks[i]) for i in g] for g in groups],
        singletons=[int(blocks[i]) for i in single],
    )
    return report, single, groups


def comm_counters(moves, qt) -> dict:
    """Per-block distinct neighbor contacts and hop totals for one step's transfers."""
    contacts: dict = {}
    non_neighbor = 0
    for mv in moves:
        if mv.to_block == mv.block:
            continue
        contacts.setdefault(mv.block, set()).add(mv.to_block)
        if mv.to_block not in qt.blocks[mv.block].neighbor_ids():
            non_neighbor += 1
    return {
        "neighbor_contacts": {b: len(s) for b, s in sorted(contacts.items())},
        "max_contacts": max((len(s) for s in contacts.values()), default=0),
        "non_neighbor_transfers": non_neighbor,
    }
