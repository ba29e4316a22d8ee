"""Deterministic parallel map over independent output cells.

Decryption of a secure matrix is embarrassingly parallel: every output cell
is a pure function of immutable ciphertexts and keys. Workers are forked so
they inherit the payload (ciphertexts, keys, cached BSGS tables) by
copy-on-write; only chunk index ranges and integer results cross process
boundaries. Results are reassembled in index order, so any worker count
produces the same output as a serial run.

The payload handoff goes through a module global, which makes this helper
non-reentrant: one parallel map at a time per process. The training loop is
sequential, so that is not a restriction in practice. On platforms without
fork the map silently degrades to serial execution.
"""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

_PAYLOAD: Callable[[int], object] | None = None


def _run_chunk(span: tuple[int, int]) -> list:
    fn = _PAYLOAD
    assert fn is not None, "worker forked without a payload"
    lo, hi = span
    return [fn(i) for i in range(lo, hi)]


def _fork_context():
    try:
        return mp.get_context("fork")
    except ValueError:
        return None


def parallel_map(fn: Callable[[int], T], n: int, workers: int = 1) -> list[T]:
    """[fn(0), fn(1), ..., fn(n-1)], computed by `workers` forked processes.

    fn must be pure and its results picklable. workers <= 1 runs serially.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    if workers == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    ctx = _fork_context()
    if ctx is None:
        return [fn(i) for i in range(n)]
    # A few chunks per worker smooths out uneven per-cell cost.
    chunk = max(1, -(-n // (workers * 4)))
    spans = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    global _PAYLOAD
    _PAYLOAD = fn
    try:
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = pool.map(_run_chunk, spans)
            out: list[T] = []
            for part in parts:
                out.extend(part)
    finally:
        _PAYLOAD = None
    return out
