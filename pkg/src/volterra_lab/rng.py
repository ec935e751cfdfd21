"""Counter-based random streams for reproducible parallel Monte Carlo.

Every (seed, path index, component) triple owns a dedicated Philox stream, so
a path's draws never depend on how many paths are generated, which chunk a
path lands in, or how many workers process the chunks.  Splitting an ensemble
across workers is therefore bitwise-equivalent to generating it serially.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MASK64 = (1 << 64) - 1

BLOCK_SIZE = 4096  # paths per work unit; fixed so worker count never matters


def stream_key(seed: int, path_index: int, component: int) -> np.ndarray:
    """Philox key for one (seed, path, component) stream."""
    lane = ((path_index << 16) ^ component) & _MASK64
    return np.array([seed & _MASK64, lane], dtype=np.uint64)


def path_generator(seed: int, path_index: int, component: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, path_index, component)))


def standard_normals(seed: int, first_path: int, n_paths: int, n_draws: int,
                     dim: int) -> np.ndarray:
    """Array (n_paths, n_draws, dim) of N(0,1) draws on per-stream lanes."""
    out = np.empty((n_paths, n_draws, dim))
    for p in range(n_paths):
        for c in range(dim):
            out[p, :, c] = path_generator(seed, first_path + p, c).standard_normal(n_draws)
    return out


def iter_blocks(n_paths: int, block: int = BLOCK_SIZE):
    start = 0
    while start < n_paths:
        stop = min(start + block, n_paths)
        yield start, stop
        start = stop


def run_blocks(work, n_paths: int, n_workers: int = 1, block: int = BLOCK_SIZE):
    """Apply work(start, stop) over fixed-size path blocks.

    Blocks are identical regardless of n_workers; with n_workers > 1 they are
    dispatched on a thread pool (the heavy numpy calls release the GIL).
    `work` must write into preallocated per-path slots only.
    """
    blocks = list(iter_blocks(n_paths, block))
    if n_workers <= 1 or len(blocks) <= 1:
        for start, stop in blocks:
            work(start, stop)
        return
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(work, start, stop) for start, stop in blocks]
        for fut in futures:
            fut.result()
