import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, List, Optional

import numpy as np

from bridgesim.core import config
from bridgesim.core.errors import ArgumentError
from bridgesim.core.rng import RngSpec
from bridgesim.engines.guided import BridgeBatch
from bridgesim.sde.models import PathBatch

logger = logging.getLogger("bridgesim.workers.batch")

# simulate(n_paths, rng) -> PathBatch | BridgeBatch
ChunkFn = Callable[[int, RngSpec], PathBatch]


def merge_batches(parts: List[PathBatch]) -> PathBatch:
    first = parts[0]
    states = np.concatenate([p.states for p in parts], axis=0)
    if isinstance(first, BridgeBatch):
        return replace(
            first,
            states=states,
            log_psi=np.concatenate([p.log_psi for p in parts]),
            endpoint_mismatch=any(p.endpoint_mismatch for p in parts),
        )
    return replace(first, states=states)


class BatchRunner:
    """
    Splits an n-path job into fixed-size chunks; chunk i draws from
    rng.child(i). Chunk layout depends only on n and chunk_size, so results
    are identical for any number of threads.
    """

    def __init__(self, threads: int = 1, chunk_size: Optional[int] = None):
        self.threads = max(1, int(threads))
        self.chunk_size = int(chunk_size or config.CHUNK_SIZE)
        if self.chunk_size < 1:
            raise ArgumentError(f"chunk size must be positive, got {self.chunk_size}")

    def chunks(self, n: int) -> List[int]:
        full, rest = divmod(n, self.chunk_size)
        return [self.chunk_size] * full + ([rest] if rest else [])

    def run(self, simulate: ChunkFn, n: int, rng: RngSpec) -> PathBatch:
        if n < 1:
            raise ArgumentError(f"need at least one path, got {n}")
        sizes = self.chunks(n)
        jobs = [(size, rng.child(i)) for i, size in enumerate(sizes)]
        if self.threads == 1 or len(jobs) == 1:
            parts = [simulate(size, child) for size, child in jobs]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                parts = list(pool.map(lambda job: simulate(*job), jobs))
        logger.debug(f"Ran {n} paths in {len(sizes)} chunks on {self.threads} threads")
        return merge_batches(parts)
