"""Thread-pool worker for per-case stages"""

import concurrent.futures
import logging
from typing import Callable, List, Tuple, TypeVar

from src.config import Config

logger = logging.getLogger(__name__)

T = TypeVar("T")


class ChunkWorker:
    """Runs a function over contiguous case ranges and reassembles in order.

    Results depend only on the chunk boundaries, never on the thread count.
    """

    def __init__(self, threads: int = Config.DEFAULT_THREADS, chunk_size: int = Config.CHUNK_SIZE):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        if chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        self.threads = threads
        self.chunk_size = chunk_size

    def chunks(self, n: int) -> List[Tuple[int, int]]:
        return [(start, min(start + self.chunk_size, n)) for start in range(0, n, self.chunk_size)]

    def map(self, fn: Callable[[int, int], T], n: int) -> List[T]:
        ranges = self.chunks(n)
        if self.threads == 1 or len(ranges) <= 1:
            return [fn(start, stop) for start, stop in ranges]

        results: List[T] = [None] * len(ranges)
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.threads) as executor:
            future_to_chunk = {
                executor.submit(fn, start, stop): position
                for position, (start, stop) in enumerate(ranges)
            }
            for future in concurrent.futures.as_completed(future_to_chunk):
                position = future_to_chunk[future]
                try:
                    results[position] = future.result()
                except Exception:
                    start, stop = ranges[position]
                    logger.error("chunk %d:%d failed", start, stop)
                    raise
        return results
