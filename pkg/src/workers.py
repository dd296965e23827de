"""
Row-band fan-out for intra-frame parallelism

Bands have a fixed height independent of the worker count and results are
joined in band order, so the output never depends on how many threads ran.
numpy releases the GIL in the heavy kernels, so threads are enough.
"""
from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

DEFAULT_BAND_ROWS = 16

T = TypeVar("T")


def row_bands(total_rows: int, band_rows: int = DEFAULT_BAND_ROWS) -> List[slice]:
    band_rows = max(1, int(band_rows))
    return [slice(start, min(start + band_rows, total_rows))
            for start in range(0, total_rows, band_rows)]


def map_bands(fn: Callable[[slice], T], total_rows: int, workers: int = 1,
              band_rows: int = DEFAULT_BAND_ROWS) -> List[T]:
    """Apply fn to every row band; results come back in band order"""
    bands = row_bands(total_rows, band_rows)
    if workers <= 1 or len(bands) <= 1:
        return [fn(band) for band in bands]
    with ThreadPoolExecutor(max_workers=min(workers, len(bands))) as pool:
        return list(pool.map(fn, bands))


def stack_bands(fn: Callable[[slice], np.ndarray], total_rows: int, workers: int = 1,
                band_rows: int = DEFAULT_BAND_ROWS) -> np.ndarray:
    """map_bands for functions returning row blocks; concatenates along axis 0"""
    return np.concatenate(map_bands(fn, total_rows, workers, band_rows), axis=0)
