"""Single-sample latency measurement."""

import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from ..exceptions import DataError

WARMUP = 10


@dataclass(frozen=True)
class Timing:
    """Per-sample latency in microseconds.

    ``median_us`` is the median of block means (five blocks), which resists
    scheduler hiccups better than the plain mean.
    """

    mean_us: float
    std_us: float
    median_us: float
    samples: int

    def to_dict(self):
        return asdict(self)


def _runner(model):
    if hasattr(model, "forward"):
        return model.forward
    if callable(model):
        return model
    raise TypeError(f"cannot time {type(model).__name__}: needs a forward() method or to be callable")


def median_of_means(values, blocks=5):
    values = np.asarray(values, dtype=np.float64)
    blocks = max(1, min(blocks, len(values)))
    return float(np.median([chunk.mean() for chunk in np.array_split(values, blocks)]))


def time_single_inference(model, samples, warmup=WARMUP, threads=1):
    """Time ``model.forward`` on each sample individually after ``warmup`` calls.

    BLAS is limited to ``threads`` threads while timing; the clock is
    :func:`time.perf_counter`.
    """
    samples = np.asarray(samples)
    if len(samples) < 1:
        raise DataError("need at least one sample to time")
    run = _runner(model)
    times = np.empty(len(samples))
    with threadpool_limits(limits=threads):
        for i in range(warmup):
            run(samples[i % len(samples)])
        for i, x in enumerate(samples):
            start = time.perf_counter()
            run(x)
            times[i] = time.perf_counter() - start
    us = times * 1e6
    return Timing(float(us.mean()), float(us.std()), median_of_means(us), len(us))
