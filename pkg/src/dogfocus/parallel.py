"""Partitioned execution of the detection pipeline.

The scale set is split into ``M`` contiguous, balanced index sets.  After
stretching, the image spectrum is computed once and shared read-only
(the broadcast); each worker thread smooths the levels it owns; the
per-worker outputs are then copied into one ordered stack (the gather)
before DoG and detection run on the assembled pyramid.

Each level is computed by the same single-threaded FFT calls regardless of
which worker owns it, so results are bitwise independent of ``M``.
"""

from __future__ import annotations

import time
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .detect import FeatureSet, detect_features
from .errors import TooManyWorkers, WorkerFailure
from .image_io import GrayImage
from .preprocess import StretchParams, histogram_stretch
from .scale_space import GaussianPyramid, ScaleGrid, build_dog, image_spectrum, smooth_from_spectrum


@dataclass(frozen=True)
class Partition:
    M: int
    index_sets: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class PhaseTimings:
    stretch_ms: float
    pyramid_ms: float
    gather_ms: float
    detect_ms: float
    total_ms: float

    PHASES = ("stretch_ms", "pyramid_ms", "gather_ms", "detect_ms", "total_ms")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.PHASES}


def make_partition(n_levels: int, M: int) -> Partition:
    """Split 1-based levels ``1..n_levels`` into ``M`` contiguous sets; sizes differ by <= 1."""
    if n_levels < 1:
        raise ValueError(f"n_levels must be >= 1, got {n_levels}")
    if M < 1 or M > n_levels:
        raise TooManyWorkers(f"worker count must be in [1, {n_levels}], got {M}")
    base, extra = divmod(n_levels, M)
    sets = []
    start = 1
    for m in range(M):
        size = base + (1 if m < extra else 0)
        sets.append(tuple(range(start, start + size)))
        start += size
    return Partition(M, tuple(sets))


def _ms(t0: int, t1: int) -> float:
    return (t1 - t0) / 1e6


def _smooth_levels(spectrum, shape, grid: ScaleGrid, indices):
    return [smooth_from_spectrum(spectrum, shape, grid.scale(i)) for i in indices]


def run_pipeline(
    img: GrayImage,
    grid: ScaleGrid | None = None,
    workers: int = 1,
    params: StretchParams | None = None,
    min_response: float = 0.0,
    executor: Executor | None = None,
) -> tuple[FeatureSet, PhaseTimings]:
    """Stretch, smooth at every scale across ``workers`` threads, gather, DoG, detect.

    ``executor`` lets callers share a bounded pool; otherwise a pool of
    ``workers`` threads is owned by this call.  Any worker exception aborts
    the run with :class:`WorkerFailure` naming that worker's scale indices.
    """
    grid = grid or ScaleGrid()
    params = params or StretchParams()
    partition = make_partition(grid.n_levels, workers)

    t_start = time.perf_counter_ns()
    stretched = histogram_stretch(img, params)
    shape = stretched.shape
    spectrum = image_spectrum(stretched.pixels)
    spectrum.setflags(write=False)
    t_stretch = time.perf_counter_ns()

    if workers == 1 and executor is None:
        indices = partition.index_sets[0]
        try:
            results = [_smooth_levels(spectrum, shape, grid, indices)]
        except Exception as exc:
            raise WorkerFailure(indices, exc) from exc
    else:
        own = executor is None
        pool = executor or ThreadPoolExecutor(max_workers=workers, thread_name_prefix="dof-level")
        try:
            futures = [
                (idx, pool.submit(_smooth_levels, spectrum, shape, grid, idx))
                for idx in partition.index_sets
            ]
            results = []
            for idx, fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:
                    for _, other in futures:
                        other.cancel()
                    raise WorkerFailure(idx, exc) from exc
        finally:
            if own:
                pool.shutdown(wait=True)
    t_pyramid = time.perf_counter_ns()

    levels = np.empty((grid.n_levels,) + shape)
    for idx, planes in zip(partition.index_sets, results):
        for i, plane in zip(idx, planes):
            levels[i - 1] = plane
    pyramid = GaussianPyramid(levels, grid)
    t_gather = time.perf_counter_ns()

    features = detect_features(build_dog(pyramid), min_response=min_response, workers=workers)
    t_end = time.perf_counter_ns()

    timings = PhaseTimings(
        stretch_ms=_ms(t_start, t_stretch),
        pyramid_ms=_ms(t_stretch, t_pyramid),
        gather_ms=_ms(t_pyramid, t_gather),
        detect_ms=_ms(t_gather, t_end),
        total_ms=_ms(t_start, t_end),
    )
    return features, timings
