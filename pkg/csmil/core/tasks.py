# csmil/core/tasks.py
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Optional, Sequence, TypeVar

from threadpoolctl import threadpool_limits
from tqdm import tqdm

from csmil.core.config import get_settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _single_threaded(fn: Callable[[T], R], item: T) -> R:
    # one BLAS thread everywhere, so serial and parallel runs reduce identically
    with threadpool_limits(limits=1):
        return fn(item)


def _show_progress() -> bool:
    settings = get_settings()
    return settings.PROGRESS and settings.LOG != "error"


def run_jobs(
    fn: Callable[[T], R],
    items: Sequence[T],
    jobs: Optional[int] = None,
    desc: Optional[str] = None,
) -> List[R]:
    """
    Map a picklable top-level function over items.
    Results always come back in item order, whatever the completion order.
    """
    jobs = get_settings().DEFAULT_JOBS if jobs is None else jobs
    items = list(items)
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")

    progress = tqdm(total=len(items), desc=desc, disable=not _show_progress(), leave=False)
    try:
        if jobs == 1 or len(items) <= 1:
            results: List[Any] = []
            for item in items:
                results.append(_single_threaded(fn, item))
                progress.update(1)
            return results

        logger.debug(f"Running {len(items)} jobs on {jobs} workers ({desc or fn.__name__})")
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_single_threaded, fn, item) for item in items]
            for future in futures:
                future.add_done_callback(lambda _: progress.update(1))
            return [future.result() for future in futures]
    finally:
        progress.close()
