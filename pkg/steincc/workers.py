"""
Worker pool helper shared by the estimators and the experiment runner
"""

import logging
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def run_parallel(
    fn: Callable[[T], R],
    tasks: Iterable[T],
    workers: int = 1,
    processes: bool = False,
) -> List[R]:
    """
    Map fn over tasks, returning results in task order

    Args:
        fn: Function applied to each task (must be picklable when processes=True)
        tasks: Task arguments
        workers: Pool size; 1 or less runs inline
        processes: Use a process pool instead of a thread pool

    Returns:
        List of results, one per task, in input order
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]

    pool_cls = ProcessPoolExecutor if processes else ThreadPoolExecutor
    logger.debug(f"Running {len(tasks)} tasks on {workers} {'processes' if processes else 'threads'}")
    with pool_cls(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
