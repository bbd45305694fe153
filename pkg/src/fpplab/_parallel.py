"""Replicate-level parallel map with order-preserving results."""

from concurrent.futures import ProcessPoolExecutor


def pmap(fn, tasks, jobs=1):
    """``[fn(t) for t in tasks]``, optionally across ``jobs`` processes.

    Results come back in task order, so output is independent of ``jobs``.
    """
    tasks = list(tasks)
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
