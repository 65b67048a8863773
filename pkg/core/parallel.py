import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from django.conf import settings

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def map_nodes(func: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Apply func to independent per-node work items, keeping input order.

    Runs sequentially unless RISKHEDGE_THREADS (or ``threads``) asks for
    more than one worker.
    """
    items = list(items)
    workers = threads if threads is not None else settings.RISKHEDGE_THREADS
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Mapping {len(items)} nodes over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
