"""Worker pool for grid evaluations; results always come back in submission order."""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

import config
from errors import DomainError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_jobs(jobs: Optional[int] = None) -> int:
    """Worker count: WFH_SIM_JOBS wins over the flag, the flag over the CPU count."""
    override = os.getenv("WFH_SIM_JOBS", config.WFH_SIM_JOBS)
    if override:
        try:
            jobs = int(override)
        except ValueError:
            raise DomainError(f"WFH_SIM_JOBS must be an integer, got '{override}'")
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs < 1:
        raise DomainError(f"worker count must be >= 1, got {jobs}")
    return jobs


def parallel_map(fn: Callable[[T], R], items: Iterable[T], jobs: Optional[int] = None,
                 desc: str = "evaluating") -> List[R]:
    items = list(items)
    workers = min(resolve_jobs(jobs), max(len(items), 1))
    show_progress = len(items) > 1 and logger.isEnabledFor(logging.INFO)
    if workers == 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=not show_progress, leave=False)]
    logger.info(f"{desc}: {len(items)} tasks on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc,
                         disable=not show_progress, leave=False))
