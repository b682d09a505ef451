# src/utils/parallel.py
import concurrent.futures
import logging
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1,
                label: str = "任务") -> List[R]:
    """并发执行 fn(item)，结果按提交顺序返回。

    workers=1 时在当前线程顺序执行；任何一个任务出错都会在记录日志后重新抛出。
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    results: List[R] = [None] * len(items)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(fn, item): i for i, item in enumerate(items)}
        for future in concurrent.futures.as_completed(future_to_index):
            index = future_to_index[future]
            try:
                results[index] = future.result()
            except Exception as e:
                logger.error(f"第{index + 1}个{label}执行出错: {str(e)}")
                raise
    logger.debug(f"{len(items)} 个{label}已完成（{workers} 个线程）")
    return results
