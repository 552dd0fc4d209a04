"""
有界并发
多关系、多种子的独立任务可以并发执行，结果按输入顺序合并
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """
    对每个元素调用 fn，返回与输入同序的结果

    Args:
        fn: 任务函数，不同元素之间不能共享可变状态
        items: 任务输入
        workers: 线程数，≤ 1 时顺序执行

    Returns:
        结果列表
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"并发执行 {len(items)} 个任务, 线程数 {workers}")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
