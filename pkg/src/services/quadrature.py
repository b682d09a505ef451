# src/services/quadrature.py
"""分段 Gauss–Legendre 积分：按相位划分初始区间，逐段比较两个阶数的结果，
误差超标的区间二分细化。被积函数必须接受 numpy 数组。"""
import logging
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy.special import roots_legendre

from src.utils.errors import QuadratureError

logger = logging.getLogger(__name__)

LOW_ORDER = 16
HIGH_ORDER = 24
MAX_LEVELS = 30
MAX_PANELS = 2_000_000


@lru_cache(maxsize=8)
def _rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(order)
    return nodes, weights


def _apply_rule(func: Callable, left: np.ndarray, right: np.ndarray, order: int) -> np.ndarray:
    nodes, weights = _rule(order)
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    x = mid[:, None] + half[:, None] * nodes[None, :]
    values = np.asarray(func(x.ravel())).reshape(x.shape)
    return half * (values @ weights)


def phase_edges(a: float, b: float, rate: Callable[[float], float],
                max_phase: float = np.pi / 2, max_width: float = 0.5,
                extra_points=()) -> np.ndarray:
    """生成初始区间端点，使每段上的相位增量不超过 max_phase。

    rate(x) 为局部相位变化率 |dφ/dx|；extra_points 为需要强制加入的断点
    （例如极点实部附近的几何加密点）。
    """
    if b <= a:
        return np.array([a, b])
    edges = [a]
    x = a
    while x < b:
        local = max(float(rate(x)), 1e-12)
        step = min(max_width, max_phase / local)
        x = min(b, x + step)
        edges.append(x)
        if len(edges) > MAX_PANELS:
            raise QuadratureError(f"相位划分超过 {MAX_PANELS} 段")
    extra = [p for p in extra_points if a < p < b]
    return np.unique(np.concatenate([np.asarray(edges), np.asarray(extra, dtype=float)]))


def gauss_panels(func: Callable, edges: np.ndarray, rel_tol: float = 1e-12,
                 abs_tol: float = 0.0) -> Tuple[complex, float]:
    """在给定初始区间上做自适应分段积分，返回 (积分值, 误差估计)。

    每段同时用 16 点与 24 点规则计算，两者之差作为该段误差；误差超过
    按区间宽度分配的容差时二分。
    """
    edges = np.asarray(edges, dtype=float)
    left, right = edges[:-1], edges[1:]
    total_width = float(edges[-1] - edges[0])
    accepted = []
    accepted_error = 0.0
    scale = 0.0
    for level in range(MAX_LEVELS):
        if left.size == 0:
            break
        low = _apply_rule(func, left, right, LOW_ORDER)
        high = _apply_rule(func, left, right, HIGH_ORDER)
        err = np.abs(high - low)
        if level == 0:
            # 以初始各段绝对值之和为尺度，避免强抵消时容差趋零
            scale = float(np.sum(np.abs(high)))
        budget = max(rel_tol * scale, abs_tol) * (right - left) / max(total_width, 1e-300)
        good = err <= budget
        accepted.append(np.sum(high[good]))
        accepted_error += float(np.sum(err[good]))
        if np.all(good):
            left = right = np.array([])
            break
        bad_left, bad_right = left[~good], right[~good]
        middle = 0.5 * (bad_left + bad_right)
        left = np.concatenate([bad_left, middle])
        right = np.concatenate([middle, bad_right])
        if left.size > MAX_PANELS:
            break
    if left.size:
        remaining = _apply_rule(func, left, right, HIGH_ORDER)
        estimate = accepted_error + float(np.sum(np.abs(
            remaining - _apply_rule(func, left, right, LOW_ORDER))))
        raise QuadratureError(f"分段积分在 {MAX_LEVELS} 层细分后未收敛", estimate)
    value = complex(np.sum(accepted))
    logger.debug(f"分段积分完成：初始 {len(edges) - 1} 段，细分 {level} 层，误差估计 {accepted_error:.2e}")
    return value, accepted_error
