# src/services/poles.py
"""g(k,r) 的极点与留数。

分母 D(k) = h_α(k)·f(-k,0)。h_α 的零点分三组（下半平面、上半平面、实轴），
由格点种子出发牛顿精化；f(-k,0) 的零点（共振）用辐角原理在矩形网格上计数，
牛顿迭代逐个找到并核对个数。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.models.pole import Pole, PoleKind
from src.models.precision import DEFAULT_CONTEXT, ArithmeticContext
from src.models.state import InitialState
from src.services.jost import PotentialModel
from src.services.spectral import coefficient_C, coefficient_C_prime, coefficients_batch
from src.utils.errors import (CompletenessError, DegeneratePoleError, HypergeometricPoleError,
                              IntegrationError, ToleranceError)
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

SEED_MARGIN = 1.05
_NEWTON_STEPS = 60
# 网格偏移取无理比例，避免零点落在格线上
_X_OFFSET = 0.3183098861837907
_Y_TOP = 0.0172839
_MAX_SUBDIVISION = 5
_BATCH_CHUNK = 2048
# 批量牛顿迭代的相对步长判据
_BATCH_NEWTON_TOL = 1e-13


# ---------------------------------------------------------------- h_α

def _h_terms(k, alpha, mp):
    k2 = k * k
    return mp.exp(1j * alpha * k2), mp.exp(-1j * alpha * k2), mp.exp(-alpha * k2)


def h_alpha(k, alpha: float, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """h_α(k) = e^{iαk²} + e^{-iαk²} + e^{-αk²}"""
    if alpha <= 0:
        raise ValueError(f"alpha 必须为正，当前为 {alpha}")
    mp = ctx.mp
    alpha = mp.mpf(alpha)
    return sum(_h_terms(mp.mpc(k), alpha, mp))


def h_alpha_prime(k, alpha: float, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """h_α'(k) = 2k(iα e^{iαk²} - iα e^{-iαk²} - α e^{-αk²})"""
    mp = ctx.mp
    k = mp.mpc(k)
    alpha = mp.mpf(alpha)
    plus, minus, gauss = _h_terms(k, alpha, mp)
    return 2 * k * (1j * alpha * plus - 1j * alpha * minus - alpha * gauss)


def h_alpha_array(k: np.ndarray, alpha: float) -> np.ndarray:
    k2 = np.asarray(k, dtype=complex) ** 2
    return np.exp(1j * alpha * k2) + np.exp(-1j * alpha * k2) + np.exp(-alpha * k2)


def _h_array_terms(k: np.ndarray, alpha: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    k2 = k * k
    return np.exp(1j * alpha * k2), np.exp(-1j * alpha * k2), np.exp(-alpha * k2)


def h_relative_residual(k, alpha: float, ctx: ArithmeticContext = DEFAULT_CONTEXT) -> float:
    """|h_α(k)| 相对于三项模之和"""
    mp = ctx.mp
    terms = _h_terms(mp.mpc(k), mp.mpf(alpha), mp)
    scale = sum(abs(term) for term in terms)
    return float(abs(sum(terms)) / scale)


# ---------------------------------------------------------------- 辅助极点

def _lattice_radii(step: float, k_max: float) -> np.ndarray:
    # |k|² = step·(2n-1)
    n_max = int(math.floor(((SEED_MARGIN * k_max) ** 2 / step + 1) / 2))
    n = np.arange(1, n_max + 1)
    return np.sqrt(step * (2 * n - 1))


def orbit(pole: Pole) -> List[Pole]:
    """h_α 只依赖 k²，且 h_α(k̄) 是 h_α(k) 的共轭：由一个零点得到它的全部对称像。

    AUX1 的 k 给出 [k, k̄, -k̄, -k]，种类依次为 AUX1、AUX2、AUX1、AUX2；
    AUX3 的 k 给出 [k, -k]。
    """
    def image(value, kind: PoleKind, seed: complex) -> Pole:
        return Pole(value, kind, seed, refined=pole.refined, residual=pole.residual)

    k, seed = pole.k, complex(pole.seed)
    if pole.kind is PoleKind.AUX3:
        return [pole, image(-k, PoleKind.AUX3, -seed)]
    if pole.kind is not PoleKind.AUX1:
        raise ValueError(f"只能由 AUX1 或 AUX3 极点生成对称像，当前为 {pole.kind.value}")
    return [pole,
            image(k.conjugate(), PoleKind.AUX2, seed.conjugate()),
            image(-k.conjugate(), PoleKind.AUX1, -seed.conjugate()),
            image(-k, PoleKind.AUX2, -seed)]


def aux_base_seeds(alpha: float, k_max: float) -> List[Pole]:
    """每条对称轨道一个代表种子：e^{-3πi/8}√(π(2n-1)/(√2α)) 与 √(π(2n-1)/(2α))。"""
    if alpha <= 0 or k_max <= 0:
        raise ValueError(f"alpha 与 K_max 必须为正: alpha={alpha}, K_max={k_max}")
    diagonal = _lattice_radii(math.pi / (math.sqrt(2.0) * alpha), k_max)
    real_axis = _lattice_radii(math.pi / (2.0 * alpha), k_max)
    direction = complex(np.exp(-3j * math.pi / 8))
    seeds = [Pole(direction * float(radius), PoleKind.AUX1, direction * float(radius))
             for radius in diagonal]
    seeds.extend(Pole(complex(radius), PoleKind.AUX3, complex(radius)) for radius in real_axis)
    return seeds


def aux_pole_seeds(alpha: float, k_max: float) -> List[Pole]:
    """h_α 零点的三组格点种子（|seed| ≤ 1.05 K_max）。

    第一组 ±e^{∓3πi/8}√(π(2n-1)/(√2α)) 位于下半平面，第二组为其共轭，
    第三组 ±√(π(2n-1)/(2α)) 位于实轴。
    """
    return [image for seed in aux_base_seeds(alpha, k_max) for image in orbit(seed)]


def refine_aux(pole: Pole, alpha: float, ctx: ArithmeticContext = DEFAULT_CONTEXT) -> Pole:
    """以解析导数对 h_α 做牛顿精化，实轴组保持为实数。"""
    mp = ctx.mp
    k = mp.mpc(pole.seed)
    tol = mp.mpf(10) ** (-(ctx.dps - 1))
    converged = False
    for _ in range(_NEWTON_STEPS):
        step = h_alpha(k, alpha, ctx) / h_alpha_prime(k, alpha, ctx)
        k -= step
        if pole.kind is PoleKind.AUX3:
            k = mp.mpc(mp.re(k), 0)
        if abs(step) <= tol * abs(k):
            converged = True
            break
    residual = h_relative_residual(k, alpha, ctx)
    if not converged:
        logger.warning(f"辅助极点 {pole.seed} 的牛顿迭代未收敛，残差 {residual:.2e}")
    return Pole(k, pole.kind, pole.seed, refined=converged, residual=residual)


def refine_aux_batch(seeds: Sequence[Pole], alpha: float,
                     ctx: ArithmeticContext = DEFAULT_CONTEXT) -> List[Pole]:
    """双精度下对全部种子同时做牛顿迭代，未收敛的种子改用 refine_aux 逐个精化。"""
    if not seeds:
        return []
    k = np.array([p.seed for p in seeds], dtype=complex)
    real_axis = np.array([p.kind is PoleKind.AUX3 for p in seeds])
    converged = np.zeros(k.shape, dtype=bool)
    for _ in range(_NEWTON_STEPS):
        active = ~converged
        if not np.any(active):
            break
        current = k[active]
        plus, minus, gauss = _h_array_terms(current, alpha)
        step = (plus + minus + gauss) / (2j * alpha * current * (plus - minus + 1j * gauss))
        current = current - step
        current = np.where(real_axis[active], current.real + 0j, current)
        k[active] = current
        converged[active] = np.abs(step) <= _BATCH_NEWTON_TOL * np.abs(current)
    terms = np.array(_h_array_terms(k, alpha))
    residual = np.abs(terms.sum(axis=0)) / np.abs(terms).sum(axis=0)

    fallback = int(np.count_nonzero(~converged))
    if fallback:
        logger.debug(f"{fallback} 个辅助极点的批量牛顿迭代未收敛，改用逐个精化")
    mp = ctx.mp
    refined: List[Pole] = []
    for pole, value, done, res in zip(seeds, k, converged, residual):
        if done:
            refined.append(Pole(mp.mpc(complex(value)), pole.kind, pole.seed, refined=True,
                                residual=float(res)))
        else:
            refined.append(refine_aux(pole, alpha, ctx))
    return refined


def aux_poles(alpha: float, k_max: float, ctx: ArithmeticContext = DEFAULT_CONTEXT,
              workers: int = 1) -> List[Pole]:
    """精化每条对称轨道的代表种子，再按对称性展开，保留 |k| ≤ K_max 的零点。"""
    base = aux_base_seeds(alpha, k_max)
    if ctx.extended:
        refined = ordered_map(lambda p: refine_aux(p, alpha, ctx), base, workers, label="辅助极点")
    else:
        refined = refine_aux_batch(base, alpha, ctx)
    poles = [image for pole in refined for image in orbit(pole)]
    kept = [p for p in poles if p.modulus <= k_max]
    moved = [p for p in kept if abs(p.value - p.seed) > 0.1 * abs(p.seed)]
    if moved:
        logger.debug(f"{len(moved)} 个辅助极点离种子超过 10%")
    logger.info(f"α={alpha}: 辅助极点 {len(kept)} 个（精化代表种子 {len(base)} 个）")
    return kept


# ---------------------------------------------------------------- 共振

@dataclass
class CellAudit:
    """一个扫描矩形的辐角原理核对记录"""

    x0: float
    x1: float
    y0: float
    y1: float
    winding: int
    found: int
    depth: int = 0

    @property
    def defect(self) -> int:
        return self.winding - self.found

    def contains(self, k: complex, slack: float = 0.0) -> bool:
        return (self.x0 - slack <= k.real < self.x1 + slack
                and self.y0 - slack <= k.imag < self.y1 + slack)


def winding_number(func: Callable, x0: float, x1: float, y0: float, y1: float,
                   mp, spacing: float = 0.125, max_points: int = 200000,
                   cache: Optional[Dict[complex, object]] = None) -> int:
    """矩形边界上 func 的缠绕数。

    沿边逐段累加 arg(F_{j+1}/F_j)，任何一段的辐角增量超过 π/4 就二分，
    直到每段都足够细；总和除以 2π 后必须在 10⁻³ 内是整数。
    """
    cache = {} if cache is None else cache

    def value(point: complex):
        if point not in cache:
            cache[point] = func(point)
        return cache[point]

    corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
    total = 0.0
    evaluations = 0
    for start, end in zip(corners, corners[1:] + corners[:1]):
        segments = max(8, int(math.ceil(abs(end - start) / spacing)))
        stack = [start + (end - start) * j / segments for j in range(segments + 1)]
        stack.reverse()
        current = stack.pop()
        current_value = value(current)
        while stack:
            nxt = stack[-1]
            nxt_value = value(nxt)
            evaluations += 1
            if current_value == 0 or nxt_value == 0:
                raise ToleranceError(f"零点落在扫描矩形的边上 ({current} 或 {nxt})")
            delta = float(mp.arg(nxt_value / current_value))
            if abs(delta) > math.pi / 4 and abs(nxt - current) > 1e-9 * max(1.0, abs(current)):
                stack.append((current + nxt) / 2)
                continue
            if evaluations > max_points:
                raise ToleranceError(f"缠绕数计算超过 {max_points} 个采样点")
            total += delta
            current, current_value = stack.pop(), nxt_value
    winding = total / (2 * math.pi)
    rounded = int(round(winding))
    if abs(winding - rounded) > 1e-3:
        raise ToleranceError(f"缠绕数 {winding:.6f} 不是整数", abs(winding - rounded))
    return rounded


def _resonance_value_and_slope(model: PotentialModel, k, mp):
    # F(k) = f(-k,0)，靠近 ₂F₁ 极点时改用整函数形式并做中心差分
    try:
        return model.f0(-k), -model.dk_f0(-k)
    except (HypergeometricPoleError, IntegrationError):
        h = mp.mpf(10) ** (-(mp.dps // 2)) * max(1, abs(k))
        value = model.resonance_function(k)
        slope = (model.resonance_function(k + h) - model.resonance_function(k - h)) / (2 * h)
        return value, slope


def refine_resonance(model: PotentialModel, seed: complex, max_step: float = 1.0,
                     max_distance: float = math.inf) -> Optional[Pole]:
    """从种子出发对 f(-k,0) 做牛顿迭代，不收敛或跑出范围时返回 None。"""
    ctx = model.ctx
    mp = ctx.mp
    k = mp.mpc(seed)
    tol = max(10 * ctx.tol, mp.mpf(10) ** (-(ctx.dps - 1)))
    for _ in range(_NEWTON_STEPS):
        try:
            value, slope = _resonance_value_and_slope(model, k, mp)
        except (HypergeometricPoleError, IntegrationError):
            return None
        if slope == 0:
            return None
        step = value / slope
        if abs(step) > max_step:
            step = step * max_step / abs(step)
        k -= step
        if abs(complex(k) - seed) > max_distance:
            return None
        if abs(step) <= tol * max(1, abs(k)):
            return Pole(k, PoleKind.RESONANCE, complex(seed), refined=True,
                        residual=float(abs(step) / max(1, abs(k))))
    return None


class ResonanceScanner:
    """在 [x₀, K] × [-Y, y_top] 的矩形网格上搜索 f(-k,0) 的零点。"""

    def __init__(self, model: PotentialModel, k_max: float, depth: Optional[float] = None,
                 cell_size: float = 2.0, workers: int = 1):
        self.model = model
        self.k_max = float(k_max)
        self.depth = float(depth if depth is not None else model.scan_depth(k_max))
        self.cell_size = float(cell_size)
        self.workers = workers
        self._cache: Dict[complex, object] = {}
        self._seeds = [s for s in model.resonance_seeds(self.k_max) if s.imag < 0]

    def _func(self, k: complex):
        return self.model.resonance_function(self.model.ctx.mp.mpc(k))

    def cells(self) -> List[Tuple[float, float, float, float]]:
        size = self.cell_size
        x_start = -_X_OFFSET * size
        result = []
        y1 = _Y_TOP
        while y1 > -self.depth:
            y0 = y1 - size
            x0 = x_start
            while x0 < self.k_max:
                x1 = x0 + size
                nearest = math.hypot(max(x0, -x1, 0.0), max(y0, -y1, 0.0))
                if nearest <= self.k_max:
                    result.append((x0, x1, y0, y1))
                x0 = x1
            y1 = y0
        return result

    def _winding(self, x0, x1, y0, y1) -> int:
        return winding_number(self._func, x0, x1, y0, y1, self.model.ctx.mp, cache=self._cache)

    def _candidates(self, x0, x1, y0, y1) -> List[complex]:
        points = [s for s in self._seeds if x0 <= s.real < x1 and y0 <= s.imag < y1]
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        dx, dy = (x1 - x0) / 4, (y1 - y0) / 4
        points.append(complex(cx, cy))
        points.extend(complex(cx + sx * dx, cy + sy * dy) for sx in (-1, 1) for sy in (-1, 1))
        return points

    def _solve_cell(self, x0, x1, y0, y1, winding: int, depth: int) -> Tuple[List[Pole], List[CellAudit]]:
        audit = CellAudit(x0, x1, y0, y1, winding, 0, depth)
        if winding == 0:
            return [], [audit]
        size = max(x1 - x0, y1 - y0)
        roots: List[Pole] = []
        for seed in self._candidates(x0, x1, y0, y1):
            pole = refine_resonance(self.model, seed, max_step=size / 2, max_distance=2 * size)
            if pole is None or not audit.contains(pole.value):
                continue
            if all(abs(pole.value - other.value) > 1e-8 * max(1.0, pole.modulus) for other in roots):
                roots.append(pole)
        audit.found = len(roots)
        if audit.found == winding:
            return roots, [audit]
        if depth >= _MAX_SUBDIVISION or audit.found > winding:
            logger.error(f"矩形 [{x0:.3f},{x1:.3f}]×[{y0:.3f},{y1:.3f}] 零点数不符")
            raise CompletenessError("共振搜索不完整", winding, audit.found)
        # 细分后逐块核对
        xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
        roots, audits = [], []
        for sub in ((x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)):
            sub_roots, sub_audits = self._solve_cell(*sub, self._winding(*sub), depth + 1)
            roots.extend(sub_roots)
            audits.extend(sub_audits)
        return roots, audits

    def _scan_cell(self, cell) -> Tuple[List[Pole], List[CellAudit]]:
        return self._solve_cell(*cell, self._winding(*cell), 0)

    def scan(self) -> Tuple[List[Pole], List[CellAudit]]:
        cells = self.cells()
        logger.info(f"共振搜索：{len(cells)} 个矩形，K_max={self.k_max}，深度 {self.depth}")
        outcomes = ordered_map(self._scan_cell, cells, self.workers, label="扫描矩形")
        found: List[Pole] = []
        audits: List[CellAudit] = []
        for roots, cell_audits in outcomes:
            found.extend(roots)
            audits.extend(cell_audits)

        mp = self.model.ctx.mp
        poles: List[Pole] = []
        for pole in found:
            k = pole.value
            axis = abs(k.real) <= 1e-10 * max(1.0, abs(k))
            if k.real < 0 and not axis:
                continue
            poles.append(pole)
            if not axis:
                # 关于虚轴对称的另一支
                poles.append(Pole(-mp.conj(pole.k), PoleKind.RESONANCE, -pole.seed.conjugate(),
                                  refined=pole.refined, residual=pole.residual))
        poles = [p for p in poles if p.modulus <= self.k_max and p.value.imag < 0]
        poles.sort(key=Pole.sort_key)
        logger.info(f"共振极点 {len(poles)} 个（含对称支）")
        return poles, audits


def find_resonances(model: PotentialModel, k_max: float, cell_size: float = 2.0,
                    depth: Optional[float] = None, workers: int = 1) -> List[Pole]:
    """下半平面 |k| ≤ K_max 内 f(-k,0) 的全部零点，两支都包含。"""
    if not model.has_resonances:
        return []
    poles, _ = ResonanceScanner(model, k_max, depth, cell_size, workers).scan()
    return poles


def mirror_poles(resonances: Sequence[Pole]) -> List[Pole]:
    """f(k,0) 的零点 q = -k_n，出现在生存振幅的分母中。"""
    return [Pole(-p.k, PoleKind.MIRROR, -p.seed, refined=p.refined, residual=p.residual)
            for p in resonances]


def check_separation(poles: Sequence[Pole], tol: float) -> None:
    """任意两个极点的距离必须大于 tol，否则抛出 DegeneratePoleError。"""
    ordered = sorted(poles, key=lambda p: p.value.real)
    for i, pole in enumerate(ordered):
        for other in ordered[i + 1:]:
            if other.value.real - pole.value.real > tol:
                break
            if abs(other.value - pole.value) <= tol:
                raise DegeneratePoleError(
                    f"极点 {pole.value}（{pole.kind.value}）与 {other.value}（{other.kind.value}）"
                    f"距离小于 {tol}")


# ---------------------------------------------------------------- 留数

def attach_coefficients(poles: Sequence[Pole], model: PotentialModel, state: InitialState,
                        method: str = "ode", workers: int = 1) -> None:
    """把 C(k_n) 缓存在 pole.extras['C']。"""
    ctx = model.ctx
    mp = ctx.mp
    if method == "quad" or ctx.extended:
        values = ordered_map(lambda p: coefficient_C(model, state, p.k, ctx).C, poles, workers,
                             label="C(k) 积分")
        for pole, value in zip(poles, values):
            pole.extras['C'] = value
        return
    for start in range(0, len(poles), _BATCH_CHUNK):
        chunk = poles[start:start + _BATCH_CHUNK]
        batch = coefficients_batch(model, state, [p.value for p in chunk])
        for pole, value in zip(chunk, batch.C):
            pole.extras['C'] = mp.mpc(complex(value))


def _coefficient(pole: Pole, model: PotentialModel, state: InitialState):
    if 'C' not in pole.extras:
        pole.extras['C'] = coefficient_C(model, state, pole.k).C
    return pole.extras['C']


def denominator_derivative(pole: Pole, model: PotentialModel, alpha: float):
    """D'(k_n)，D = h_α(k)·f(-k,0)。只有一个因子在 k_n 处为零。"""
    ctx = model.ctx
    k = ctx.mp.mpc(pole.k)
    if pole.kind.is_aux:
        return h_alpha_prime(k, alpha, ctx) * model.f0(-k)
    return h_alpha(k, alpha, ctx) * (-model.dk_f0(-k))


def residue_weight(pole: Pole, model: PotentialModel, state: InitialState, alpha: float):
    """留数中与 r 无关的部分：辅助极点为 kC/h_α'，共振为 kC/D'。"""
    ctx = model.ctx
    k = ctx.mp.mpc(pole.k)
    kc = k * _coefficient(pole, model, state)
    if pole.kind.is_aux:
        return kc / h_alpha_prime(k, alpha, ctx)
    pole.denom_deriv = denominator_derivative(pole, model, alpha)
    return kc / pole.denom_deriv


def residue_factor(pole: Pole, model: PotentialModel, r: float):
    """留数中与 r 有关的部分：辅助极点为 E(-k,r)/E(-k,0)，共振为 E(-k,r)。"""
    k = model.ctx.mp.mpc(pole.k)
    if pole.kind.is_aux:
        numerator, denominator = model.ratio_parts(k, r)
        return numerator / denominator
    return model.reduced_outgoing(k, r)


def residue_a(pole: Pole, model: PotentialModel, state: InitialState, r: float, alpha: float):
    """a_n(r) = k C(k) e^{-ikr} f(-k,r) / D'(k)，在 k_n 处取值。"""
    if r < 0:
        raise ValueError(f"r 必须非负，当前为 {r}")
    return residue_weight(pole, model, state, alpha) * residue_factor(pole, model, r)


def residue_b(pole: Pole, model: PotentialModel, state: InitialState, alpha: float):
    """b_n = i·Res[k² C'(k) C(k) / (f(k,0) f(-k,0) h_α(k))]。"""
    ctx = model.ctx
    mp = ctx.mp
    k = mp.mpc(pole.k)
    c = _coefficient(pole, model, state)
    c_prime = c if state.is_real else coefficient_C_prime(model, state, k, ctx).C
    numerator = 1j * k * k * c_prime * c
    try:
        if pole.kind.is_aux:
            denominator = h_alpha_prime(k, alpha, ctx) * model.f0(k) * model.f0(-k)
        elif pole.kind is PoleKind.RESONANCE:
            denominator = model.f0(k) * h_alpha(k, alpha, ctx) * (-model.dk_f0(-k))
        else:
            denominator = model.dk_f0(k) * model.f0(-k) * h_alpha(k, alpha, ctx)
    except HypergeometricPoleError:
        # f(±k,0) 在此处为无穷大，该项的极限为零
        logger.debug(f"极点 {pole.value} 位于 f 的极点上，b_n 取 0")
        return mp.mpc(0)
    return numerator / denominator


def _safe_log(value, mp) -> complex:
    if value == 0:
        return complex(-math.inf, 0.0)
    return complex(mp.log(value))


@dataclass
class ResidueTable:
    """一组极点的留数，按 r 缓存对数形式 log a_n(r)。"""

    poles: List[Pole]
    model: PotentialModel
    state: InitialState
    alpha: float
    survival: bool = False
    weights: List[object] = field(default_factory=list)
    _log_cache: Dict[float, np.ndarray] = field(default_factory=dict, repr=False)
    _value_cache: Dict[float, List[object]] = field(default_factory=dict, repr=False)
    _moment_cache: Dict[Tuple[float, int], object] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.k = np.array([p.value for p in self.poles], dtype=complex)
        self.aux = np.array([p.kind.is_aux for p in self.poles], dtype=bool)
        self.modulus = np.abs(self.k)
        if not self.weights:
            if self.survival:
                self.weights = [residue_b(p, self.model, self.state, self.alpha) for p in self.poles]
            else:
                self.weights = [residue_weight(p, self.model, self.state, self.alpha)
                                for p in self.poles]
        mp = self.model.ctx.mp
        for pole, weight in zip(self.poles, self.weights):
            pole.log_weight = _safe_log(weight, mp)

    def values(self, r: float = 0.0) -> List[object]:
        """工作精度下的 a_n(r)（生存振幅时为 b_n，与 r 无关）"""
        if self.survival:
            return self.weights
        if r not in self._value_cache:
            self._value_cache[r] = [w * residue_factor(p, self.model, r)
                                    for p, w in zip(self.poles, self.weights)]
        return self._value_cache[r]

    def log_values(self, r: float = 0.0) -> np.ndarray:
        if r not in self._log_cache:
            mp = self.model.ctx.mp
            self._log_cache[r] = np.array([_safe_log(v, mp) for v in self.values(r)], dtype=complex)
        return self._log_cache[r]

    def moment(self, r: float = 0.0, power: int = 1):
        """工作精度下的 Σ a_n/k_n^power"""
        key = (r, power)
        if key not in self._moment_cache:
            mp = self.model.ctx.mp
            self._moment_cache[key] = mp.fsum(a / mp.mpc(p.k) ** power
                                              for a, p in zip(self.values(r), self.poles))
        return self._moment_cache[key]


def denominator_value(pole: Pole, model: PotentialModel, alpha: float) -> float:
    """|h_α(k)·f(-k,0)|，f 在此处有极点时返回 nan"""
    ctx = model.ctx
    k = ctx.mp.mpc(pole.k)
    try:
        return float(abs(h_alpha(k, alpha, ctx) * model.f0(-k)))
    except (HypergeometricPoleError, IntegrationError):
        return math.nan


def pole_table(poles: Sequence[Pole], table: Optional[ResidueTable] = None,
               r_ref: float = 0.5) -> pd.DataFrame:
    """极点表：kind, re_k, im_k, abs_denominator, re_a, im_a, residual。"""
    rows = []
    values = table.values(r_ref) if table is not None else [None] * len(poles)
    for pole, value in zip(poles, values):
        row = pole.to_dict()
        row['abs_denominator'] = (denominator_value(pole, table.model, table.alpha)
                                  if table is not None else math.nan)
        a = complex(value) if value is not None else complex('nan')
        row['re_a'] = a.real
        row['im_a'] = a.imag
        rows.append(row)
    columns = ['kind', 're_k', 'im_k', 'abs_denominator', 're_a', 'im_a', 'residual',
               'seed_re', 'seed_im', 'refined']
    return pd.DataFrame(rows, columns=columns)


def audit_table(audits: Sequence[CellAudit]) -> pd.DataFrame:
    """辐角原理核对表，defect 列应全为 0。"""
    return pd.DataFrame([{
        'x0': a.x0, 'x1': a.x1, 'y0': a.y0, 'y1': a.y1,
        'depth': a.depth, 'winding': a.winding, 'found': a.found, 'defect': a.defect,
    } for a in audits])
