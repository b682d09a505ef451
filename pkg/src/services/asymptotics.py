# src/services/asymptotics.py
"""晚期渐近量。

ψ(r,t) → ψ∞(r)/t^{3/2}，ψ∞(r) = -C(0)/(2√(iπ)) ∂ₖ[f(-k,r)/f(-k,0)]|_{k=0}；
S(t) → |C(0)|⁴/(4π f(0,0)⁴)/t³；指数项与代数项相等的时刻 t_alg 由 W₋₁ 给出。
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from src.models.pole import Pole, PoleKind
from src.models.precision import ArithmeticContext
from src.models.result import AsymptoticsReport
from src.models.state import InitialState
from src.services.jost import PotentialModel
from src.services.specfun import lambert_w_m1
from src.services.spectral import coefficient_C
from src.utils.errors import DomainError, NoCrossoverError, ZeroEnergyResonanceError

logger = logging.getLogger(__name__)

# C(0) 低于该值视为零，ψ∞ 按更快衰减的情形处理
C0_ZERO_TOL = 1e-12
# 有限差分步长取 10^{-dps/3}
_FD_EXPONENT = 1.0 / 3.0


def _f00(model: PotentialModel):
    f00 = model.f0(model.ctx.mp.mpc(0))
    if abs(f00) <= model.ctx.tol:
        raise ZeroEnergyResonanceError("f(0,0)=0，存在零能共振，渐近公式不适用")
    return f00


def coefficient_at_zero(model: PotentialModel, state: InitialState,
                        ctx: Optional[ArithmeticContext] = None):
    return coefficient_C(model, state, 0, ctx or model.ctx).C


def ratio_slope(model: PotentialModel, r: float, derivative: str = "analytic"):
    """∂ₖ [f(-k,r)/f(-k,0)] 在 k=0 处的值。

    derivative='analytic' 用 Jost 包络的 k 导数，'fd' 用中心差分。
    """
    mp = model.ctx.mp
    _f00(model)
    if derivative == "analytic":
        return model.dk_ratio(mp.mpc(0), r)
    if derivative != "fd":
        raise ValueError(f"未知的求导方式: {derivative}")
    h = mp.mpf(10) ** (-model.ctx.dps * _FD_EXPONENT)
    return (model.ratio(h, r) - model.ratio(-h, r)) / (2 * h)


def psi_inf(model: PotentialModel, state: InitialState, r: float,
            derivative: str = "analytic", c0=None):
    """ψ∞(r) = -C(0)/(2√(iπ)) ∂ₖ[f(-k,r)/f(-k,0)]|₀；C(0)=0 时返回 0。"""
    if r < 0:
        raise DomainError(f"r 必须非负，当前为 {r}")
    mp = model.ctx.mp
    c0 = coefficient_at_zero(model, state) if c0 is None else c0
    slope = ratio_slope(model, r, derivative)
    if abs(c0) <= C0_ZERO_TOL:
        logger.info("C(0)=0：ψ 比 t^{-3/2} 衰减得更快，ψ∞ 取 0")
        return mp.mpc(0)
    return -c0 / (2 * mp.sqrt(1j * mp.pi)) * slope


def survival_coefficient(model: PotentialModel, state: InitialState, c0=None) -> float:
    """S(t)·t³ 的极限 |C(0)|⁴/(4π f(0,0)⁴)"""
    mp = model.ctx.mp
    f00 = _f00(model)
    c0 = coefficient_at_zero(model, state) if c0 is None else c0
    return float(abs(c0) ** 4 / (4 * mp.pi * abs(f00) ** 4))


def non_escape_coefficient(model: PotentialModel, state: InitialState, rho: float,
                           points: int = 257, c0=None) -> float:
    """P(t)·t³ 的极限 ∫₀^ρ |ψ∞(r)|² dr"""
    if rho <= 0:
        raise DomainError(f"ρ 必须为正，当前为 {rho}")
    c0 = coefficient_at_zero(model, state) if c0 is None else c0
    grid = np.linspace(0.0, rho, points)
    density = np.array([abs(complex(psi_inf(model, state, float(r), c0=c0))) ** 2 for r in grid])
    return float(simpson(density, x=grid))


def slowest_resonance(resonances: Sequence[Pole]) -> Optional[Pole]:
    """第四象限中离原点最近的共振 k₀"""
    fourth = [p for p in resonances
              if p.kind is PoleKind.RESONANCE and p.value.real > 0 and p.value.imag < 0]
    return min(fourth, key=lambda p: p.modulus) if fourth else None


def decay_rate(k0) -> float:
    """λ = |Im k₀²|"""
    k0 = complex(k0)
    return abs((k0 * k0).imag)


def exponential_amplitude(model: PotentialModel, state: InitialState, r: float, k0) -> float:
    """A_exp = 2|k₀ C(k₀) f(-k₀,r) / ∂ₖf(-k,0)|_{k₀}|，因子 2 来自 |sgn Im k₀ + ν|。"""
    mp = model.ctx.mp
    k0 = mp.mpc(k0)
    c = coefficient_C(model, state, k0).C
    slope = -model.dk_f0(-k0)
    return float(2 * abs(k0 * c * model.f(-k0, r) / slope))


def t_alg(model: PotentialModel, state: InitialState, r: float, k0,
          psi_inf_value=None, amplitude: Optional[float] = None) -> float:
    """A_exp e^{-λt} = |ψ∞(r)| t^{-3/2} 的较晚解。

    t_alg = -(3/(2λ)) W₋₁(-(2λ/3)(|ψ∞|/A_exp)^{2/3})；W₋₁ 的自变量低于 -1/e 时
    两条曲线不相交，抛出 NoCrossoverError。
    """
    ctx = model.ctx
    lam = decay_rate(k0)
    if lam <= 0:
        raise DomainError(f"k₀={complex(k0)} 没有衰减，无法定义 t_alg")
    if psi_inf_value is None:
        psi_inf_value = psi_inf(model, state, r)
    if amplitude is None:
        amplitude = exponential_amplitude(model, state, r, k0)
    algebraic = abs(complex(psi_inf_value))
    if algebraic == 0 or amplitude == 0:
        raise NoCrossoverError("ψ∞ 或指数项振幅为零，两条曲线没有交点")
    argument = -(2.0 * lam / 3.0) * (algebraic / amplitude) ** (2.0 / 3.0)
    if argument < -math.exp(-1.0):
        raise NoCrossoverError(f"W₋₁ 的自变量 {argument:.6f} < -1/e，指数项始终低于代数项")
    w = float(lambert_w_m1(argument, ctx))
    value = -1.5 / lam * w
    logger.debug(f"t_alg：λ={lam:.6f}，A_exp={amplitude:.6e}，|ψ∞|={algebraic:.6e}，W₋₁={w:.6f}")
    return value


def reference_curves(t: Sequence[float], amplitude: float, rate: float, psi_inf_abs: float):
    """指数参考曲线 A_exp e^{-λt} 与代数参考曲线 |ψ∞| t^{-3/2}"""
    t = np.asarray(t, dtype=float)
    return amplitude * np.exp(-rate * t), psi_inf_abs * t ** -1.5


def empirical_crossover(t: Sequence[float], exponential: Sequence[float],
                        algebraic: Sequence[float]) -> Optional[float]:
    """指数曲线首次落到代数曲线之下的时刻（对数线性插值），不相交时为 None"""
    t = np.asarray(t, dtype=float)
    gap = np.log(np.asarray(exponential, dtype=float)) - np.log(np.asarray(algebraic, dtype=float))
    below = np.nonzero(gap < 0)[0]
    if below.size == 0 or below[0] == 0:
        return None
    i = below[0]
    fraction = gap[i - 1] / (gap[i - 1] - gap[i])
    return float(math.exp(math.log(t[i - 1]) + fraction * (math.log(t[i]) - math.log(t[i - 1]))))


def sampled_crossover(t: Sequence[float], magnitudes: Sequence[float], psi_inf_abs: float,
                      window: Tuple[float, float]) -> Optional[float]:
    """由采样的 |ψ| 求经验交点。

    在 window 内拟合 log|ψ| = log A + s·t，再求拟合的指数曲线与 |ψ∞|·t^{-3/2} 的交点。
    """
    t = np.asarray(t, dtype=float)
    magnitudes = np.abs(np.asarray(magnitudes, dtype=float))
    positive = t > 0
    t, magnitudes = t[positive], magnitudes[positive]
    inside = (t >= window[0]) & (t <= window[1]) & (magnitudes > 0)
    if np.count_nonzero(inside) < 2:
        raise DomainError(f"拟合窗口 {window} 内的采样不足 2 个")
    slope, intercept = np.polyfit(t[inside], np.log(magnitudes[inside]), 1)
    exponential = np.exp(intercept + slope * t)
    return empirical_crossover(t, exponential, psi_inf_abs * t ** -1.5)


def fit_power_law(t: Sequence[float], values: Sequence[float]) -> float:
    """log|values| 对 log t 的最小二乘斜率"""
    t = np.asarray(t, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if t.size < 2 or np.any(t <= 0) or np.any(values <= 0):
        raise DomainError("幂律拟合需要至少两个正的采样点")
    slope, _ = np.polyfit(np.log(t), np.log(values), 1)
    return float(slope)


def fit_log_slope(t: Sequence[float], values: Sequence[float]) -> float:
    """log|values| 对 t 的最小二乘斜率"""
    t = np.asarray(t, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if t.size < 2 or np.any(values <= 0):
        raise DomainError("指数拟合需要至少两个正的采样点")
    slope, _ = np.polyfit(t, np.log(values), 1)
    return float(slope)


def report(model: PotentialModel, state: InitialState, r: float,
           resonances: Sequence[Pole] = (), rho: Optional[float] = None) -> AsymptoticsReport:
    """汇总 ψ∞(r)、k₀、t_alg 与 S、P 的幂律系数。"""
    notes: List[str] = []
    c0 = coefficient_at_zero(model, state)
    psi_value = complex(psi_inf(model, state, r, c0=c0))
    if abs(c0) <= C0_ZERO_TOL:
        notes.append("C(0)=0，ψ 与 S 比 t^{-3/2}、t^{-3} 衰减得更快")
    s_coefficient = survival_coefficient(model, state, c0=c0)
    p_coefficient = non_escape_coefficient(model, state, rho, c0=c0) if rho else None

    pole = slowest_resonance(resonances)
    k0 = pole.value if pole is not None else None
    t_value, amplitude, rate = None, None, None
    if pole is None:
        notes.append("没有第四象限的共振，t_alg 无定义")
    else:
        rate = decay_rate(pole.k)
        amplitude = exponential_amplitude(model, state, r, pole.k)
        try:
            t_value = t_alg(model, state, r, pole.k, psi_value, amplitude)
        except NoCrossoverError as e:
            logger.warning(f"t_alg 不存在: {str(e)}")
            notes.append(str(e))
    logger.info(f"渐近量：r={r}，|ψ∞|={abs(psi_value):.6e}，k₀={k0}，t_alg={t_value}")
    return AsymptoticsReport(r, psi_value, t_value, k0, s_coefficient, p_coefficient,
                             amplitude, rate, notes)
