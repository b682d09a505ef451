# src/services/jost.py
"""Jost 解框架。

约定：f(k,r) 满足 -f'' + V f = k² f，且 lim_{r→∞} e^{ikr} f(k,r) = 1，
即 f(k,r) ~ e^{-ikr}；f(-k,r) 是出射解 ~ e^{ikr}。在此约定下
u(k,r) = (f(k,0)f(-k,r) - f(-k,0)f(k,r)) / (2ik) 满足 u(k,0)=0、u'(k,0)=1，
f(-k,0) 的零点（共振）位于下半平面。

每个模型只需给出包络 E(k,r) = e^{ikr} f(k,r)（r→∞ 时趋于 1）及其 k 导数。
"""
import logging
import math
from abc import ABC, abstractmethod
from functools import lru_cache
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline

from src.models.precision import DEFAULT_CONTEXT, ArithmeticContext
from src.services.specfun import hyp2f1, hyp2f1_dc, hyp2f1_regularized
from src.utils.errors import (ConfigError, HypergeometricPoleError, IntegrationError,
                              ResonanceProximityError)

logger = logging.getLogger(__name__)

# u 可去奇点的切换阈值
KAPPA0 = 1e-4
# 数值 Jost 解的尾部判据与 R∞ 上限
TAIL_TOLERANCE = 1e-14
MAX_TAIL_RADIUS = 200.0
# 向后积分时寄生解放大的上限 e^{2|Im k| R∞}
_MAX_PARASITIC_EXPONENT = 30.0


class PotentialModel(ABC):
    """势模型接口：V(r)、f(k,r)、f(k,0)、∂ₖf 以及共振搜索所需的整函数。"""

    name = "potential"
    has_resonances = True

    def __init__(self, ctx: ArithmeticContext = DEFAULT_CONTEXT):
        self.ctx = ctx

    @abstractmethod
    def V(self, r: float) -> float:
        """势能 V(r)"""

    def V_array(self, r: np.ndarray) -> np.ndarray:
        return np.array([self.V(float(x)) for x in np.atleast_1d(r)])

    @abstractmethod
    def jost_envelope(self, k, r: float):
        """E(k,r) = e^{ikr} f(k,r)"""

    @abstractmethod
    def dk_jost_envelope(self, k, r: float):
        """∂ₖ E(k,r)"""

    @property
    @abstractmethod
    def first_moment(self) -> float:
        """∫₀^∞ r|V(r)| dr，必须有限"""

    def f(self, k, r: float):
        mp = self.ctx.mp
        k = mp.mpc(k)
        return mp.exp(-1j * k * r) * self.jost_envelope(k, r)

    def dk_f(self, k, r: float):
        mp = self.ctx.mp
        k = mp.mpc(k)
        phase = mp.exp(-1j * k * r)
        return phase * (self.dk_jost_envelope(k, r) - 1j * r * self.jost_envelope(k, r))

    def f0(self, k):
        return self.jost_envelope(k, 0.0)

    def dk_f0(self, k):
        return self.dk_jost_envelope(k, 0.0)

    def f0_array(self, ks: np.ndarray) -> np.ndarray:
        return np.array([complex(self.f0(k)) for k in np.atleast_1d(ks)])

    def reduced_outgoing(self, k, r: float):
        """e^{-ikr} f(-k,r)，即 E(-k,r)；留数 a_n(r) 中与 r 有关的因子。"""
        return self.jost_envelope(-self.ctx.mp.mpc(k), r)

    def ratio_parts(self, k, r: float):
        """f(-k,r)/f(-k,0) 去掉 e^{ikr} 后的分子与分母"""
        k = self.ctx.mp.mpc(k)
        return self.jost_envelope(-k, r), self.jost_envelope(-k, 0.0)

    def ratio(self, k, r: float):
        """f(-k,r)/f(-k,0)"""
        mp = self.ctx.mp
        k = mp.mpc(k)
        numerator, denominator = self.ratio_parts(k, r)
        return mp.exp(1j * k * r) * numerator / denominator

    def dk_ratio(self, k, r: float):
        """∂ₖ [f(-k,r)/f(-k,0)]"""
        mp = self.ctx.mp
        k = mp.mpc(k)
        e_r = self.jost_envelope(-k, r)
        e_0 = self.jost_envelope(-k, 0.0)
        de_r = -self.dk_jost_envelope(-k, r)
        de_0 = -self.dk_jost_envelope(-k, 0.0)
        phase = mp.exp(1j * k * r)
        return phase * (1j * r * e_r / e_0 + (de_r * e_0 - e_r * de_0) / (e_0 * e_0))

    def resonance_function(self, k):
        """零点与 f(-k,0) 零点相同的整函数，默认即 f(-k,0)。"""
        return self.f0(-self.ctx.mp.mpc(k))

    def resonance_seeds(self, k_max: float) -> List[complex]:
        return []

    def scan_depth(self, k_max: float) -> float:
        """共振搜索在下半平面的深度"""
        return k_max

    def tail_radius(self, tol: float = TAIL_TOLERANCE) -> float:
        """满足 |V(R)|·R < tol 的最小 R（以 0.5 为步长搜索，上限 200）。"""
        r = 1.0
        while r <= MAX_TAIL_RADIUS:
            if abs(self.V(r)) * r < tol:
                return r
            r += 0.5
        raise IntegrationError(f"势在 R∞={MAX_TAIL_RADIUS} 内未衰减到 {tol:.1e}")


class FreeModel(PotentialModel):
    """V ≡ 0：f(k,r) = e^{-ikr}，u(k,r) = sin(kr)/k。"""

    name = "free"
    has_resonances = False

    def V(self, r: float) -> float:
        return 0.0

    def V_array(self, r: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(r, dtype=float))

    def jost_envelope(self, k, r: float):
        return self.ctx.mp.mpc(1)

    def dk_jost_envelope(self, k, r: float):
        return self.ctx.mp.mpc(0)

    @property
    def first_moment(self) -> float:
        return 0.0

    def tail_radius(self, tol: float = TAIL_TOLERANCE) -> float:
        return 1.0


class EckartModel(PotentialModel):
    """Eckart 势 V(r) = A e^{r-ρ}/(1+e^{r-ρ})²。

    f(k,r) = e^{-ikr} ₂F₁(1/2-iδ, 1/2+iδ; 1+2ik; 1/(1+e^{r-ρ}))，δ = √(A-1/4)。
    f(k,r) 在 k = i n/2 处有极点，比值 f(-k,r)/f(-k,0) 中极点相消。
    """

    name = "eckart"

    def __init__(self, A: float, rho: float, ctx: ArithmeticContext = DEFAULT_CONTEXT):
        super().__init__(ctx)
        if not (math.isfinite(A) and math.isfinite(rho)):
            raise ConfigError(f"Eckart 参数必须有限: A={A}, rho={rho}")
        self.A = float(A)
        self.rho = float(rho)
        mp = ctx.mp
        self.delta = mp.sqrt(mp.mpc(self.A) - mp.mpf(0.25))
        self.a = mp.mpf(0.5) - 1j * self.delta
        self.b = mp.mpf(0.5) + 1j * self.delta

    def __repr__(self) -> str:
        return f"EckartModel(A={self.A}, rho={self.rho})"

    def V(self, r: float) -> float:
        x = -abs(r - self.rho)
        ex = math.exp(x)
        return self.A * ex / (1.0 + ex) ** 2

    def V_array(self, r: np.ndarray) -> np.ndarray:
        ex = np.exp(-np.abs(np.asarray(r, dtype=float) - self.rho))
        return self.A * ex / (1.0 + ex) ** 2

    def z(self, r: float):
        mp = self.ctx.mp
        return 1 / (1 + mp.exp(mp.mpf(r) - self.rho))

    def _c(self, k):
        return 1 + 2j * self.ctx.mp.mpc(k)

    def jost_envelope(self, k, r: float):
        return hyp2f1(self.a, self.b, self._c(k), self.z(r), self.ctx)

    def dk_jost_envelope(self, k, r: float):
        return 2j * hyp2f1_dc(self.a, self.b, self._c(k), self.z(r), self.ctx)

    def regularized_envelope(self, k, r: float):
        """E(k,r)/Γ(1+2ik)，对 k 是整函数"""
        return hyp2f1_regularized(self.a, self.b, self._c(k), self.z(r), self.ctx)

    def _near_c_pole(self, k) -> bool:
        c = self._c(k)
        n = int(self.ctx.mp.nint(-self.ctx.mp.re(c)))
        return n >= 0 and abs(c + n) < 0.25

    def ratio_parts(self, k, r: float):
        k = self.ctx.mp.mpc(k)
        if not self._near_c_pole(-k):
            return super().ratio_parts(k, r)
        # Γ(1-2ik) 在分子分母中相消
        return self.regularized_envelope(-k, r), self.regularized_envelope(-k, 0.0)

    def resonance_function(self, k):
        return self.regularized_envelope(-self.ctx.mp.mpc(k), 0.0)

    def resonance_seeds(self, k_max: float) -> List[complex]:
        """共振右臂的渐近种子 k_n = (n - 1/4 + (i/2π) ln(e^{πδ}+e^{-πδ})) / (i + ρ/π)。"""
        delta = complex(self.delta)
        log_term = np.log(np.exp(np.pi * delta) + np.exp(-np.pi * delta))
        seeds = []
        n = 1
        while True:
            k_n = (n - 0.25 + 1j / (2 * np.pi) * log_term) / (1j + self.rho / np.pi)
            if abs(k_n) > 1.05 * k_max:
                break
            seeds.append(complex(k_n))
            n += 1
        return seeds

    @property
    def first_moment(self) -> float:
        # ∫ r V dr = A ln(1 + e^ρ)
        return self.A * math.log1p(math.exp(self.rho))


class NumericalModel(PotentialModel):
    """表格给出的势，三次样条插值，表格末端之后取 0；Jost 解由数值积分得到。"""

    name = "tabulated"

    def __init__(self, r: Sequence[float], values: Sequence[float],
                 ctx: ArithmeticContext = DEFAULT_CONTEXT):
        super().__init__(ctx)
        r = np.asarray(r, dtype=float)
        values = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != values.shape or len(r) < 4:
            raise ConfigError("势表格需要至少 4 个点，且 r 与 V 长度一致")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ConfigError("势表格的 r 必须非负且严格递增")
        self._r_max = float(r[-1])
        self._spline = CubicSpline(r, values)
        self._r_min = float(r[0])

    @classmethod
    def from_table(cls, path: str, ctx: ArithmeticContext = DEFAULT_CONTEXT) -> "NumericalModel":
        """从两列 CSV（r, V）读取势表格"""
        table_path = Path(path)
        if not table_path.exists():
            raise ConfigError(f"势表格文件不存在: {path}")
        frame = pd.read_csv(table_path)
        if frame.shape[1] < 2:
            raise ConfigError(f"势表格至少需要两列: {path}")
        logger.info(f"已读取势表格 {path}，共 {len(frame)} 行")
        return cls(frame.iloc[:, 0].to_numpy(), frame.iloc[:, 1].to_numpy(), ctx)

    def V(self, r: float) -> float:
        if r > self._r_max:
            return 0.0
        return float(self._spline(max(r, self._r_min)))

    def V_array(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        values = self._spline(np.clip(r, self._r_min, self._r_max))
        return np.where(r > self._r_max, 0.0, values)

    @property
    def first_moment(self) -> float:
        value, _ = quad(lambda r: r * abs(self.V(r)), 0.0, self._r_max, limit=200)
        return value

    def tail_radius(self, tol: float = TAIL_TOLERANCE) -> float:
        return self._r_max

    def scan_depth(self, k_max: float) -> float:
        # 向后积分的寄生放大限制了可达的 |Im k|
        return min(k_max, 0.9 * _MAX_PARASITIC_EXPONENT / (2.0 * self._r_max))

    @lru_cache(maxsize=4096)
    def _outgoing(self, k: complex) -> Callable:
        # f(k,·) 即 k' = -k 的出射解
        return _envelope_solution(self.V, -k, self._r_max)

    def jost_envelope(self, k, r: float):
        sol = self._outgoing(complex(k))
        return self.ctx.mp.mpc(complex(sol(min(r, self._r_max))[0]))

    def dk_jost_envelope(self, k, r: float):
        h = 1e-6 * max(1.0, abs(complex(k)))
        k = complex(k)
        forward = complex(self.jost_envelope(k + h, r))
        backward = complex(self.jost_envelope(k - h, r))
        return self.ctx.mp.mpc((forward - backward) / (2 * h))


def _envelope_solution(V: Callable[[float], float], k: complex, tail_radius: float,
                       r_min: float = 0.0, rtol: float = 1e-12):
    """积分出射包络 φ = e^{-ikr} f_out：φ'' + 2ik φ' = V φ，φ(R∞)=1，φ'(R∞)=0。

    返回 dense_output 插值，给出 (φ, φ')。
    """
    if 2.0 * max(-k.imag, 0.0) * tail_radius > _MAX_PARASITIC_EXPONENT:
        raise IntegrationError(
            f"Im k={k.imag:.3g} 时向后积分的寄生解放大 e^{2 * abs(k.imag) * tail_radius:.0f}，无法表示")

    def rhs(r, y):
        return [y[1], V(r) * y[0] - 2j * k * y[1]]

    sol = solve_ivp(rhs, (tail_radius, r_min), [1.0 + 0j, 0j], method="DOP853",
                    rtol=rtol, atol=1e-14, dense_output=True)
    if not sol.success:
        raise IntegrationError(f"数值 Jost 解积分失败 (k={k}): {sol.message}")
    return sol.sol


def numerical_jost(V: Callable[[float], float], k: complex, r_grid: Sequence[float],
                   tail_radius: Optional[float] = None, with_derivative: bool = False):
    """从 R∞ 向后积分 -f'' + V f = k² f，f(R∞)=e^{ikR∞}，f'(R∞)=ik e^{ikR∞}。

    返回网格上的出射解（本约定下即 f(-k,r)）；with_derivative=True 时同时返回 f'。
    以包络形式积分，e^{ikr} 因子解析乘回。
    """
    k = complex(k)
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size == 0:
        return (np.array([], dtype=complex),) * (2 if with_derivative else 1)
    r_top = float(np.max(r_grid))
    if tail_radius is None:
        tail_radius = max(r_top, 1.0)
        while abs(V(tail_radius)) * tail_radius >= TAIL_TOLERANCE:
            tail_radius += 0.5
            if tail_radius > MAX_TAIL_RADIUS:
                raise IntegrationError(
                    f"R∞ 不足：|V(R)|·R 在 R={MAX_TAIL_RADIUS} 处仍不小于 {TAIL_TOLERANCE:.0e}")
    elif abs(V(tail_radius)) * tail_radius >= TAIL_TOLERANCE:
        raise IntegrationError(f"R∞={tail_radius} 不满足尾部判据 |V(R∞)|·R∞ < {TAIL_TOLERANCE:.0e}")
    tail_radius = max(tail_radius, r_top)

    sol = _envelope_solution(V, k, tail_radius, r_min=min(0.0, float(np.min(r_grid))))
    phi, dphi = sol(r_grid)
    phase = np.exp(1j * k * r_grid)
    values = phase * phi
    if not with_derivative:
        return values
    return values, phase * (dphi + 1j * k * phi)


def u_from_f(model: PotentialModel, k, r: float, kappa0: float = KAPPA0):
    """正则解 u(k,r) = (f(k,0)f(-k,r) - f(-k,0)f(k,r)) / (2ik)。

    |k| < κ₀ 时取对称极限 u(0,r) = -i[∂ₖf(0,0) f(0,r) - f(0,0) ∂ₖf(0,r)]。
    """
    mp = model.ctx.mp
    k = mp.mpc(k)
    if r == 0:
        return mp.mpc(0)
    if abs(k) < kappa0:
        zero = mp.mpc(0)
        return -1j * (model.dk_f0(zero) * model.f(zero, r) - model.f0(zero) * model.dk_f(zero, r))
    numerator = model.f0(k) * model.f(-k, r) - model.f0(-k) * model.f(k, r)
    return numerator / (2j * k)


def eckart_f(model: EckartModel, k, r: float):
    """Eckart 模型的 Jost 解 f(k,r)；1+2ik 接近非正整数时抛出 HypergeometricPoleError。"""
    try:
        return model.f(k, r)
    except HypergeometricPoleError:
        logger.error(f"k={complex(k)} 位于 f 的极点 k=in/2 附近")
        raise


def f_ratio(model: PotentialModel, k, r: float):
    """f(-k,r)/f(-k,0)，k=-in/2 处的极点在比值中相消。"""
    mp = model.ctx.mp
    k = mp.mpc(k)
    if r == 0:
        return mp.mpc(1)
    numerator, denominator = model.ratio_parts(k, r)
    if abs(denominator) <= model.ctx.tol * abs(numerator):
        raise ResonanceProximityError(f"k={complex(k)} 接近 f(-k,0) 的零点")
    return mp.exp(1j * k * r) * numerator / denominator
