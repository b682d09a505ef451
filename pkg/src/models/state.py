# src/models/state.py
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

# 网格上 log|ψ₀| 的下限，避免 log(0)
_LOG_FLOOR = -745.0


@dataclass
class InitialState(ABC):
    """初态 ψ₀(r) 的公共部分。

    tail = (c₂, c₃) 表示 |ψ₀(r)| = O(e^{-c₂ r^{c₃}})，c₃ ≥ 2 时高斯三项法适用。
    """

    tail: Tuple[float, float] = (0.0, 2.0)
    normalized: bool = True
    name: str = "state"

    def __post_init__(self):
        c2, c3 = self.tail
        if c2 < 0 or c3 <= 0:
            raise ValueError(f"尾部参数必须满足 c₂ ≥ 0, c₃ > 0，当前为 {self.tail}")
        if c3 < 2:
            raise ValueError(f"c₃={c3} < 2，超出高斯三项法的适用范围")

    @abstractmethod
    def psi0(self, r):
        """ψ₀(r)，对数组逐点求值"""

    def log_envelope(self, r: np.ndarray) -> np.ndarray:
        """log|ψ₀(r)| 的上包络"""
        values = np.abs(np.asarray(self.psi0(np.asarray(r, dtype=float))))
        with np.errstate(divide="ignore"):
            return np.maximum(np.log(values), _LOG_FLOOR)

    @property
    def is_real(self) -> bool:
        return True

    def support_radius(self, floor: float = 1e-26) -> float:
        """|ψ₀| 的包络低于 floor·max 之后的半径"""
        c2, c3 = self.tail
        if c2 <= 0:
            raise ValueError("未给出尾部衰减率，无法确定截断半径")
        return (-math.log(floor) / c2) ** (1.0 / c3) + 1.0

    @abstractmethod
    def norm(self) -> float:
        """∫₀^∞ |ψ₀|² dr"""


@dataclass
class GaussianMixtureState(InitialState):
    """ψ₀(r) = Σ c_j r e^{-a_j r²}；自由模型下 C(k)、演化与生存振幅都有闭式。"""

    coefficients: Sequence[float] = field(default_factory=lambda: [1.0])
    exponents: Sequence[float] = field(default_factory=lambda: [1.0])

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self.exponents = np.asarray(self.exponents, dtype=float)
        if self.coefficients.shape != self.exponents.shape or self.coefficients.ndim != 1:
            raise ValueError("系数与指数的个数必须一致")
        if np.any(self.exponents <= 0):
            raise ValueError("高斯指数 a_j 必须为正")
        self.tail = (float(np.min(self.exponents)), 2.0)
        super().__post_init__()
        if self.normalized and abs(self.norm() - 1.0) > 1e-8:
            raise ValueError(f"标记为归一化的初态范数为 {self.norm():.12f}")

    def psi0(self, r):
        r = np.asarray(r, dtype=float)
        return r * np.sum(self.coefficients[:, None] * np.exp(-np.outer(self.exponents, r * r)),
                          axis=0).reshape(r.shape)

    def log_envelope(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        weights = np.abs(self.coefficients)
        mask = weights > 0
        if not np.any(mask):
            return np.full(r.shape, _LOG_FLOOR)
        exponents = np.log(weights[mask])[:, None] - np.outer(self.exponents[mask], r * r)
        peak = exponents.max(axis=0)
        with np.errstate(divide="ignore"):
            log_r = np.log(r)
        total = peak + np.log(np.exp(exponents - peak).sum(axis=0)) + log_r
        return np.maximum(total, _LOG_FLOOR).reshape(r.shape)

    def norm(self) -> float:
        a = self.exponents
        c = self.coefficients
        gram = np.sqrt(np.pi) / (4.0 * np.add.outer(a, a) ** 1.5)
        return float(c @ gram @ c)

    def free_coefficient(self, k, mp):
        """自由模型的 C(k) = Σ c_j √π/(4a_j^{3/2}) e^{-k²/(4a_j)}"""
        k = mp.mpc(k)
        total = mp.mpc(0)
        for c, a in zip(self.coefficients, self.exponents):
            if c == 0:
                continue
            a = mp.mpf(a)
            total += mp.mpf(c) * mp.sqrt(mp.pi) / (4 * a ** 1.5) * mp.exp(-k * k / (4 * a))
        return total

    def free_coefficient_array(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=complex)
        pref = self.coefficients * np.sqrt(np.pi) / (4.0 * self.exponents ** 1.5)
        return np.sum(pref[:, None] * np.exp(-np.outer(1.0 / (4.0 * self.exponents), ks * ks)), axis=0)

    def free_evolved(self, r, t: float) -> np.ndarray:
        """自由演化闭式（奇延拓）：ψ(r,t) = Σ c_j r (1+4ia_jt)^{-3/2} e^{-a_j r²/(1+4ia_jt)}"""
        r = np.asarray(r, dtype=float)
        denom = 1.0 + 4j * self.exponents * t
        terms = (self.coefficients / denom ** 1.5)[:, None] * np.exp(
            -np.outer(self.exponents / denom, r * r))
        return (r * terms.sum(axis=0)).reshape(r.shape)

    def free_overlap(self, t: float) -> complex:
        """⟨ψ₀|ψ(t)⟩ 的自由闭式"""
        denom = 1.0 + 4j * self.exponents * t
        eff = self.exponents / denom
        gram = np.sqrt(np.pi) / (4.0 * np.add.outer(self.exponents, eff) ** 1.5)
        return complex(self.coefficients @ gram @ (self.coefficients / denom ** 1.5))


@dataclass
class TabulatedState(InitialState):
    """网格上给出的初态，三次样条插值，网格外取 0。"""

    r: Sequence[float] = field(default_factory=list)
    values: Sequence[float] = field(default_factory=list)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.r.ndim != 1 or self.r.shape != self.values.shape or len(self.r) < 4:
            raise ValueError("初态表格需要至少 4 个点，且 r 与 ψ₀ 长度一致")
        if abs(self.values[0]) > 1e-12 or self.r[0] != 0.0:
            raise ValueError("初态必须从 r=0 开始且 ψ₀(0)=0")
        super().__post_init__()
        self._spline = CubicSpline(self.r, self.values)
        if self.normalized and abs(self.norm() - 1.0) > 1e-8:
            raise ValueError(f"标记为归一化的初态范数为 {self.norm():.12f}")

    def psi0(self, r):
        r = np.asarray(r, dtype=float)
        inside = (r >= 0) & (r <= self.r[-1])
        return np.where(inside, self._spline(np.clip(r, 0.0, self.r[-1])), 0.0)

    def support_radius(self, floor: float = 1e-26) -> float:
        return float(self.r[-1])

    def norm(self) -> float:
        grid = np.linspace(0.0, self.r[-1], 8001)
        return float(simpson(self._spline(grid) ** 2, x=grid))


def trapped_gaussian(rho: float = 1.0) -> GaussianMixtureState:
    """ψ₀(r) = 2^{5/2} ρ^{-3/2} π^{-1/4} r e^{-2(r/ρ)²}"""
    if rho <= 0:
        raise ValueError(f"ρ 必须为正，当前为 {rho}")
    amplitude = 2 ** 2.5 * rho ** -1.5 * np.pi ** -0.25
    return GaussianMixtureState(coefficients=[amplitude], exponents=[2.0 / rho ** 2],
                                name=f"trapped_gaussian(rho={rho})")


def c0_free_state(a1: float = 2.0, a2: float = 4.0) -> GaussianMixtureState:
    """自由模型下 C(0)=0 的归一化初态 c(r e^{-a₁r²} - λ r e^{-a₂r²})，λ=(a₂/a₁)^{3/2}。"""
    lam = (a2 / a1) ** 1.5
    raw = GaussianMixtureState(coefficients=[1.0, -lam], exponents=[a1, a2], normalized=False)
    scale = 1.0 / math.sqrt(raw.norm())
    return GaussianMixtureState(coefficients=[scale, -lam * scale], exponents=[a1, a2],
                                name="c0_free_state")


def zero_state() -> GaussianMixtureState:
    return GaussianMixtureState(coefficients=[0.0], exponents=[1.0], normalized=False,
                                name="zero_state")


def load_state(path: str, tail: Optional[Tuple[float, float]] = None) -> TabulatedState:
    """从两列 CSV（r, ψ₀）读取初态"""
    frame = pd.read_csv(path)
    return TabulatedState(tail=tail or (1.0, 2.0), r=frame.iloc[:, 0].to_numpy(),
                          values=frame.iloc[:, 1].to_numpy(), normalized=False,
                          name=f"file({path})")
