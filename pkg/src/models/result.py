# src/models/result.py
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd


@dataclass
class SpectralCoefficient:
    """广义 Fourier 系数 C(k) 及其积分误差估计"""

    k: complex
    C: Any
    error: float = 0.0


@dataclass
class DecayCheckReport:
    """C(k) 增长/衰减诊断"""

    real_axis_exponent: float
    gaussian_growth_rate: float
    growth_bound_rate: float
    growth_bound_ok: bool
    samples: Dict[str, List[float]] = field(default_factory=dict)


@dataclass
class SumRuleDefects:
    """三条求和规则的部分和、目标值与缺陷（相对最大保留项）"""

    r: float
    k_max: float
    partial_sums: Tuple[complex, complex, complex]
    targets: Tuple[complex, complex, complex]
    largest_terms: Tuple[float, float, float]

    @property
    def defects(self) -> Tuple[float, float, float]:
        return tuple(abs(s - t) for s, t in zip(self.partial_sums, self.targets))

    @property
    def relative_defects(self) -> Tuple[float, float, float]:
        return tuple(d / max(m, 1e-300) for d, m in zip(self.defects, self.largest_terms))

    def to_dict(self) -> dict:
        return {
            'r': self.r,
            'k_max': self.k_max,
            'defects': list(self.defects),
            'relative_defects': list(self.relative_defects),
        }


@dataclass
class EvolutionResult:
    """ψ(r,t) 在 r_grid × t_grid 上的采样以及诊断量"""

    r_grid: np.ndarray
    t_grid: np.ndarray
    psi: np.ndarray
    truncation: np.ndarray
    sum_rules: List[SumRuleDefects] = field(default_factory=list)
    alpha: float = 0.0
    k_max: float = 0.0

    def __post_init__(self):
        self.r_grid = np.asarray(self.r_grid, dtype=float)
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.psi = np.asarray(self.psi, dtype=complex)
        self.truncation = np.asarray(self.truncation, dtype=float)
        expected = (len(self.r_grid), len(self.t_grid))
        if self.psi.shape != expected or self.truncation.shape != expected:
            raise ValueError(f"ψ 采样形状 {self.psi.shape} 与网格 {expected} 不一致")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("ψ 采样中存在非有限值")

    def to_frame(self) -> pd.DataFrame:
        """长表：t, r, Re ψ, Im ψ, |ψ|, 截断估计"""
        t_mesh, r_mesh = np.meshgrid(self.t_grid, self.r_grid)
        return pd.DataFrame({
            't': t_mesh.ravel(),
            'r': r_mesh.ravel(),
            're_psi': self.psi.real.ravel(),
            'im_psi': self.psi.imag.ravel(),
            'abs_psi': np.abs(self.psi).ravel(),
            'truncation': self.truncation.ravel(),
        }).sort_values(['t', 'r'], kind='mergesort').reset_index(drop=True)


@dataclass
class AsymptoticsReport:
    """晚期渐近量：ψ∞(r)、t_alg、k₀ 与幂律系数"""

    r: float
    psi_inf: complex
    t_alg: Optional[float]
    k0: Optional[complex]
    S_coefficient: float
    P_coefficient: Optional[float] = None
    exp_amplitude: Optional[float] = None
    decay_rate: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = asdict(self)
        data['psi_inf'] = [self.psi_inf.real, self.psi_inf.imag]
        data['k0'] = None if self.k0 is None else [self.k0.real, self.k0.imag]
        return data

    def to_text(self) -> str:
        """扁平的 key = value 文本块"""
        lines = [
            f"r = {self.r!r}",
            f"psi_inf = {self.psi_inf.real!r} {self.psi_inf.imag:+}j",
            f"abs_psi_inf = {abs(self.psi_inf)!r}",
            f"t_alg = {self.t_alg!r}",
            f"k0 = {self.k0!r}",
            f"S_coefficient = {self.S_coefficient!r}",
            f"P_coefficient = {self.P_coefficient!r}",
            f"exp_amplitude = {self.exp_amplitude!r}",
            f"decay_rate = {self.decay_rate!r}",
        ]
        lines.extend(f"note = {note}" for note in self.notes)
        return "\n".join(lines)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'r': self.r,
            're_psi_inf': self.psi_inf.real,
            'im_psi_inf': self.psi_inf.imag,
            't_alg': self.t_alg,
            're_k0': None if self.k0 is None else self.k0.real,
            'im_k0': None if self.k0 is None else self.k0.imag,
            'S_coefficient': self.S_coefficient,
            'P_coefficient': self.P_coefficient,
            'exp_amplitude': self.exp_amplitude,
            'decay_rate': self.decay_rate,
        }])


@dataclass
class GridState:
    """CN 网格上的波函数，r_j = j·dr，两端 Dirichlet 边界为 0"""

    psi: np.ndarray
    dr: float
    t: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.ndim != 1 or len(self.psi) < 3:
            raise ValueError("网格态至少需要 3 个点")
        if self.psi[0] != 0 or self.psi[-1] != 0:
            raise ValueError("Dirichlet 边界点必须严格为 0")

    @property
    def r(self) -> np.ndarray:
        return self.dr * np.arange(len(self.psi))

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.dr)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            't': np.full(len(self.psi), self.t),
            'r': self.r,
            're_psi': self.psi.real,
            'im_psi': self.psi.imag,
        })
