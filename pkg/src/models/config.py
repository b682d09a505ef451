# src/models/config.py
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from src.models.precision import ArithmeticContext

# 默认展开参数
DEFAULT_ALPHA = 1.25
DEFAULT_K_MAX = 40.0
# CN 默认网格间距，5/256
DEFAULT_DR = 0.01953125


@dataclass
class ExpansionConfig:
    """极点展开参数。

    alpha 为 h_α 的自由参数；k_max 为极点模长截断；precision 为十进制有效位数；
    coefficient_method 选择 C(k) 的算法：'ode' 批量常微分方程或 'quad' 逐点积分。
    """

    alpha: float = DEFAULT_ALPHA
    k_max: float = DEFAULT_K_MAX
    precision: int = 15
    r_grid: Sequence[float] = field(default_factory=lambda: [0.5])
    zero_tol: float = 1e-10
    sum_rule_tol: float = 1e-3
    truncation_tol: float = 1e-6
    degenerate_tol: float = 1e-6
    cell_size: float = 2.0
    workers: int = 1
    coefficient_method: str = "ode"
    max_alpha_nudges: int = 5

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha 必须为正且有限，当前为 {self.alpha}")
        if not (math.isfinite(self.k_max) and self.k_max > 0):
            raise ValueError(f"k_max 必须为正且有限，当前为 {self.k_max}")
        if self.coefficient_method not in ("ode", "quad"):
            raise ValueError(f"coefficient_method 必须是 'ode' 或 'quad'，当前为 {self.coefficient_method}")
        if self.workers < 1:
            raise ValueError("workers 至少为 1")
        if any(r < 0 or not math.isfinite(r) for r in self.r_grid):
            raise ValueError("r_grid 中的位置必须非负且有限")
        self.r_grid = [float(r) for r in self.r_grid]
        self.ctx = ArithmeticContext(int(self.precision))


@dataclass
class CNConfig:
    """Crank–Nicolson 参数：默认 dt = dr²/4。"""

    dr: float = DEFAULT_DR
    L: float = 650.0
    t_end: float = 3.0
    dt: Optional[float] = None

    def __post_init__(self):
        if not (self.dr > 0 and self.L > 0 and self.t_end >= 0):
            raise ValueError(f"CN 参数无效: dr={self.dr}, L={self.L}, t_end={self.t_end}")
        if self.dt is None:
            self.dt = self.dr ** 2 / 4.0
        if self.dt <= 0:
            raise ValueError(f"dt 必须为正，当前为 {self.dt}")
        if self.L < 4 * self.dr:
            raise ValueError("盒子长度至少要包含 4 个网格点")

    @property
    def n_intervals(self) -> int:
        return int(round(self.L / self.dr))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))
