# src/models/pole.py
import cmath
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional


class PoleKind(str, Enum):
    """极点来源：h_α 的三组零点、f(-k,0) 的零点（共振）及 f(k,0) 的零点（镜像）。"""

    AUX1 = "aux1"
    AUX2 = "aux2"
    AUX3 = "aux3"
    RESONANCE = "resonance"
    MIRROR = "mirror"

    @property
    def is_aux(self) -> bool:
        return self in (PoleKind.AUX1, PoleKind.AUX2, PoleKind.AUX3)


@dataclass
class Pole:
    """g(k,r) 的一个单极点。

    k 为工作精度下的 mpmath 复数；denom_deriv 是分母在 k 处的导数；
    residual 为精化后分母的相对残差。log_weight 缓存留数中与 r 无关的部分
    k C(k)/D'(k) 的对数，由 poles 模块填充。
    """

    k: Any
    kind: PoleKind
    seed: complex
    refined: bool = False
    denom_deriv: Optional[Any] = None
    residual: float = float("nan")
    log_weight: Optional[complex] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.kind, PoleKind):
            self.kind = PoleKind(self.kind)
        if not cmath.isfinite(complex(self.k)):
            raise ValueError(f"极点位置必须有限，当前为 {self.k}")

    @property
    def value(self) -> complex:
        return complex(self.k)

    @property
    def modulus(self) -> float:
        return abs(self.value)

    @property
    def phase(self) -> float:
        return cmath.phase(self.value)

    def sort_key(self):
        # 先按 |k|，再按辐角，保证合并结果确定
        return round(self.modulus, 12), round(self.phase, 12)

    def to_dict(self) -> dict:
        k = self.value
        return {
            'kind': self.kind.value,
            're_k': k.real,
            'im_k': k.imag,
            'seed_re': self.seed.real,
            'seed_im': self.seed.imag,
            'refined': self.refined,
            'residual': self.residual,
        }
