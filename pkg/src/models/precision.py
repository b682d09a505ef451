# src/models/precision.py
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Union

from mpmath.ctx_mp import MPContext

# 谱量（k、C(k)、留数）统一用工作精度下的 mpmath 复数表示
ComplexScalar = Union[complex, Any]

DOUBLE_DPS = 15


@lru_cache(maxsize=None)
def _mp_context(dps: int) -> MPContext:
    # 每个精度一个独立上下文，不在共享上下文上修改精度
    ctx = MPContext()
    ctx.dps = dps
    return ctx


@dataclass(frozen=True)
class ArithmeticContext:
    """可配置精度的算术上下文。

    dps 为十进制有效位数，15 对应双精度；大于 15 时所有留数与 Moshinsky
    项都在 mpmath 中以该精度计算。
    """

    dps: int = DOUBLE_DPS

    def __post_init__(self):
        if not isinstance(self.dps, int) or self.dps < DOUBLE_DPS:
            raise ValueError(f"精度必须是不小于 {DOUBLE_DPS} 的整数位数，当前为 {self.dps}")

    @property
    def mp(self) -> MPContext:
        return _mp_context(self.dps)

    @property
    def extended(self) -> bool:
        return self.dps > DOUBLE_DPS

    @property
    def tol(self) -> float:
        """相对容差：比工作精度宽两位。"""
        return 10.0 ** (-(self.dps - 2))

    def guarded(self, extra: int) -> MPContext:
        """返回多 extra 位保护位的上下文，用于有抵消的级数求和。"""
        return _mp_context(self.dps + max(int(extra), 0))

    def mpc(self, z) -> Any:
        return self.mp.mpc(z)

    @staticmethod
    def to_complex(z) -> complex:
        return complex(z)


DEFAULT_CONTEXT = ArithmeticContext()
