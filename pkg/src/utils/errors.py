# src/utils/errors.py
from typing import Optional


class DecayError(Exception):
    """所有数值与配置错误的基类，exit_code 对应命令行退出码。"""

    exit_code = 1


class ConfigError(DecayError, ValueError):
    """配置文件、环境变量或命令行参数无效"""

    exit_code = 2


class DomainError(DecayError, ValueError):
    """参数超出运算的定义域"""

    exit_code = 2


class HypergeometricPoleError(DomainError):
    """₂F₁ 的参数 c 过于接近非正整数 -n"""

    def __init__(self, n: int, c):
        self.n = n
        self.c = c
        super().__init__(f"c={c} 接近非正整数 {-n}，₂F₁ 在此处有极点")


class ToleranceError(DecayError):
    """数值精度未达到要求，estimate 为实际达到的误差估计"""

    exit_code = 3

    def __init__(self, message: str, estimate: Optional[float] = None):
        self.estimate = estimate
        super().__init__(message if estimate is None else f"{message} (误差估计 {estimate:.3e})")


class QuadratureError(ToleranceError):
    """数值积分细分后仍未收敛"""


class IntegrationError(ToleranceError):
    """常微分方程积分失败或尾部截断条件不满足"""


class PrecisionError(ToleranceError):
    """当前工作精度无法表示被积函数，digits 为建议的有效位数"""

    def __init__(self, message: str, digits: int):
        self.digits = digits
        super().__init__(f"{message}，建议精度 --precision {digits}")


class NoCrossoverError(ToleranceError):
    """指数项在所有时刻都低于代数衰减项，t_alg 不存在"""


class CompletenessError(DecayError):
    """辐角原理给出的零点数与牛顿迭代找到的零点数不一致"""

    exit_code = 4

    def __init__(self, message: str, expected: int = 0, found: int = 0):
        self.expected = expected
        self.found = found
        super().__init__(f"{message}: 缠绕数 {expected}，找到 {found}")


class DegeneratePoleError(DecayError):
    """辅助极点与共振极点几乎重合，需要调整 α"""

    exit_code = 3


class ResonanceProximityError(DomainError):
    """k 距离 f(-k,0) 的零点太近，比值无定义"""


class ZeroEnergyResonanceError(DomainError):
    """f(0,0)=0，存在零能共振，渐近公式不适用"""
