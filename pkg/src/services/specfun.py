# src/services/specfun.py
"""复数特殊函数：误差函数及其渐近展开、Gauss 超几何函数 ₂F₁ 及其对 c 的导数、
Pochhammer 符号和 Lambert W 函数的 -1 分支。

所有函数都是参数与算术上下文的纯函数，可以在线程间并发调用。
"""
import logging
import math
from typing import Tuple

from src.models.precision import DEFAULT_CONTEXT, ArithmeticContext
from src.utils.errors import DomainError, HypergeometricPoleError, ToleranceError

logger = logging.getLogger(__name__)

# ₂F₁ 级数求和的保护位与上限
_GUARD_DIGITS = 8
_MAX_GUARD_DIGITS = 400
_MAX_TERMS = 200000


def erf_c(z, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """复变量误差函数 erf(z)，在工作精度下求值。

    |z| 很大时 mpmath 内部以缩放形式计算 e^{-z²}，|z| ≤ 10⁶ 不会溢出。
    """
    mp = ctx.mp
    return mp.erf(mp.mpc(z))


def _sector_factor(phase: float) -> float:
    # 余项界随辐角放大：|ph| ≤ π/4 时为首个舍去项本身，之外按 csc(2|ph|) 放大
    if phase <= math.pi / 4:
        return 1.0
    return 1.0 / max(abs(math.sin(2.0 * phase)), 1e-3)


def erf_asymptotic(z, order: int, sign: int = None,
                   ctx: ArithmeticContext = DEFAULT_CONTEXT) -> Tuple[object, float]:
    """erf(z) 的大参数渐近展开，返回 (值, 截断误差界)。

    erf(z) ≈ σ - e^{-z²}/√π · Σ_{k=0}^{M} (-1)^k (1/2)_k / z^{2k+1}，
    σ=±1 由调用者选择（默认按 Re z 的符号），要求 |ph(σz)| < 3π/4。
    """
    if order < 0:
        raise DomainError(f"展开阶数必须非负，当前为 {order}")
    mp = ctx.mp
    z = mp.mpc(z)
    if z == 0:
        raise DomainError("z=0 不在渐近展开的适用范围内")
    if sign is None:
        sign = 1 if mp.re(z) >= 0 else -1
    if sign not in (1, -1):
        raise DomainError(f"分支符号必须是 +1 或 -1，当前为 {sign}")
    phase = abs(float(mp.arg(sign * z)))
    if phase >= 3 * math.pi / 4:
        raise DomainError(
            f"|ph({'+' if sign > 0 else '-'}z)|={phase:.4f} 超出有效扇区 |ph(±z)| < 3π/4")

    prefactor = mp.exp(-z * z) / mp.sqrt(mp.pi)
    z2 = z * z
    power = z
    total = mp.mpc(0)
    for k in range(order + 1):
        total += (-1) ** k * mp.rf(mp.mpf(0.5), k) / power
        power *= z2
    omitted = mp.rf(mp.mpf(0.5), order + 1) / power
    value = sign - prefactor * total
    bound = float(abs(prefactor * omitted)) * _sector_factor(phase)
    return value, bound


def pochhammer(a, n: int, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """上升阶乘 (a)_n = a(a+1)...(a+n-1)，(a)_0 = 1。"""
    if n < 0:
        raise DomainError(f"Pochhammer 符号的阶数必须非负，当前为 {n}")
    mp = ctx.mp
    return mp.rf(mp.mpc(a), n)


def _check_z(z) -> None:
    if not (0.0 <= float(z) < 1.0):
        raise DomainError(f"₂F₁ 只支持实数 z ∈ [0,1)，当前为 {z}")


def _check_c(c, mp, tol: float) -> None:
    n = int(mp.nint(-mp.re(c)))
    if n >= 0 and abs(c + n) < tol * max(1, n):
        raise HypergeometricPoleError(n, complex(c))


def _gauss_series(a, b, c, z, mp, with_dc: bool, regularized: bool):
    """₂F₁ 定义级数的求和，返回 (和, ∂c 和, 最大项模)。

    regularized=True 时每项除以 Γ(c+n)（用 1/Γ 的递推，|c+n|<1/2 时直接调用 rgamma）。
    比值趋于 z 后用几何尾项收尾。
    """
    eps = mp.mpf(10) ** (-(mp.dps + 2))
    zf = mp.mpf(z)
    z_abs = abs(zf)
    n_min = max(0, int(math.ceil(-float(mp.re(c))))) + 2

    numerator = mp.mpc(1)
    inv_gamma = mp.rgamma(c) if regularized else mp.mpc(1)
    term = numerator * inv_gamma
    harmonic = mp.mpc(0)
    total = term
    total_dc = mp.mpc(0)
    peak = abs(term)
    for n in range(_MAX_TERMS):
        numerator = numerator * (a + n) * (b + n) * zf / (n + 1)
        if regularized:
            if abs(c + n) < 0.5:
                inv_gamma = mp.rgamma(c + n + 1)
            else:
                inv_gamma = inv_gamma / (c + n)
            ratio_den = mp.mpc(1)
        else:
            ratio_den = c + n
            inv_gamma = inv_gamma / ratio_den
        previous = term
        term = numerator * inv_gamma
        if with_dc:
            harmonic += 1 / (c + n)
            term_dc = -term * harmonic
            total_dc += term_dc
            peak = max(peak, abs(term_dc))
        total += term
        peak = max(peak, abs(term))
        if term == 0:
            break
        if n + 1 < n_min or previous == 0:
            continue
        ratio = term / previous
        r_hat = max(abs(ratio), z_abs)
        if r_hat >= 1:
            continue
        tail = abs(term) * r_hat / (1 - r_hat)
        scale = max(abs(total), abs(total_dc)) if with_dc else abs(total)
        if tail <= eps * scale:
            # 几何尾项加速
            total += term * ratio / (1 - ratio)
            if with_dc:
                total_dc += term_dc * ratio / (1 - ratio)
            break
    else:
        raise ToleranceError(f"₂F₁ 级数在 {_MAX_TERMS} 项内未收敛 (z={z})")
    return total, total_dc, peak


def _guarded_series(a, b, c, z, ctx: ArithmeticContext, with_dc: bool, regularized: bool):
    # 抵消损失的位数超过保护位时提高精度重算
    guard = _GUARD_DIGITS
    while True:
        mp = ctx.guarded(guard)
        total, total_dc, peak = _gauss_series(mp.mpc(a), mp.mpc(b), mp.mpc(c), z, mp,
                                              with_dc, regularized)
        result = total_dc if with_dc else total
        size = abs(result)
        if size == 0 or peak == 0:
            return ctx.mp.mpc(result)
        lost = float(mp.log10(peak / size))
        if lost <= guard - 2:
            return ctx.mp.mpc(result)
        if guard >= _MAX_GUARD_DIGITS:
            raise ToleranceError(f"₂F₁ 级数抵消过重，损失 {lost:.0f} 位")
        logger.debug(f"₂F₁ 级数损失 {lost:.1f} 位有效数字，提高保护位重算")
        guard = min(int(lost) + 10, _MAX_GUARD_DIGITS)


def hyp2f1(a, b, c, z, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """Gauss 超几何函数 ₂F₁(a,b;c;z)，复参数、实数 z ∈ [0,1)。"""
    _check_z(z)
    mp = ctx.mp
    _check_c(mp.mpc(c), mp, ctx.tol)
    if z == 0:
        return mp.mpc(1)
    return _guarded_series(a, b, c, z, ctx, with_dc=False, regularized=False)


def hyp2f1_dc(a, b, c, z, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """∂/∂c ₂F₁(a,b;c;z)，逐项求导：第 n 项乘以 -Σ_{j<n} 1/(c+j)。"""
    _check_z(z)
    mp = ctx.mp
    _check_c(mp.mpc(c), mp, ctx.tol)
    if z == 0 or a == 0 or b == 0:
        return mp.mpc(0)
    return _guarded_series(a, b, c, z, ctx, with_dc=True, regularized=False)


def hyp2f1_regularized(a, b, c, z, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """正则化的 ₂F₁(a,b;c;z)/Γ(c)，对 c 是整函数，非正整数 c 处取极限值。"""
    _check_z(z)
    mp = ctx.mp
    if z == 0:
        return mp.rgamma(mp.mpc(c))
    return _guarded_series(a, b, c, z, ctx, with_dc=False, regularized=True)


def lambert_w_m1(x, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """Lambert W 函数的 -1 分支，定义域 [-1/e, 0)，返回 w ≤ -1 且 w·e^w = x。

    Halley 迭代；种子在 x > -1/4 时取 ln(-x) - ln(-ln(-x))，靠近分支点时用
    p = -√(2(ex+1)) 的级数。
    """
    mp = ctx.mp
    x = mp.mpf(x)
    branch_point = -mp.exp(-1)
    if x >= 0 or x < branch_point - ctx.tol:
        raise DomainError(f"W₋₁ 的定义域为 [-1/e, 0)，当前 x={float(x)}")
    p_sq = 2 * (mp.e * x + 1)
    if p_sq <= 0:
        return mp.mpf(-1)
    if x < -0.25:
        p = -mp.sqrt(p_sq)
        w = -1 + p - p ** 2 / 3 + 11 * p ** 3 / 72
    else:
        log_x = mp.log(-x)
        w = log_x - mp.log(-log_x)

    tol = mp.mpf(10) ** (-mp.dps)
    for _ in range(100):
        ew = mp.exp(w)
        residual = w * ew - x
        if w == -1:
            break
        step = residual / (ew * (w + 1) - (w + 2) * residual / (2 * w + 2))
        w -= step
        if abs(step) <= tol * abs(w):
            break
    else:
        logger.warning(f"W₋₁({float(x)}) Halley 迭代未在 100 步内收敛")
    return min(w, mp.mpf(-1))
