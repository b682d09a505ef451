# src/services/moshinsky.py
"""Moshinsky 型核函数 M(k,r,β) = ∫ dp/(iπ) e^{-βp²+irp}/(p-k)。

闭式 M = e^{ikr-βk²}[sgn Im k + erf(z)]，z = (r+2ikβ)/(2√β)。按 Re z 的符号
改写成 Faddeeva 函数 w 的形式：

    Re z ≥ 0:  M = (s+1)E - G·w(iz)
    Re z < 0:  M = (s-1)E + G·w(-iz)

其中 E = e^{ikr-βk²}，G = e^{-r²/(4β)}，s = sgn Im k（实轴上取主值 s=0）。
G·w 部分始终有界；指数部分以 (系数, log E) 的形式交给调用者，在对数空间
与留数合并。
"""
import cmath
import logging
import math
from dataclasses import dataclass
from typing import Any, Tuple

import numpy as np
from scipy.special import wofz

from src.models.precision import DEFAULT_CONTEXT, ArithmeticContext
from src.services.quadrature import gauss_panels, phase_edges
from src.utils.errors import DomainError

logger = logging.getLogger(__name__)

# |e^{-βp²}| < 1e-20 处截断积分区间
_TRUNCATION_LOG = 46.05
# 实轴判据（相对 |k|）
REAL_AXIS_TOL = 1e-13


@dataclass
class MoshArgs:
    """M(k,r,β) 的参数；β = γ + it，要求 Re β ≥ 0。"""

    k: Any
    r: float
    beta: Any

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 0):
            raise ValueError(f"r 必须非负且有限，当前为 {self.r}")
        beta = complex(self.beta)
        if not cmath.isfinite(beta) or beta.real < -1e-15 * max(1.0, abs(beta)):
            raise ValueError(f"β 的实部必须非负，当前为 {beta}")
        if not cmath.isfinite(complex(self.k)):
            raise ValueError(f"k 必须有限，当前为 {self.k}")

    @property
    def sqrt_beta(self) -> complex:
        # 主值分支，Re √β ≥ 0
        return cmath.sqrt(complex(self.beta))


def nu_sign(k) -> int:
    """渐近式中的 ν：ph(k) ∈ [-π/4, 3π/4) 时取 -1，否则 +1。"""
    phase = cmath.phase(complex(k))
    return -1 if -math.pi / 4 <= phase < 3 * math.pi / 4 else 1


def _im_sign(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=complex)
    real_axis = np.abs(k.imag) <= REAL_AXIS_TOL * np.maximum(np.abs(k), 1.0)
    return np.where(real_axis, 0.0, np.sign(k.imag))


def mosh_split(k, r, beta) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """双精度的分解形式，对 k、r、β 广播。

    返回 (coef, log_e, bounded)，M = coef·exp(log_e) + bounded。
    coef ∈ {0, ±1, ±2}，bounded = ∓G·w(±iz) 的模不超过 1。
    β=0（t 恰好等于 α 时的 γ=-iα 项）取极限：r>0 时 M = (s+1)e^{ikr}，r=0 时 M = s。
    """
    k, r, beta = np.broadcast_arrays(np.asarray(k, dtype=complex), np.asarray(r, dtype=float),
                                     np.asarray(beta, dtype=complex))
    s = _im_sign(k)
    at_zero = beta == 0
    beta = np.where(at_zero, 1.0, beta)
    sqrt_beta = np.sqrt(beta)
    z = (r + 2j * k * beta) / (2.0 * sqrt_beta)
    gauss = np.exp(-r * r / (4.0 * beta))
    right = z.real >= 0
    coef = np.where(right, s + 1.0, s - 1.0)
    # 每个分支只在自己的半平面求值，另一支的 w 会溢出
    bounded = np.empty(z.shape, dtype=complex)
    bounded[right] = -gauss[right] * wofz(1j * z[right])
    bounded[~right] = gauss[~right] * wofz(-1j * z[~right])
    log_e = 1j * k * r - beta * k * k
    if np.any(at_zero):
        coef = np.where(at_zero, np.where(r > 0, s + 1.0, s), coef)
        log_e = np.where(at_zero, 1j * k * r, log_e)
        bounded = np.where(at_zero, 0j, bounded)
    return coef, log_e, bounded


def mosh_batch(k, r, beta) -> np.ndarray:
    """双精度闭式，只在系数非零处计算指数项。"""
    coef, log_e, bounded = mosh_split(k, r, beta)
    result = np.array(bounded, dtype=complex)
    active = coef != 0
    result[active] += coef[active] * np.exp(log_e[active])
    return result


def mosh_mp_split(k, r: float, beta, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """工作精度下的分解形式，返回 (coef, log_e, bounded)，均为 mpmath 数。"""
    mp = ctx.mp
    k = mp.mpc(k)
    beta = mp.mpc(beta)
    r = mp.mpf(r)
    if abs(mp.im(k)) <= REAL_AXIS_TOL * max(abs(k), 1):
        s = 0
    else:
        s = 1 if mp.im(k) > 0 else -1
    if beta == 0:
        return (s + 1 if r > 0 else s), 1j * k * r, mp.mpc(0)
    z = (r + 2j * k * beta) / (2 * mp.sqrt(beta))
    log_e = 1j * k * r - beta * k * k
    # G·w(±iz) = E·erfc(±z)，在对数空间相乘避免 e^{z²} 的溢出
    if mp.re(z) >= 0:
        coef, sign, tail = s + 1, -1, mp.erfc(z)
    else:
        coef, sign, tail = s - 1, 1, mp.erfc(-z)
    bounded = sign * mp.exp(log_e + mp.log(tail)) if tail != 0 else mp.mpc(0)
    return coef, log_e, bounded


def mosh(args: MoshArgs, ctx: ArithmeticContext = DEFAULT_CONTEXT):
    """闭式 M(k,r,β)，工作精度下求值；k 在实轴上或 β=0 时抛出 DomainError。"""
    mp = ctx.mp
    k = mp.mpc(args.k)
    if abs(mp.im(k)) <= ctx.tol * max(abs(k), 1):
        raise DomainError(f"k={complex(k)} 在积分路径上，需要由 h_α 相消处理")
    if complex(args.beta) == 0:
        raise DomainError("β=0 不在 M(k,r,β) 的定义域内")
    coef, log_e, bounded = mosh_mp_split(k, args.r, args.beta, ctx)
    if coef == 0:
        return bounded
    return coef * mp.exp(log_e) + bounded


def _mosh_integral(k: complex, r: float, beta: complex, rel_tol: float) -> Tuple[complex, float]:
    if beta.real <= 0:
        raise DomainError("定义式积分要求 Re β > 0")
    half_width = math.sqrt(_TRUNCATION_LOG / beta.real)
    a = min(-half_width, k.real - half_width)
    b = max(half_width, k.real + half_width)
    width = max(abs(k.imag), 1e-3)
    # 极点实部附近几何加密
    cluster = [k.real + sign * width * 2.0 ** j for j in range(-2, 8) for sign in (-1, 1)]
    cluster.append(k.real)

    def rate(p: float) -> float:
        return abs(-2.0 * beta.imag * p + r)

    edges = phase_edges(a, b, rate, extra_points=cluster)

    def integrand(p):
        return np.exp(-beta * p * p + 1j * r * p) / (p - k) / (1j * np.pi)

    return gauss_panels(integrand, edges, rel_tol=rel_tol)


def mosh_quadrature(args: MoshArgs, rel_tol: float = 1e-13,
                    regulator: float = 0.02) -> Tuple[complex, float]:
    """定义式积分的数值求值，返回 (值, 绝对误差估计)。

    Re β = 0 时加正则项 ε，用 ε、ε/2、ε/4 三点 Richardson 外推到 ε→0。
    """
    k = complex(args.k)
    if k.imag == 0:
        raise DomainError(f"k={k} 在积分路径上")
    beta = complex(args.beta)
    if beta.real > 0:
        return _mosh_integral(k, args.r, beta, rel_tol)

    values = []
    error = 0.0
    for eps in (regulator, regulator / 2, regulator / 4):
        value, err = _mosh_integral(k, args.r, beta + eps, rel_tol)
        values.append(value)
        error += err
    m1, m2, m4 = values
    extrapolated = (8 * m4 - 6 * m2 + m1) / 3
    first_order = 2 * m4 - m2
    logger.debug(f"ε 外推: 一阶 {first_order}, 二阶 {extrapolated}")
    return extrapolated, error + abs(extrapolated - first_order)


def mosh_asymptotic(args: MoshArgs, nu: int = None) -> complex:
    """大 |β| 的两项渐近式：

    M ≈ E(s+ν) - G√β/(√π(r/2+ikβ))·(1 - (β/2)/(r/2+ikβ)²)。

    第一项（指数项）按原式保留，调用者可以单独取出。
    """
    k = complex(args.k)
    beta = complex(args.beta)
    r = args.r
    if nu is None:
        nu = nu_sign(k)
    if nu not in (1, -1):
        raise DomainError(f"ν 必须是 ±1，当前为 {nu}")
    s = 0.0 if abs(k.imag) <= REAL_AXIS_TOL * max(abs(k), 1.0) else math.copysign(1.0, k.imag)
    exponential = 0j
    if s + nu != 0:
        exponential = (s + nu) * cmath.exp(1j * k * r - beta * k * k)
    anchor = r / 2 + 1j * k * beta
    algebraic = (cmath.exp(-r * r / (4 * beta)) * args.sqrt_beta
                 / (math.sqrt(math.pi) * anchor) * (1 - (beta / 2) / anchor ** 2))
    return exponential - algebraic


def gamma_triple(alpha: float) -> Tuple[complex, complex, complex]:
    """h_α 的三个 γ：α, iα, -iα，Σ_γ e^{-γk²} = h_α(k)。"""
    return complex(alpha), 1j * alpha, -1j * alpha


def reference_coefficient(coef: np.ndarray) -> np.ndarray:
    """沿第 0 轴（三个 γ）取众数系数，用于 h_α=0 时的指数项相消。"""
    c0, c1, c2 = coef
    return np.where((c0 == c1) | (c0 == c2), c0, c1)


def gamma_summed_split(k, r: float, t: float, alpha: float, aux: np.ndarray):
    """对三个 γ 求和后的分解形式。

    返回 (coef, log_e, bounded)，coef 与 log_e 的第 0 轴对应三个 γ。
    aux=True 的极点满足 h_α(k)=0，Σ_γ E_γ = e^{ikr-itk²}h_α(k) 为零，
    因此系数减去众数后只保留少数分支的项。
    """
    k = np.asarray(k, dtype=complex)
    aux = np.asarray(aux, dtype=bool)
    coefs, logs, bounded = [], [], np.zeros(k.shape, dtype=complex)
    for gamma in gamma_triple(alpha):
        coef, log_e, part = mosh_split(k, r, gamma + 1j * t)
        coefs.append(coef)
        logs.append(log_e)
        bounded += part
    coef = np.array(coefs)
    coef = np.where(aux[None, :], coef - reference_coefficient(coef)[None, :], coef)
    return coef, np.array(logs), bounded


def leading_algebraic_tail(t: float, alpha: float) -> complex:
    """Σ_γ i/√(π(γ+it))。

    大 t 时 Σ_γ M(k,r,γ+it) 的代数部分以 (1/k)·Σ_γ i/√(π(γ+it)) 开头，
    与 r 无关；极点和中它的系数是 Σ a_n/k_n。β=0 的项不计入。
    """
    total = 0j
    for gamma in gamma_triple(alpha):
        beta = gamma + 1j * t
        if beta != 0:
            total += 1j / cmath.sqrt(math.pi * beta)
    return total
