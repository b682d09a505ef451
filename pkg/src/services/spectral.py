# src/services/spectral.py
"""广义 Fourier 系数 C(k) = ∫₀^∞ u(k,r) ψ₀(r) dr 与谱积分直接求值。

批量计算时把正则解与重叠积分写成一个复常微分方程组，对所有 k 同时积分：
v = u e^{-κr}（κ = |Im k|），v'' = (V - k²)v - 2κv' - κ²v，
I' = v ψ₀(r) e^{κr - S_k}，C(k) = I(R) e^{S_k}，S_k 为被积函数包络的对数峰值。
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from src.models.precision import ArithmeticContext
from src.models.result import DecayCheckReport, SpectralCoefficient
from src.models.state import GaussianMixtureState, InitialState
from src.services.jost import FreeModel, PotentialModel, u_from_f
from src.services.quadrature import gauss_panels, phase_edges
from src.utils.errors import IntegrationError, PrecisionError

logger = logging.getLogger(__name__)

# 被积函数包络低于峰值 1e-25 处截断
ENVELOPE_DROP = 25.0 * math.log(10.0)
_ENVELOPE_POINTS = 4001


@dataclass
class CoefficientBatch:
    """一批 k 上的 C(k)，以及可选的 u(k,r_j) 与实轴上的 f(k,0)。"""

    k: np.ndarray
    C: np.ndarray
    u: Optional[np.ndarray] = None
    f0: Optional[np.ndarray] = None


def _is_free_gaussian(model: PotentialModel, state: InitialState) -> bool:
    return isinstance(model, FreeModel) and isinstance(state, GaussianMixtureState)


def envelope_profile(state: InitialState, kappa: np.ndarray) -> Tuple[np.ndarray, float]:
    """对每个 κ 返回 log max_r e^{κr}|ψ₀(r)| 以及共同的截断半径 R_cut。"""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    c2, _ = state.tail
    kappa_max = float(kappa.max()) if kappa.size else 0.0
    r_hi = state.support_radius()
    if c2 > 0:
        r_hi += kappa_max / (2.0 * c2) + 1.0
    grid = np.linspace(0.0, r_hi, _ENVELOPE_POINTS)
    log_env = state.log_envelope(grid)
    peaks = np.array([np.max(kap * grid + log_env) for kap in kappa])
    # 最大 κ 的包络最宽
    widest = kappa_max * grid + log_env
    inside = np.nonzero(widest >= widest.max() - ENVELOPE_DROP)[0]
    r_cut = float(grid[inside[-1]]) if inside.size else r_hi
    return peaks, min(max(r_cut, grid[1]), r_hi)


def coefficients_batch(model: PotentialModel, state: InitialState, ks: Sequence[complex],
                       r_values: Sequence[float] = (), with_jost: bool = False,
                       rtol: float = 1e-10) -> CoefficientBatch:
    """对一批 k 同时计算 C(k)。

    r_values 给出需要同时输出 u(k,r) 的位置；with_jost=True 时在势可忽略的
    匹配半径处由 f(k,0) = e^{-ikr}(iku + u') 读出实轴上的 Jost 函数。
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    r_values = np.asarray(r_values, dtype=float)
    n = ks.size
    if n == 0:
        return CoefficientBatch(ks, np.zeros(0, dtype=complex))

    if _is_free_gaussian(model, state):
        u = None
        if r_values.size:
            safe = np.where(ks == 0, 1.0, ks)
            u = np.where(ks[None, :] == 0, r_values[:, None],
                         np.sin(np.outer(r_values, ks)) / safe[None, :])
        f0 = np.ones(n, dtype=complex) if with_jost else None
        return CoefficientBatch(ks, state.free_coefficient_array(ks), u, f0)

    kappa = np.abs(ks.imag)
    shifts, r_cut = envelope_profile(state, kappa)
    r_match = model.tail_radius() if with_jost else 0.0
    r_end = max(r_cut, r_match, float(r_values.max()) if r_values.size else 0.0)
    checkpoints = np.unique(np.concatenate([r_values, [r_cut, r_end]] +
                                           ([[r_match]] if with_jost else [])))
    k2 = ks * ks

    def rhs(r, y):
        v, w = y[:n], y[n:2 * n]
        potential = model.V(r)
        source = float(np.asarray(state.psi0(np.asarray([r])))[0])
        dv = w
        dw = (potential - k2) * v - 2.0 * kappa * w - kappa * kappa * v
        di = v * source * np.exp(kappa * r - shifts)
        return np.concatenate([dv, dw, di])

    y0 = np.concatenate([np.zeros(n, dtype=complex), np.ones(n, dtype=complex),
                         np.zeros(n, dtype=complex)])
    sol = solve_ivp(rhs, (0.0, r_end), y0, method="DOP853", t_eval=checkpoints,
                    rtol=rtol, atol=1e-14)
    if not sol.success:
        logger.error(f"C(k) 批量积分失败: {sol.message}")
        raise IntegrationError(f"C(k) 批量积分失败: {sol.message}")

    def at(r: float) -> np.ndarray:
        return sol.y[:, int(np.searchsorted(checkpoints, r))]

    coefficients = at(r_cut)[2 * n:] * np.exp(shifts)
    u = None
    if r_values.size:
        u = np.array([at(r)[:n] * np.exp(kappa * r) for r in r_values])
    f0 = None
    if with_jost:
        y = at(r_match)
        v, w = y[:n], y[n:2 * n]
        f0 = np.exp((kappa - 1j * ks) * r_match) * (1j * ks * v + w + kappa * v)
    logger.debug(f"C(k) 批量积分完成：{n} 个 k，R_cut={r_cut:.3f}，步数 {sol.t.size}")
    return CoefficientBatch(ks, coefficients, u, f0)


def coefficient_C(model: PotentialModel, state: InitialState, k,
                  ctx: Optional[ArithmeticContext] = None,
                  conjugate: bool = False) -> SpectralCoefficient:
    """工作精度下的 C(k)（conjugate=True 时为 C'(k) = ∫ u ψ₀* dr）。

    自由模型配高斯混合初态时用闭式；否则用 mpmath 自适应积分，截断在
    被积包络低于峰值 1e-25 处。工作精度不足以承受抵消时抛出 PrecisionError。
    """
    ctx = ctx or model.ctx
    mp = ctx.mp
    k = mp.mpc(k)
    if _is_free_gaussian(model, state):
        return SpectralCoefficient(k, state.free_coefficient(k, mp), 0.0)

    kappa = abs(float(mp.im(k)))
    peaks, r_cut = envelope_profile(state, np.array([kappa]))
    peak_digits = float(peaks[0]) / math.log(10.0)
    if not ctx.extended and peak_digits > 300:
        digits = int(math.ceil(peak_digits)) + 20
        raise PrecisionError(f"k={complex(k)} 处被积函数超出双精度范围", digits)

    def integrand(r):
        value = state.psi0(np.array([float(r)]))[0]
        if conjugate:
            value = np.conj(value)
        return u_from_f(model, k, r) * mp.mpc(complex(value))

    r_peak = min(max(kappa / (2.0 * max(state.tail[0], 1e-6)), 1e-3), r_cut)
    nodes = sorted({0.0, r_peak, r_cut})
    value, error = mp.quad(integrand, nodes, error=True, maxdegree=8)
    size = abs(value)
    lost = peak_digits - (float(mp.log10(size)) if size > 0 else -ctx.dps)
    if lost > ctx.dps - 3:
        digits = int(math.ceil(lost)) + 10
        raise PrecisionError(f"C({complex(k)}) 积分抵消损失约 {lost:.0f} 位", digits)
    return SpectralCoefficient(k, value, float(error))


def coefficient_C_prime(model: PotentialModel, state: InitialState, k,
                        ctx: Optional[ArithmeticContext] = None) -> SpectralCoefficient:
    """C'(k) = ∫ u(k,r) ψ₀*(r) dr；实初态时与 C(k) 相同。"""
    if state.is_real:
        return coefficient_C(model, state, k, ctx)
    return coefficient_C(model, state, k, ctx, conjugate=True)


def decay_check_C(model: PotentialModel, state: InitialState,
                  real_range: Tuple[float, float] = (5.0, 50.0),
                  imag_range: Tuple[float, float] = (0.0, 10.0),
                  samples: int = 46) -> DecayCheckReport:
    """诊断 C(k) 的增长与衰减：实轴幂律指数与虚轴高斯增长率。"""
    real_k = np.geomspace(real_range[0], real_range[1], samples)
    imag_y = np.linspace(imag_range[0], imag_range[1], samples)
    batch = coefficients_batch(model, state, np.concatenate([real_k, 1j * imag_y]))
    real_c = np.abs(batch.C[:samples])
    imag_c = np.abs(batch.C[samples:])

    if np.all(real_c == 0) and np.all(imag_c == 0):
        logger.info("C(k) 恒为零")
        return DecayCheckReport(-math.inf, 0.0, 0.0, True,
                                {'k': real_k.tolist(), 'abs_C': real_c.tolist()})

    tiny = np.finfo(float).tiny
    exponent, _ = np.polyfit(np.log(real_k), np.log(np.maximum(real_c, tiny)), 1)
    growth, _ = np.polyfit(imag_y ** 2, np.log(np.maximum(imag_c, tiny)), 1)
    c2, _ = state.tail
    bound = 1.0 / (4.0 * c2) if c2 > 0 else math.inf
    ok = bool(growth <= bound * 1.05 + 1e-3)
    logger.info(f"C(k) 诊断：实轴指数 {exponent:.3f}，虚轴增长率 {growth:.4f}（上界 {bound:.4f}）")
    return DecayCheckReport(float(exponent), float(growth), float(bound), ok, {
        'k': real_k.tolist(),
        'abs_C': real_c.tolist(),
        'y': imag_y.tolist(),
        'abs_C_imag': imag_c.tolist(),
    })


def _spectral_weight(model: PotentialModel, state: InitialState, ks: np.ndarray,
                     r: Optional[float]) -> np.ndarray:
    # (2/π) k² C(k) u(k,r) / |f(k,0)|²，r=None 时把 u 换成 C'(k)
    free = _is_free_gaussian(model, state)
    batch = coefficients_batch(model, state, ks, r_values=() if r is None else [r],
                               with_jost=not free)
    jost_sq = np.ones(ks.size) if free else np.abs(batch.f0) ** 2
    partner = batch.C if r is None else batch.u[0]
    return 2.0 / np.pi * ks * ks * batch.C * partner / jost_sq


def psi_direct(model: PotentialModel, state: InitialState, r: float, t: float,
               k_max: float, rel_tol: float = 1e-10) -> Tuple[complex, float]:
    """谱积分 ψ(r,t) = (2/π)∫₀^∞ k² C(k) e^{-ik²t} u(k,r)/(f(k,0)f(-k,0)) dk，
    截断在 k_max，初始分段按相位 k²t + kr 划分。返回 (值, 误差估计)。"""
    if t < 0:
        raise ValueError(f"t 必须非负，当前为 {t}")
    if r == 0:
        return 0j, 0.0

    def integrand(ks):
        ks = np.asarray(ks, dtype=float)
        return _spectral_weight(model, state, ks.astype(complex), r) * np.exp(-1j * ks * ks * t)

    edges = phase_edges(0.0, k_max, lambda k: 2.0 * k * t + r + 1.0)
    value, error = gauss_panels(integrand, edges, rel_tol=rel_tol)
    logger.debug(f"ψ_direct(r={r}, t={t}) = {value:.10e}，误差 {error:.2e}")
    return value, error


def survival_amplitude_direct(model: PotentialModel, state: InitialState, t: float,
                              k_max: float, rel_tol: float = 1e-10) -> Tuple[complex, float]:
    """A(t) = ⟨ψ₀|ψ(t)⟩ = (2/π)∫₀^∞ k² C'(k)C(k) e^{-ik²t}/|f(k,0)|² dk（实初态）。"""
    if t < 0:
        raise ValueError(f"t 必须非负，当前为 {t}")

    def integrand(ks):
        ks = np.asarray(ks, dtype=float)
        return _spectral_weight(model, state, ks.astype(complex), None) * np.exp(-1j * ks * ks * t)

    edges = phase_edges(0.0, k_max, lambda k: 2.0 * k * t + 1.0)
    return gauss_panels(integrand, edges, rel_tol=rel_tol)


def survival_direct(model: PotentialModel, state: InitialState, t: float,
                    k_max: float, rel_tol: float = 1e-10) -> Tuple[float, float]:
    """S(t) = |A(t)|²，返回 (值, 误差估计)。"""
    amplitude, error = survival_amplitude_direct(model, state, t, k_max, rel_tol)
    return abs(amplitude) ** 2, 2.0 * abs(amplitude) * error
