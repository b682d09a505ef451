# src/services/evolution.py
"""由极点、留数与 Moshinsky 核组装 ψ(r,t)、P(t)、S(t) 以及三条求和规则。

ψ(r,t) = Σ_n a_n(r) Σ_γ M(k_n, r, γ+it)，γ ∈ {α, iα, -iα}；
S(t) = |Σ_n b_n Σ_γ M(k_n, 0, γ+it)|²。

双精度下每一项写成 exp(log a_n + log E) 的形式再用 math.fsum 求和；
precision > 15 时全部在 mpmath 中计算。
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from src.models.config import ExpansionConfig
from src.models.pole import Pole
from src.models.result import EvolutionResult, SumRuleDefects
from src.models.state import InitialState
from src.services.asymptotics import slowest_resonance
from src.services.jost import PotentialModel
from src.services.moshinsky import (gamma_summed_split, gamma_triple, leading_algebraic_tail,
                                     mosh_mp_split)
from src.services.poles import (ResidueTable, attach_coefficients, aux_poles, check_separation,
                                find_resonances, mirror_poles)
from src.services.spectral import coefficient_C
from src.utils.errors import DegeneratePoleError, DomainError, ToleranceError, ZeroEnergyResonanceError
from src.utils.parallel import ordered_map

logger = logging.getLogger(__name__)

# 每次重试 α 放大 1%
ALPHA_NUDGE = 1.01
# 截断估计取 |k_n| ∈ [0.9 K_max, K_max] 的壳层
SHELL_FRACTION = 0.9
MIN_P_POINTS = 64
# 舍入下限超过 |和| 的这一比例时记录
ROUNDING_FRACTION = 1e-2


def log_time_grid(t_min: float, t_max: float, per_decade: int = 200) -> np.ndarray:
    """对数等距时间网格，每十倍 per_decade 个点"""
    if not (0 < t_min < t_max):
        raise DomainError(f"时间范围必须满足 0 < t_min < t_max，当前为 [{t_min}, {t_max}]")
    decades = math.log10(t_max / t_min)
    count = max(2, int(math.ceil(decades * per_decade)) + 1)
    return np.geomspace(t_min, t_max, count)


class PoleExpansion:
    """一个 (模型, 初态, α, K_max) 的完整极点展开。

    build() 找全部极点并计算留数；若辅助极点与共振过近，α 放大 1% 后重来。
    """

    def __init__(self, model: PotentialModel, state: InitialState, cfg: ExpansionConfig,
                 resonances: Optional[List[Pole]] = None):
        if cfg.ctx.dps != model.ctx.dps:
            logger.warning(f"模型精度 {model.ctx.dps} 位与配置精度 {cfg.ctx.dps} 位不一致，以模型为准")
        self.model = model
        self.state = state
        self.cfg = cfg
        self.ctx = model.ctx
        self.resonances = resonances
        self.alpha: Optional[float] = None
        self.aux: List[Pole] = []
        self.poles: List[Pole] = []
        self.table: Optional[ResidueTable] = None
        self._survival_table: Optional[ResidueTable] = None
        self._c0 = None

    # ------------------------------------------------------------ 构建

    def build(self) -> "PoleExpansion":
        if self.resonances is None:
            self.resonances = find_resonances(self.model, self.cfg.k_max, self.cfg.cell_size,
                                              workers=self.cfg.workers)
        if self.model.has_resonances and not self.resonances:
            logger.warning(f"K_max={self.cfg.k_max} 内没有找到共振极点")

        retrying = Retrying(stop=stop_after_attempt(self.cfg.max_alpha_nudges + 1),
                            retry=retry_if_exception_type(DegeneratePoleError), reraise=True)
        for attempt in retrying:
            with attempt:
                number = attempt.retry_state.attempt_number
                alpha = self.cfg.alpha * ALPHA_NUDGE ** (number - 1)
                if number > 1:
                    logger.warning(f"极点近简并，第 {number - 1} 次调整 α 为 {alpha:.6f}")
                self._assemble(alpha)
        return self

    def _assemble(self, alpha: float) -> None:
        aux = aux_poles(alpha, self.cfg.k_max, self.ctx, self.cfg.workers)
        loose = [p for p in aux if p.residual > self.cfg.zero_tol]
        if loose:
            worst = max(p.residual for p in loose)
            raise ToleranceError(f"{len(loose)} 个辅助极点未满足 |h_α| 的零点判据", worst)
        mirrors = mirror_poles(self.resonances)
        check_separation(aux + self.resonances + mirrors, self.cfg.degenerate_tol)

        self.alpha = alpha
        self.aux = aux
        self.poles = sorted(aux + self.resonances, key=Pole.sort_key)
        attach_coefficients(self.poles, self.model, self.state, self.cfg.coefficient_method,
                            self.cfg.workers)
        self.table = ResidueTable(self.poles, self.model, self.state, alpha)
        self._survival_table = None
        logger.info(f"极点展开就绪：α={alpha:.6f}，辅助极点 {len(aux)} 个，"
                    f"共振 {len(self.resonances)} 个，ψ 求和项 {3 * len(self.poles)} 个")

    def survival_table(self) -> ResidueTable:
        """生存振幅的极点集合：辅助极点、共振与镜像零点。"""
        if self._survival_table is None:
            self._require_built()
            mirrors = mirror_poles(self.resonances)
            attach_coefficients(mirrors, self.model, self.state, self.cfg.coefficient_method,
                                self.cfg.workers)
            poles = sorted(self.poles + mirrors, key=Pole.sort_key)
            self._survival_table = ResidueTable(poles, self.model, self.state, self.alpha,
                                                survival=True)
        return self._survival_table

    def _require_built(self) -> None:
        if self.table is None:
            raise RuntimeError("极点展开尚未构建，请先调用 build()")

    @property
    def k0(self) -> Optional[Pole]:
        return slowest_resonance(self.resonances or [])

    # ------------------------------------------------------------ 求和

    def _terms(self, table: ResidueTable, r: float, t: float) -> np.ndarray:
        log_a = table.log_values(r)
        coef, log_e, bounded = gamma_summed_split(table.k, r, t, self.alpha, table.aux)
        terms = np.zeros(table.k.shape, dtype=complex)
        active = coef != 0
        if np.any(active):
            exponential = np.zeros(coef.shape, dtype=complex)
            exponent = (log_a[None, :] + log_e)[active]
            with np.errstate(over="ignore", invalid="ignore"):
                exponential[active] = coef[active] * np.exp(exponent)
            terms += exponential.sum(axis=0)
        nonzero = (bounded != 0) & np.isfinite(log_a.real)
        terms[nonzero] += np.exp(log_a[nonzero] + np.log(bounded[nonzero]))
        return terms

    def _terms_mp(self, table: ResidueTable, r: float, t: float) -> List[object]:
        mp = self.ctx.mp
        terms = []
        for pole, weight, aux in zip(table.poles, table.values(r), table.aux):
            parts = [mosh_mp_split(pole.k, r, gamma + 1j * t, self.ctx)
                     for gamma in gamma_triple(self.alpha)]
            coefs = [part[0] for part in parts]
            if aux:
                reference = coefs[0] if coefs[0] in (coefs[1], coefs[2]) else coefs[1]
                coefs = [c - reference for c in coefs]
            kernel = mp.fsum(part[2] for part in parts)
            kernel += mp.fsum(c * mp.exp(part[1]) for c, part in zip(coefs, parts) if c != 0)
            terms.append(weight * kernel)
        return terms

    def _sum(self, table: ResidueTable, r: float, t: float) -> Tuple[complex, float]:
        """极点和与误差估计（壳层截断加舍入下限）。

        Σ a_n/k_n 理论上为零；有限精度下的残差乘以 leading_algebraic_tail 就是
        和式里的 t^{-1/2} 漂移，这里把它减掉。
        """
        shell = table.modulus >= SHELL_FRACTION * self.cfg.k_max
        drift = table.moment(r) * leading_algebraic_tail(t, self.alpha)
        if self.ctx.extended:
            mp = self.ctx.mp
            terms = self._terms_mp(table, r, t)
            total = complex(mp.fsum(terms) - drift)
            magnitudes = [float(abs(term)) for term in terms]
            truncation = math.fsum(m for m, edge in zip(magnitudes, shell) if edge)
            floor = 10.0 ** -self.ctx.dps * math.fsum(magnitudes)
        else:
            terms = self._terms(table, r, t)
            if not np.all(np.isfinite(terms)):
                bad = int(np.count_nonzero(~np.isfinite(terms)))
                raise ToleranceError(f"(r={r}, t={t}) 处有 {bad} 个求和项溢出，请提高精度")
            ordered = terms[np.argsort(-np.abs(terms), kind="stable")]
            total = complex(math.fsum(ordered.real), math.fsum(ordered.imag)) - complex(drift)
            magnitudes = np.abs(terms)
            truncation = float(np.sum(magnitudes[shell]))
            floor = 10.0 ** -self.ctx.dps * float(np.sum(magnitudes))
        if floor > ROUNDING_FRACTION * abs(total):
            logger.debug(f"(r={r}, t={t}) 舍入下限 {floor:.2e} 接近 |和| {abs(total):.2e}")
        return total, truncation + floor

    def psi(self, r: float, t: float) -> Tuple[complex, float]:
        """ψ(r,t) 与误差估计（壳层截断加舍入下限）"""
        self._require_built()
        if t < 0 or r < 0:
            raise DomainError(f"r 与 t 必须非负，当前 r={r}, t={t}")
        value, truncation = self._sum(self.table, r, t)
        if truncation > self.cfg.truncation_tol * max(abs(value), 1e-300):
            logger.debug(f"ψ(r={r}, t={t}) 截断估计 {truncation:.2e} 超过容差")
        return value, truncation

    def survival(self, t: float) -> Tuple[float, float]:
        """S(t) 与截断估计"""
        if t < 0:
            raise DomainError(f"t 必须非负，当前为 {t}")
        amplitude, truncation = self._sum(self.survival_table(), 0.0, t)
        return abs(amplitude) ** 2, 2.0 * abs(amplitude) * truncation

    def evolve(self, r_grid: Sequence[float], t_grid: Sequence[float],
               with_sum_rules: bool = True) -> EvolutionResult:
        self._require_built()
        r_grid = [float(r) for r in r_grid]
        t_grid = [float(t) for t in t_grid]
        # 留数与 Σa_n/k_n 按 r 缓存，先在当前线程里算好
        for r in r_grid:
            self.table.log_values(r)
            self.table.moment(r)
        pairs = [(r, t) for r in r_grid for t in t_grid]
        values = ordered_map(lambda rt: self.psi(*rt), pairs, self.cfg.workers, label="(r,t) 采样")
        psi = np.array([v for v, _ in values], dtype=complex).reshape(len(r_grid), len(t_grid))
        truncation = np.array([e for _, e in values]).reshape(len(r_grid), len(t_grid))
        scale = max(float(np.max(np.abs(psi))) if psi.size else 0.0, 1e-300)
        flagged = int(np.count_nonzero(truncation > self.cfg.truncation_tol * scale))
        if flagged:
            logger.warning(f"{flagged} 个采样点的截断估计超过容差 {self.cfg.truncation_tol:.1e}")
        rules = [sum_rule_report(self.cfg, self, r) for r in r_grid if r > 0] if with_sum_rules else []
        return EvolutionResult(r_grid, t_grid, psi, truncation, rules, self.alpha, self.cfg.k_max)

    # ------------------------------------------------------------ 求和规则

    def coefficient_at_zero(self):
        if self._c0 is None:
            self._c0 = coefficient_C(self.model, self.state, 0, self.ctx).C
        return self._c0

    def sum_rules(self, r: float) -> SumRuleDefects:
        """Σ a_n/k_n = 0，-Σ a_n/k_n² = C(0)f(0,r)/(3f(0,0))，-Σ a_n/k_n³ = C(0)Q'(0)/3。"""
        self._require_built()
        mp = self.ctx.mp
        zero = mp.mpc(0)
        f00 = self.model.f0(zero)
        if abs(f00) == 0:
            raise ZeroEnergyResonanceError("f(0,0)=0，求和规则的右端无定义")
        c0 = self.coefficient_at_zero()
        f0r = self.model.f(zero, r)
        # Q(k) = e^{-ikr} f(-k,r)/f(-k,0)
        q_slope = -1j * r * f0r / f00 + self.model.dk_ratio(zero, r)
        targets = (mp.mpc(0), c0 * f0r / (3 * f00), c0 * q_slope / 3)

        values = self.table.values(r)
        partial, largest = [], []
        for power, sign in ((1, 1), (2, -1), (3, -1)):
            terms = [sign * a / pole.k ** power for a, pole in zip(values, self.table.poles)]
            partial.append(complex(mp.fsum(terms)))
            largest.append(float(max((abs(term) for term in terms), default=0.0)))
        return SumRuleDefects(r, self.cfg.k_max, tuple(partial),
                              tuple(complex(t) for t in targets), tuple(largest))


def psi_expansion(cfg: ExpansionConfig, expansion: PoleExpansion, r: float, t: float) -> complex:
    """ψ(r,t) 的极点展开值；壳层截断估计超过 cfg.truncation_tol 时记录警告。"""
    value, truncation = expansion.psi(r, t)
    if truncation > cfg.truncation_tol * max(abs(value), 1e-300):
        logger.warning(f"ψ(r={r}, t={t}) 截断误差主导：壳层估计 {truncation:.2e}")
    return value


def survival_S(cfg: ExpansionConfig, expansion: PoleExpansion, t: float) -> float:
    value, truncation = expansion.survival(t)
    if truncation > cfg.truncation_tol * max(value, 1e-300):
        logger.warning(f"S(t={t}) 截断误差主导：壳层估计 {truncation:.2e}")
    return value


def sum_rule_report(cfg: ExpansionConfig, expansion: PoleExpansion, r: float) -> SumRuleDefects:
    report = expansion.sum_rules(r)
    worst = max(report.relative_defects)
    if worst > cfg.sum_rule_tol:
        logger.warning(f"r={r} 处求和规则相对缺陷 {worst:.2e} 超过 {cfg.sum_rule_tol:.1e}")
    return report


def non_escape_P(cfg: ExpansionConfig, result: EvolutionResult, rho: float, t: float) -> float:
    """P(t) = ∫₀^ρ |ψ(r,t)|² dr，要求 r 网格在 [0, ρ] 内至少有 64 个点。"""
    if rho <= 0:
        raise DomainError(f"ρ 必须为正，当前为 {rho}")
    matches = np.nonzero(np.isclose(result.t_grid, t, rtol=1e-12, atol=0.0))[0]
    if matches.size == 0:
        raise DomainError(f"结果中没有 t={t} 的采样")
    inside = result.r_grid <= rho * (1 + 1e-12)
    if np.count_nonzero(inside) < MIN_P_POINTS or result.r_grid.min() > 0 or \
            result.r_grid[inside].max() < rho * (1 - 1e-9):
        raise DomainError(f"r 网格在 [0, {rho}] 上的采样不足 {MIN_P_POINTS} 个点")
    r = result.r_grid[inside]
    order = np.argsort(r)
    density = np.abs(result.psi[inside, matches[0]]) ** 2
    value = float(simpson(density[order], x=r[order]))
    if value > 1 + 10 * cfg.truncation_tol:
        logger.warning(f"P(t={t}) = {value:.8f} 超过 1")
    return value
