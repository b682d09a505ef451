# evolution_test.py
import dataclasses
import logging
import random

import numpy as np
import pytest
from scipy.integrate import simpson

from src.models.config import ExpansionConfig
from src.models.state import c0_free_state, trapped_gaussian
from src.services.asymptotics import (fit_log_slope, fit_power_law, psi_inf, report, sampled_crossover,
                                      survival_coefficient)
from src.services.jost import EckartModel, FreeModel
from src.services.poles import ResidueTable, find_resonances, residue_factor
from src.services.evolution import (MIN_P_POINTS, PoleExpansion, log_time_grid, non_escape_P, psi_expansion,
                                    sum_rule_report, survival_S)
from src.services.spectral import psi_direct, survival_direct
from src.utils.errors import DomainError

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@pytest.fixture(scope="module")
def state():
    return trapped_gaussian(1.0)


@pytest.fixture(scope="module")
def cfg():
    return ExpansionConfig(alpha=1.25, k_max=16.0)


@pytest.fixture(scope="module")
def free_expansion(state, cfg):
    return PoleExpansion(FreeModel(), state, cfg).build()


def test_log_time_grid():
    grid = log_time_grid(0.01, 100.0, per_decade=200)
    assert abs(len(grid) - 801) <= 1
    assert grid[0] == pytest.approx(0.01)
    assert grid[-1] == pytest.approx(100.0)
    steps = np.diff(np.log(grid))
    assert np.allclose(steps, steps[0], rtol=1e-9)
    assert steps[0] == pytest.approx(np.log(10) / 200, rel=1e-2)
    with pytest.raises(DomainError):
        log_time_grid(0.0, 1.0)
    with pytest.raises(DomainError):
        log_time_grid(2.0, 1.0)


def test_free_expansion_has_only_aux_poles(free_expansion):
    assert free_expansion.resonances == []
    assert free_expansion.k0 is None
    assert free_expansion.alpha == pytest.approx(1.25)
    assert len(free_expansion.poles) == len(free_expansion.aux)
    assert all(p.modulus <= 16.0 for p in free_expansion.poles)


def test_free_expansion_matches_closed_form(free_expansion, state):
    """自由模型的极点展开与奇延拓闭式一致"""
    for t in (0.0, 1.0, 10.0):
        for r in (0.5, 1.5):
            value, truncation = free_expansion.psi(r, t)
            expected = complex(state.free_evolved(np.array([r]), t)[0])
            logger.info(f"ψ({r}, {t}) = {value}，闭式 {expected}，截断估计 {truncation:.1e}")
            assert abs(value - expected) < 1e-7


def test_expansion_at_t_equal_alpha(free_expansion, state):
    """t = α 时 γ = -iα 的项落在 β = 0 上"""
    value, _ = free_expansion.psi(0.5, 1.25)
    expected = complex(state.free_evolved(np.array([0.5]), 1.25)[0])
    assert abs(value - expected) < 1e-7


def test_expansion_vanishes_at_origin(free_expansion):
    for t in (0.5, 3.0):
        value, _ = free_expansion.psi(0.0, t)
        assert abs(value) < 1e-7


def test_psi_expansion_wrapper(free_expansion, cfg, state):
    value = psi_expansion(cfg, free_expansion, 0.8, 2.0)
    assert value == pytest.approx(complex(state.free_evolved(np.array([0.8]), 2.0)[0]), abs=1e-7)
    with pytest.raises(DomainError):
        free_expansion.psi(0.5, -1.0)


def test_survival_matches_free_overlap(free_expansion, cfg, state):
    for t in (0.0, 1.0, 5.0):
        value = survival_S(cfg, free_expansion, t)
        assert value == pytest.approx(abs(state.free_overlap(t)) ** 2, rel=1e-6, abs=1e-12)


def test_sum_rules_hold_for_free_model(free_expansion, cfg):
    """三条求和规则：Σa/k = 0，-Σa/k² = C(0)/3，-Σa/k³ = 0（自由模型 f ≡ e^{-ikr}）"""
    report = free_expansion.sum_rules(0.5)
    c0 = complex(free_expansion.coefficient_at_zero())
    assert report.targets[1] == pytest.approx(c0 / 3, rel=1e-14)
    assert abs(report.targets[2]) < 1e-14
    logger.info(f"求和规则相对缺陷: {report.relative_defects}")
    assert max(report.relative_defects) < 1e-6
    assert sum_rule_report(cfg, free_expansion, 0.5).relative_defects == pytest.approx(report.relative_defects)


def test_sum_is_permutation_invariant(free_expansion):
    """求和结果与极点顺序无关"""
    table = free_expansion.table
    order = list(range(len(table.poles)))
    random.Random(11).shuffle(order)
    shuffled = ResidueTable([table.poles[i] for i in order], table.model, table.state, table.alpha,
                            weights=[table.weights[i] for i in order])
    for r, t in ((0.5, 0.3), (1.0, 7.0)):
        original, _ = free_expansion._sum(table, r, t)
        permuted, _ = free_expansion._sum(shuffled, r, t)
        assert permuted == pytest.approx(original, rel=1e-13, abs=1e-300)


def test_evolve_grid_and_non_escape(free_expansion, cfg, state):
    r_grid = np.linspace(0.0, 1.0, MIN_P_POINTS + 1)
    result = free_expansion.evolve(r_grid, [1.0, 4.0], with_sum_rules=False)
    assert result.psi.shape == (len(r_grid), 2)
    expected = np.array([state.free_evolved(r_grid, t) for t in (1.0, 4.0)]).T
    assert np.max(np.abs(result.psi - expected)) < 1e-7

    value = non_escape_P(cfg, result, 1.0, 1.0)
    reference = simpson(np.abs(state.free_evolved(r_grid, 1.0)) ** 2, x=r_grid)
    assert value == pytest.approx(reference, rel=1e-6)

    frame = result.to_frame()
    assert list(frame.columns) == ['t', 'r', 're_psi', 'im_psi', 'abs_psi', 'truncation']
    assert len(frame) == 2 * len(r_grid)


def test_non_escape_rejects_sparse_grid(free_expansion, cfg):
    result = free_expansion.evolve([0.0, 0.5, 1.0], [1.0], with_sum_rules=False)
    with pytest.raises(DomainError):
        non_escape_P(cfg, result, 1.0, 1.0)
    dense = free_expansion.evolve(np.linspace(0.0, 1.0, 70), [1.0], with_sum_rules=False)
    with pytest.raises(DomainError):
        non_escape_P(cfg, dense, 1.0, 2.0)


def test_evolve_reports_sum_rules(free_expansion):
    result = free_expansion.evolve([0.0, 0.5], [1.0])
    assert [rule.r for rule in result.sum_rules] == [0.5]


def test_unbuilt_expansion_raises(state, cfg):
    with pytest.raises(RuntimeError):
        PoleExpansion(FreeModel(), state, cfg).psi(0.5, 1.0)


def test_free_late_time_law(free_expansion, state):
    """|ψ|·t^{3/2} → |ψ∞|，S·t³ → |C(0)|⁴/(4π)"""
    model = free_expansion.model
    target = abs(complex(psi_inf(model, state, 0.5)))
    for t in (1e3, 1e4):
        value, _ = free_expansion.psi(0.5, t)
        assert abs(value) * t ** 1.5 == pytest.approx(target, rel=1e-3)
    assert free_expansion.survival(1e4)[0] * 1e12 == pytest.approx(survival_coefficient(model, state), rel=1e-3)


def test_first_moment_drift_is_removed(free_expansion, state):
    """人为使 Σa_n/k_n 偏离零：和式中的 t^{-1/2} 漂移被扣除，晚期仍按 t^{-3/2} 衰减"""
    table = free_expansion.table
    mp = table.model.ctx.mp
    pole = dataclasses.replace(table.poles[0], extras=dict(table.poles[0].extras))
    eps = 1e-5
    weight = eps * mp.mpc(pole.k) / residue_factor(pole, table.model, 0.5)
    shifted = ResidueTable(table.poles + [pole], table.model, table.state, table.alpha,
                           weights=list(table.weights) + [weight])
    assert complex(shifted.moment(0.5) - table.moment(0.5)) == pytest.approx(eps, rel=1e-8)

    t = 1e4
    expected = complex(state.free_evolved(np.array([0.5]), t)[0])
    value, _ = free_expansion._sum(shifted, 0.5, t)
    logger.info(f"t={t}: 偏移后 {value}，闭式 {expected}")
    assert abs(value - expected) < 1e-3 * abs(expected)


def test_c0_state_survival_decays_faster(cfg):
    """C(0)=0 的初态：S(t) 的拟合幂次不大于 -4"""
    special = c0_free_state()
    expansion = PoleExpansion(FreeModel(), special, cfg).build()
    t = np.geomspace(50.0, 500.0, 12)
    values = np.array([expansion.survival(float(x))[0] for x in t])
    exact = np.array([abs(special.free_overlap(float(x))) ** 2 for x in t])
    assert np.allclose(values, exact, rtol=1e-3, atol=0.0)
    exponent = fit_power_law(t, values)
    logger.info(f"C(0)=0 初态的 S(t) 幂次 {exponent:.3f}")
    assert exponent <= -4.0


@pytest.fixture(scope="module")
def eckart_expansion(state):
    model = EckartModel(49.25, 1.0)
    return PoleExpansion(model, state, ExpansionConfig(alpha=1.25, k_max=40.0)).build()


@pytest.mark.slow
def test_eckart_expansion_matches_spectral_integral(eckart_expansion, state):
    """Eckart A=49.25, ρ=1：t=3, r=0.5 处极点展开与谱积分的相对差小于 1e-4"""
    assert eckart_expansion.k0 is not None
    value, _ = eckart_expansion.psi(0.5, 3.0)
    reference, _ = psi_direct(eckart_expansion.model, state, 0.5, 3.0, k_max=40.0)
    logger.info(f"极点展开 {value}，谱积分 {reference}")
    assert abs(value - reference) < 1e-4 * abs(reference)
    rules = eckart_expansion.sum_rules(0.5)
    assert max(rules.relative_defects) < eckart_expansion.cfg.sum_rule_tol


@pytest.mark.slow
def test_eckart_survival_matches_quadrature(eckart_expansion, state):
    """生存概率的极点集合包含镜像极点，与谱积分一致"""
    for t in (1.0, 3.0):
        value, _ = eckart_precise.survival(t)
        reference, _ = survival_direct(eckart_expansion.model, state, t, k_max=40.0)
        logger.info(f"S({t}) 极点展开 {value}，谱积分 {reference}")
        assert value == pytest.approx(reference, rel=1e-4)


@pytest.fixture(scope="module")
def eckart_precise(state):
    """t ≫ t_alg 时 |ψ| 低于双精度的舍入下限，晚期测试用 30 位精度"""
    cfg = ExpansionConfig(alpha=1.25, k_max=40.0, precision=30, workers=4)
    model = EckartModel(49.25, 1.0, cfg.ctx)
    return PoleExpansion(model, state, cfg).build()


@pytest.fixture(scope="module")
def eckart_report(eckart_expansion, state):
    result = report(eckart_expansion.model, state, 0.5, eckart_expansion.resonances)
    assert result.t_alg is not None
    logger.info(f"Eckart r=0.5: t_alg={result.t_alg:.4f}, |ψ∞|={abs(result.psi_inf):.4e}")
    return result


@pytest.mark.slow
def test_eckart_exponential_slope(eckart_expansion, eckart_report):
    """t ∈ [t_alg/20, t_alg/2]（一个十倍区间）上 log|ψ| 的斜率等于 Im k₀²，相对误差小于 1%"""
    k0 = eckart_expansion.k0.value
    t = np.geomspace(eckart_report.t_alg / 20, eckart_report.t_alg / 2, 30)
    magnitudes = [abs(eckart_expansion.psi(0.5, float(x))[0]) for x in t]
    slope = fit_log_slope(t, magnitudes)
    logger.info(f"拟合斜率 {slope:.6f}，Im k₀² = {(k0 * k0).imag:.6f}")
    assert slope == pytest.approx((k0 * k0).imag, rel=1e-2)


@pytest.mark.slow
def test_eckart_late_time_law(eckart_precise, eckart_report):
    """t > 3·t_alg 时 |ψ|·t^{3/2} 与 |ψ∞| 相差不到 2%"""
    target = abs(eckart_report.psi_inf)
    for factor in (3.0, 5.0, 10.0):
        t = factor * eckart_report.t_alg
        value, error = eckart_precise.psi(0.5, t)
        logger.info(f"t={t:.2f}: |ψ|t^1.5 = {abs(value) * t ** 1.5:.6e}，误差估计 {error:.1e}")
        assert abs(value) * t ** 1.5 == pytest.approx(target, rel=2e-2)


@pytest.mark.slow
def test_eckart_sampled_crossover(eckart_expansion, eckart_report):
    """由采样的 |ψ| 得到的经验交点与 t_alg 相差不到 2 倍"""
    t_grid = log_time_grid(0.5, 10 * eckart_report.t_alg, per_decade=40)
    result = eckart_expansion.evolve([0.5], t_grid, with_sum_rules=False)
    window = (eckart_report.t_alg / 8, eckart_report.t_alg / 2)
    found = sampled_crossover(result.t_grid, np.abs(result.psi[0]), abs(eckart_report.psi_inf), window)
    logger.info(f"经验交点 {found}，t_alg {eckart_report.t_alg}")
    assert found is not None
    assert 0.5 < found / eckart_report.t_alg < 2.0


@pytest.mark.slow
def test_eckart_survival_asymptote(eckart_precise, eckart_report, state):
    """t = 10·t_alg 时 S·t³ 与 |C(0)|⁴/(4π f(0,0)⁴) 相差不到 5%"""
    t = 10 * eckart_report.t_alg
    value, _ = eckart_precise.survival(t)
    expected = survival_coefficient(eckart_precise.model, state)
    logger.info(f"S·t³ = {value * t ** 3:.6e}，极限 {expected:.6e}")
    assert value * t ** 3 == pytest.approx(expected, rel=5e-2)


@pytest.mark.slow
def test_sum_rules_converge_with_k_max(state):
    """K_max = 40, 70, 100：三条求和规则的缺陷逐步减小，最终相对缺陷小于 10⁻³"""
    model = EckartModel(49.25, 1.0)
    resonances = find_resonances(model, 100.0)
    history = []
    for k_max in (40.0, 70.0, 100.0):
        kept = [p for p in resonances if p.modulus <= k_max]
        expansion = PoleExpansion(model, state, ExpansionConfig(alpha=1.25, k_max=k_max),
                                  resonances=kept).build()
        rules = expansion.sum_rules(0.5)
        logger.info(f"K_max={k_max}: 相对缺陷 {rules.relative_defects}")
        history.append(rules)
    for earlier, later in zip(history, history[1:]):
        for before, after, scale in zip(earlier.defects, later.defects, later.largest_terms):
            assert after <= before or after < 1e-12 * scale
    assert max(history[-1].relative_defects) < 1e-3
