# asymptotics_test.py
import cmath
import logging
import math

import numpy as np
import pytest

from src.models.pole import Pole, PoleKind
from src.models.state import c0_free_state, trapped_gaussian
from src.services.asymptotics import (coefficient_at_zero, decay_rate, empirical_crossover, fit_log_slope,
                                      fit_power_law, non_escape_coefficient, psi_inf, ratio_slope,
                                      reference_curves, report, sampled_crossover, slowest_resonance,
                                      survival_coefficient, t_alg)
from src.services.jost import EckartModel, FreeModel
from src.services.poles import find_resonances
from src.utils.errors import DomainError, NoCrossoverError

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

FREE_C0 = math.pi ** 0.25 / 2
K0 = 2 - 0.1j
# Eckart A=49.25, ρ=1 的最慢衰减共振
ECKART_K0 = 3.7105 - 0.2495j


@pytest.fixture(scope="module")
def state():
    return trapped_gaussian(1.0)


def test_free_psi_inf_closed_form(state):
    """自由模型：ψ∞(r) = -C(0)·ir/(2√(iπ))"""
    model = FreeModel()
    for r in (0.5, 1.0, 2.0):
        value = complex(psi_inf(model, state, r))
        expected = -FREE_C0 * 1j * r / (2 * cmath.sqrt(1j * math.pi))
        assert value == pytest.approx(expected, rel=1e-12)


def test_free_psi_inf_matches_late_time_wavefunction(state):
    model = FreeModel()
    t = 1e5
    for r in (0.5, 1.5):
        late = complex(state.free_evolved(np.array([r]), t)[0]) * t ** 1.5
        assert late == pytest.approx(complex(psi_inf(model, state, r)), rel=1e-4)


def test_analytic_slope_matches_finite_difference():
    model = EckartModel(49.25, 1.0)
    for r in (0.3, 1.0):
        analytic = complex(ratio_slope(model, r, "analytic"))
        fd = complex(ratio_slope(model, r, "fd"))
        logger.info(f"r={r}: 解析 {analytic}，差分 {fd}")
        assert fd == pytest.approx(analytic, rel=1e-8)
    with pytest.raises(ValueError):
        ratio_slope(model, 0.5, "spline")


def test_psi_inf_rejects_negative_r(state):
    with pytest.raises(DomainError):
        psi_inf(FreeModel(), state, -0.1)


def test_psi_inf_vanishes_when_c0_is_zero():
    model = FreeModel()
    special = c0_free_state()
    assert abs(complex(coefficient_at_zero(model, special))) < 1e-12
    assert complex(psi_inf(model, special, 1.0)) == 0


def test_free_survival_coefficient(state):
    """S(t)·t³ → |C(0)|⁴/(4π)"""
    model = FreeModel()
    value = survival_coefficient(model, state)
    assert value == pytest.approx(FREE_C0 ** 4 / (4 * math.pi), rel=1e-12)
    t = 1e5
    assert abs(state.free_overlap(t)) ** 2 * t ** 3 == pytest.approx(value, rel=1e-4)


def test_free_non_escape_coefficient(state):
    """P(t)·t³ → |C(0)|²ρ³/(12π)"""
    value = non_escape_coefficient(FreeModel(), state, 1.0)
    assert value == pytest.approx(FREE_C0 ** 2 / (12 * math.pi), rel=1e-10)
    with pytest.raises(DomainError):
        non_escape_coefficient(FreeModel(), state, 0.0)


def test_slowest_resonance_and_decay_rate():
    poles = [
        Pole(3 - 0.2j, PoleKind.RESONANCE, 3 - 0.2j),
        Pole(2 - 0.1j, PoleKind.RESONANCE, 2 - 0.1j),
        Pole(-2 - 0.1j, PoleKind.MIRROR, -2 - 0.1j),
        Pole(1 - 1j, PoleKind.AUX1, 1 - 1j),
    ]
    assert slowest_resonance(poles).value == pytest.approx(2 - 0.1j)
    assert slowest_resonance(poles[2:]) is None
    assert decay_rate(K0) == pytest.approx(0.4)


def test_t_alg_solves_balance_equation():
    model = FreeModel()
    lam = decay_rate(K0)
    amplitude, algebraic = 1.0, 0.1
    value = t_alg(model, None, 0.5, K0, psi_inf_value=algebraic, amplitude=amplitude)
    assert value > 1.5 / lam
    assert amplitude * math.exp(-lam * value) == pytest.approx(algebraic * value ** -1.5, rel=1e-10)

    later = t_alg(model, None, 0.5, K0, psi_inf_value=algebraic, amplitude=10.0)
    assert later > value


def test_t_alg_without_crossover():
    model = FreeModel()
    with pytest.raises(NoCrossoverError):
        t_alg(model, None, 0.5, K0, psi_inf_value=0.0, amplitude=1.0)
    with pytest.raises(NoCrossoverError):
        t_alg(model, None, 0.5, K0, psi_inf_value=100.0, amplitude=1e-3)
    with pytest.raises(DomainError):
        t_alg(model, None, 0.5, 2.0, psi_inf_value=0.1, amplitude=1.0)


def test_empirical_crossover_matches_t_alg():
    model = FreeModel()
    lam = decay_rate(K0)
    expected = t_alg(model, None, 0.5, K0, psi_inf_value=0.1, amplitude=1.0)
    grid = np.geomspace(1.5 / lam, 200.0, 4000)
    exponential, algebraic = reference_curves(grid, 1.0, lam, 0.1)
    found = empirical_crossover(grid, exponential, algebraic)
    assert found == pytest.approx(expected, rel=1e-3)
    # 从交点之后开始的网格没有交点
    late = grid[grid > expected * 1.1]
    assert empirical_crossover(late, *reference_curves(late, 1.0, lam, 0.1)) is None


def test_sampled_crossover_from_two_component_signal():
    """|ψ| = A e^{-λt} + |ψ∞| t^{-3/2} 的采样：拟合出的交点与 t_alg 一致"""
    lam, amplitude, algebraic = decay_rate(K0), 1.0, 1e-4
    expected = t_alg(FreeModel(), None, 0.5, K0, psi_inf_value=algebraic, amplitude=amplitude)
    grid = np.geomspace(0.5, 10 * expected, 3000)
    magnitudes = amplitude * np.exp(-lam * grid) + algebraic * grid ** -1.5
    # t=0 的采样不参与
    times = np.concatenate(([0.0], grid))
    samples = np.concatenate(([1.0], magnitudes))
    found = sampled_crossover(times, samples, algebraic, (expected / 8, expected / 2))
    assert found == pytest.approx(expected, rel=2e-2)
    with pytest.raises(DomainError):
        sampled_crossover(times, samples, algebraic, (1e6, 2e6))


def test_fits():
    t = np.geomspace(10.0, 1e4, 50)
    assert fit_power_law(t, 3.0 * t ** -1.5) == pytest.approx(-1.5, rel=1e-12)
    assert fit_log_slope(t[:10], 2.0 * np.exp(-0.4 * t[:10])) == pytest.approx(-0.4, rel=1e-10)
    with pytest.raises(DomainError):
        fit_power_law([1.0], [1.0])
    with pytest.raises(DomainError):
        fit_log_slope([1.0, 2.0], [1.0, 0.0])


def test_free_report_has_no_resonance(state):
    result = report(FreeModel(), state, 0.5, rho=1.0)
    assert result.k0 is None
    assert result.t_alg is None
    assert any("共振" in note for note in result.notes)
    assert result.P_coefficient == pytest.approx(FREE_C0 ** 2 / (12 * math.pi), rel=1e-10)
    data = result.to_dict()
    assert data['k0'] is None
    assert "psi_inf" in result.to_text()


@pytest.mark.slow
def test_eckart_report_has_crossover(state):
    """Eckart A=49.25, ρ=1, r=0.5：k₀ ≈ 3.7105-0.2495i，t_alg 存在且就是两条参考曲线的交点"""
    model = EckartModel(49.25, 1.0)
    result = report(model, state, 0.5, find_resonances(model, 8.0))
    logger.info(f"Eckart 渐近量: {result.to_dict()}")
    assert result.k0 == pytest.approx(ECKART_K0, abs=1e-3)
    assert -(result.k0 * result.k0).imag == pytest.approx(result.decay_rate, rel=1e-12)
    assert result.decay_rate == pytest.approx(1.8513, rel=1e-3)
    assert result.t_alg is not None
    assert result.t_alg > 1.5 / result.decay_rate
    grid = np.geomspace(0.1, 10 * result.t_alg, 4000)
    exponential, algebraic = reference_curves(grid, result.exp_amplitude, result.decay_rate,
                                              abs(result.psi_inf))
    assert empirical_crossover(grid, exponential, algebraic) == pytest.approx(result.t_alg, rel=1e-3)
