# jost_test.py
import cmath
import logging
import math

import numpy as np
import pytest
from scipy.integrate import quad

from src.services.jost import (EckartModel, FreeModel, NumericalModel, eckart_f, f_ratio,
                               numerical_jost, u_from_f)
from src.utils.errors import HypergeometricPoleError, IntegrationError

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


@pytest.fixture(scope="module")
def eckart():
    return EckartModel(49.25, 1.0)


def test_eckart_delta_and_potential(eckart):
    """A = 49.25 时 δ = 7；势关于 r = ρ 对称"""
    assert complex(eckart.delta) == pytest.approx(7.0, abs=1e-14)
    assert eckart.V(1.0) == pytest.approx(49.25 / 4)
    assert eckart.V(0.3) == pytest.approx(eckart.V(1.7), rel=1e-14)
    r = np.array([0.0, 0.5, 3.0, 30.0])
    assert np.allclose(eckart.V_array(r), [eckart.V(x) for x in r], rtol=1e-14)


def test_eckart_first_moment(eckart):
    value, _ = quad(lambda r: r * eckart.V(r), 0.0, 80.0, limit=200)
    assert eckart.first_moment == pytest.approx(value, rel=1e-8)


def test_free_model_closed_forms():
    model = FreeModel()
    k, r = 1.3 + 0.4j, 0.8
    assert complex(model.f(k, r)) == pytest.approx(cmath.exp(-1j * k * r), rel=1e-14)
    assert complex(u_from_f(model, 2.0, 1.0)) == pytest.approx(math.sin(2.0) / 2.0, rel=1e-13)
    assert complex(f_ratio(model, k, r)) == pytest.approx(cmath.exp(1j * k * r), rel=1e-14)


def test_eckart_jost_asymptotic_normalization(eckart):
    """r → ∞ 时 e^{ikr} f(k,r) → 1"""
    for k in (0.7, 1 + 0.5j, -2 - 0.3j):
        value = complex(eckart.f(k, 40.0)) * cmath.exp(1j * k * 40.0)
        assert value == pytest.approx(1.0, abs=1e-12)


def test_eckart_conjugation_symmetry(eckart):
    """conj f(k,r) = f(-conj k, r)"""
    rng = np.random.default_rng(3)
    for _ in range(10):
        k = complex(rng.uniform(-4, 4), rng.uniform(-1.5, 1.5))
        r = float(rng.uniform(0, 4))
        left = complex(eckart.f(k, r)).conjugate()
        right = complex(eckart.f(-k.conjugate(), r))
        assert left == pytest.approx(right, rel=1e-10)


def test_eckart_matches_numerical_jost(eckart):
    """解析 Jost 解与常微分方程数值解一致（numerical_jost 返回出射解 f(-k,r)）"""
    k = 1 + 0.5j
    grid = np.linspace(0.0, 10.0, 41)
    numeric = numerical_jost(eckart.V, k, grid)
    analytic = np.array([complex(eckart.f(-k, r)) for r in grid])
    error = np.max(np.abs(numeric - analytic) / np.abs(analytic))
    logger.info(f"解析与数值 Jost 解的最大相对误差: {error:.2e}")
    assert error < 1e-8


def test_numerical_jost_free():
    k = 0.8 + 0.2j
    grid = np.linspace(0.0, 5.0, 11)
    values = numerical_jost(lambda r: 0.0, k, grid)
    assert np.allclose(values, np.exp(1j * k * grid), rtol=1e-10, atol=0)


def test_numerical_jost_wronskian(eckart):
    """W[f(k,·), f(-k,·)] = 2ik 沿 r 为常数"""
    k = 1.5
    grid = np.linspace(0.0, 6.0, 13)
    f_minus, df_minus = numerical_jost(eckart.V, k, grid, with_derivative=True)
    f_plus, df_plus = numerical_jost(eckart.V, -k, grid, with_derivative=True)
    wronskian = f_plus * df_minus - df_plus * f_minus
    assert np.allclose(wronskian, 2j * k, rtol=0, atol=1e-8)


def test_numerical_jost_rejects_short_tail(eckart):
    with pytest.raises(IntegrationError):
        numerical_jost(eckart.V, 1.0, [0.0, 1.0], tail_radius=5.0)


def test_regular_solution_boundary_conditions(eckart):
    """u(k,0) = 0，∂ᵣu(k,0) = 1"""
    h = 1e-4
    for model in (FreeModel(), eckart):
        for k in (0.9, 2 - 0.4j):
            assert complex(u_from_f(model, k, 0.0)) == 0
            slope = (4 * complex(u_from_f(model, k, h)) - complex(u_from_f(model, k, 2 * h))) / (2 * h)
            assert slope == pytest.approx(1.0, abs=1e-6)


def test_regular_solution_real_and_even(eckart):
    for k, r in ((1.3, 0.7), (4.0, 2.5)):
        value = complex(u_from_f(eckart, k, r))
        assert abs(value.imag) < 1e-10 * max(1.0, abs(value))
        assert complex(u_from_f(eckart, -k, r)) == pytest.approx(value, rel=1e-10)


def test_regular_solution_small_k_limit(eckart):
    """|k| < κ₀ 时的导数极限与邻近的直接公式连续"""
    free = FreeModel()
    assert complex(u_from_f(free, 0.0, 1.5)) == pytest.approx(1.5, rel=1e-13)
    for model in (free, eckart):
        limit = complex(u_from_f(model, 1e-6, 0.8))
        nearby = complex(u_from_f(model, 2e-4, 0.8))
        assert limit == pytest.approx(nearby, rel=1e-6)


def test_f_ratio_basic(eckart):
    assert complex(f_ratio(eckart, 1 - 0.3j, 0.0)) == 1
    k, r = 1.2 - 0.1j, 0.6
    expected = complex(eckart.f(-k, r)) / complex(eckart.f(-k, 0.0))
    assert complex(f_ratio(eckart, k, r)) == pytest.approx(expected, rel=1e-12)


def test_f_ratio_continuous_at_hypergeometric_pole(eckart):
    """k = -i/2 处 f(-k,·) 有极点，比值解析：圆周平均等于圆心值"""
    center = -0.5j
    r = 0.5
    value = complex(f_ratio(eckart, center, r))
    circle = [center + 1e-2 * cmath.exp(2j * math.pi * j / 16) for j in range(16)]
    mean = sum(complex(f_ratio(eckart, k, r)) for k in circle) / len(circle)
    assert cmath.isfinite(value)
    assert mean == pytest.approx(value, rel=1e-6)


def test_eckart_f_pole_error(eckart):
    """1+2ik 为非正整数时 f(k,r) 本身有极点"""
    with pytest.raises(HypergeometricPoleError):
        eckart_f(eckart, 0.5j, 0.3)


def test_tabulated_model_matches_eckart(eckart):
    grid = np.linspace(0.0, 45.0, 4501)
    table = NumericalModel(grid, eckart.V_array(grid))
    for k in (1.0, 1 - 0.2j):
        expected = complex(eckart.f0(k))
        assert complex(table.f0(k)) == pytest.approx(expected, rel=1e-5)
