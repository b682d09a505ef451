# moshinsky_test.py
import cmath
import itertools
import logging
import math

import mpmath
import numpy as np
import pytest

from src.models.pole import PoleKind
from src.models.precision import ArithmeticContext
from src.services.moshinsky import (MoshArgs, gamma_summed_split, gamma_triple, leading_algebraic_tail, mosh,
                                    mosh_asymptotic, mosh_batch, mosh_quadrature, mosh_split, nu_sign)
from src.services.poles import aux_poles, h_relative_residual
from src.utils.errors import DomainError

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

ALPHA = 1.25


def test_mosh_closed_form_value():
    """k=i, r=0, β=1 时 M = e·erfc(1)"""
    value = complex(mosh(MoshArgs(1j, 0.0, 1.0)))
    expected = float(mpmath.e * mpmath.erfc(1))
    assert value.real == pytest.approx(expected, rel=1e-14)
    assert value.real == pytest.approx(0.42758357615580705, rel=1e-14)
    assert abs(value.imag) < 1e-15


def test_mosh_matches_quadrature_on_example():
    """闭式与定义式积分一致"""
    for args in (MoshArgs(1j, 0.0, 1.0), MoshArgs(10j, 1.0, 0.5)):
        closed = complex(mosh(args))
        numeric, error = mosh_quadrature(args)
        logger.info(f"{args}: 闭式 {closed}, 积分 {numeric} ± {error:.1e}")
        assert abs(closed - numeric) <= 1e-10 * abs(closed)


def test_mosh_quadrature_parity():
    """r=0, k=i, β 为实数时积分为实数"""
    value, _ = mosh_quadrature(MoshArgs(1j, 0.0, 0.7))
    assert abs(value.imag) < 1e-12


def test_mosh_matches_quadrature_on_grid():
    """四个象限的 k、三个 r、两个 β 上闭式与积分的相对误差小于 1e-9"""
    ks = (1 + 0.5j, -1 + 0.5j, -1 - 0.5j, 1 - 0.5j, 0.3 + 2j)
    worst = 0.0
    for k, r, beta in itertools.product(ks, (0.0, 0.5, 2.0), (1.0, 1 + 10j)):
        args = MoshArgs(k, r, beta)
        closed = complex(mosh(args))
        numeric, _ = mosh_quadrature(args)
        worst = max(worst, abs(closed - numeric) / abs(closed))
    logger.info(f"网格上最大相对误差: {worst:.2e}")
    assert worst < 1e-9


@pytest.mark.slow
def test_mosh_matches_quadrature_strongly_oscillating():
    """β = 0.1+100i 时积分振荡剧烈，仍与闭式一致"""
    for k in (1 + 0.5j, -1 - 0.5j):
        args = MoshArgs(k, 0.5, 0.1 + 100j)
        closed = complex(mosh(args))
        numeric, _ = mosh_quadrature(args)
        assert abs(closed - numeric) <= 1e-9 * abs(closed)


def test_mosh_conjugation_symmetry():
    """conj M(k,r,β) = M(-conj k, r, conj β)"""
    rng = np.random.default_rng(7)
    for _ in range(20):
        k = complex(rng.uniform(-3, 3), rng.choice([-1, 1]) * rng.uniform(0.1, 2))
        r = float(rng.uniform(0, 3))
        beta = complex(rng.uniform(0.1, 2), rng.uniform(-20, 20))
        left = complex(mosh(MoshArgs(k, r, beta))).conjugate()
        right = complex(mosh(MoshArgs(-k.conjugate(), r, beta.conjugate())))
        assert left == pytest.approx(right, rel=1e-12, abs=1e-300)


def test_mosh_batch_matches_scalar():
    k = np.array([1 + 0.5j, -2 - 0.3j, 0.5 + 3j])
    beta = ALPHA + 2j
    batch = mosh_batch(k, 0.5, beta)
    for value, kk in zip(batch, k):
        assert value == pytest.approx(complex(mosh(MoshArgs(kk, 0.5, beta))), rel=1e-12)


def test_mosh_overflow_safety():
    """|k| 到 10³、t 到 10⁶ 时仍为有限值"""
    for k in (1000 - 1j, -700 + 700j, 5 - 1000j):
        for t in (1.0, 1e3, 1e6):
            value = mosh_batch(np.array([k]), 0.5, np.array([1j * t]))[0]
            assert cmath.isfinite(value)


def test_mosh_rejects_real_k_and_zero_beta():
    with pytest.raises(DomainError):
        mosh(MoshArgs(2.0, 0.5, 1.0))
    with pytest.raises(DomainError):
        mosh(MoshArgs(1j, 0.5, 0.0))
    with pytest.raises(ValueError):
        MoshArgs(1j, -1.0, 1.0)
    with pytest.raises(ValueError):
        MoshArgs(1j, 0.5, -1.0)


def test_nu_sign_sectors():
    assert nu_sign(1.0) == -1
    assert nu_sign(1j) == -1
    assert nu_sign(cmath.rect(1, -math.pi / 4)) == -1
    assert nu_sign(-1.0) == 1
    assert nu_sign(-1 - 0.1j) == 1
    assert nu_sign(cmath.rect(1, 3 * math.pi / 4)) == 1


def test_mosh_asymptotic_late_time():
    """t = 10³ 时两项渐近式相对误差小于 1e-3"""
    k = 3 - 0.2j
    args = MoshArgs(k, 0.5, ALPHA + 1e3j)
    exact = complex(mosh(args, ArithmeticContext(30)))
    approx = mosh_asymptotic(args)
    assert abs(exact - approx) / abs(exact) < 1e-3


def test_mosh_asymptotic_error_decreases_with_time():
    ctx = ArithmeticContext(30)
    k = 2.5 - 0.3j
    errors = []
    for t in (1e2, 1e3, 1e4):
        args = MoshArgs(k, 0.5, ALPHA + 1j * t)
        exact = complex(mosh(args, ctx))
        errors.append(abs(exact - mosh_asymptotic(args)) / abs(exact))
    logger.info(f"渐近式相对误差: {errors}")
    assert errors[0] > errors[1] > errors[2]


def test_mosh_asymptotic_algebraic_scaling():
    """r=0 时代数项按 t^{-1/2} 衰减"""
    k = 3 - 0.2j
    early = mosh_asymptotic(MoshArgs(k, 0.0, ALPHA + 1e4j))
    late = mosh_asymptotic(MoshArgs(k, 0.0, ALPHA + 4e4j))
    assert abs(early / late) == pytest.approx(2.0, rel=1e-3)


def test_mosh_asymptotic_rejects_bad_nu():
    with pytest.raises(DomainError):
        mosh_asymptotic(MoshArgs(1 - 1j, 0.5, 1 + 100j), nu=0)


def test_gamma_sum_cancels_on_aux_poles():
    """h_α(k)=0 时三个 γ 的指数项之和为零，约化后的系数给出同样的 M 之和"""
    poles = [p for p in aux_poles(ALPHA, 4.0) if p.kind is not PoleKind.AUX3]
    assert poles
    k = np.array([p.value for p in poles])
    r, t = 0.5, 1.0
    for pole in poles:
        assert h_relative_residual(pole.k, ALPHA) < 1e-12

    coef, log_e, bounded = gamma_summed_split(k, r, t, ALPHA, np.ones(k.shape, dtype=bool))
    reduced = bounded + np.sum(coef * np.exp(log_e), axis=0)
    direct = sum(mosh_batch(k, r, gamma + 1j * t) for gamma in gamma_triple(ALPHA))
    scale = np.max(np.abs(np.exp(log_e)), axis=0) + np.abs(direct)
    assert np.all(np.abs(reduced - direct) <= 1e-9 * scale)


def test_split_form_limit_at_zero_beta():
    """β=0 时分解形式取极限，与很小的 β 连续"""
    k = np.array([1.5 - 0.4j, -0.8 + 0.6j])
    limit = mosh_batch(k, 0.5, 0.0)
    nearby = np.array([complex(mosh(MoshArgs(kk, 0.5, 1e-10j))) for kk in k])
    assert np.allclose(limit, nearby, rtol=1e-4, atol=1e-4)
    assert np.allclose(mosh_batch(k, 0.0, 0.0), [-1.0, 1.0])


def test_split_evaluates_only_the_stable_branch():
    """Re z ≫ 0 与 Re z ≪ 0 时另一支的 w 会溢出，分解形式不应碰到它"""
    k = np.array([5 - 30j, -5 + 30j])
    with np.errstate(over="raise", invalid="raise"):
        coef, log_e, bounded = mosh_split(k, 0.5, 1.0)
        values = mosh_batch(k, 0.5, 1.0)
    assert np.all(np.isfinite(bounded))
    assert list(coef) == [0.0, 0.0]
    for value, kk in zip(values, k):
        assert value == pytest.approx(complex(mosh(MoshArgs(kk, 0.5, 1.0))), rel=1e-10)


def test_split_broadcasts_scalar_arguments():
    coef, log_e, bounded = mosh_split(1.5 - 0.4j, 0.5, ALPHA + 1j)
    assert np.shape(bounded) == ()
    assert complex(coef * np.exp(log_e) + bounded) == pytest.approx(
        complex(mosh(MoshArgs(1.5 - 0.4j, 0.5, ALPHA + 1j))), rel=1e-12)


def test_leading_algebraic_tail_matches_late_kernel():
    """大 t 时 k·Σ_γ M 的代数部分趋于 Σ_γ i/√(π(γ+it))，且与 r 无关"""
    t = 1e6
    tail = leading_algebraic_tail(t, ALPHA)
    assert abs(tail) == pytest.approx(3 / math.sqrt(math.pi * t), rel=1e-5)
    for k in (2.0 - 0.3j, -1.0 - 4.0j):
        for r in (0.0, 0.5):
            bounded = sum(mosh_split(k, r, gamma + 1j * t)[2] for gamma in gamma_triple(ALPHA))
            assert complex(k * bounded) == pytest.approx(tail, rel=1e-4)
    # β=0 的项不计入
    at_alpha = leading_algebraic_tail(ALPHA, ALPHA)
    expected = sum(1j / cmath.sqrt(math.pi * (g + 1j * ALPHA)) for g in gamma_triple(ALPHA)[:2])
    assert at_alpha == pytest.approx(expected, rel=1e-14)
