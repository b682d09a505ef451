# src/services/cn.py
"""半直线 [0, L] 上的 Crank–Nicolson 参考解，两端 Dirichlet 边界。

(1 + i dt H/2) ψ_new = (1 - i dt H/2) ψ_old，H = -d²/dr² + V，三点差分。
"""
import logging
import math
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.linalg import solve_banded

from src.models.config import CNConfig
from src.models.result import GridState
from src.models.state import InitialState
from src.services.jost import PotentialModel
from src.services.spectral import coefficients_batch
from src.utils.errors import DomainError, IntegrationError

logger = logging.getLogger(__name__)

# 盒子长度规则 L ≥ 2·k95·t_end + BOX_MARGIN
BOX_MARGIN = 50.0
_SPECTRUM_POINTS = 2001


class CrankNicolsonSolver:
    """预先组装的三对角系统；内点 j = 1..N-1。"""

    def __init__(self, V_grid: np.ndarray, cfg: CNConfig):
        V_grid = np.asarray(V_grid, dtype=float)
        if V_grid.shape != (cfg.n_intervals + 1,):
            raise DomainError(f"势的采样点数 {V_grid.size} 与网格点数 {cfg.n_intervals + 1} 不一致")
        self.cfg = cfg
        dr, dt = cfg.dr, cfg.dt
        interior = V_grid[1:-1]
        self._diag = 2.0 / dr ** 2 + interior
        self._off = -1.0 / dr ** 2
        half = 0.5j * dt
        n = interior.size
        # solve_banded 的 (1,1) 带状存储
        self._lhs = np.zeros((3, n), dtype=complex)
        self._lhs[0, 1:] = half * self._off
        self._lhs[1, :] = 1.0 + half * self._diag
        self._lhs[2, :-1] = half * self._off
        self._half = half

    def apply_rhs(self, psi: np.ndarray) -> np.ndarray:
        """(1 - i dt H/2) ψ，ψ 只含内点"""
        h_psi = self._diag * psi
        h_psi[1:] += self._off * psi[:-1]
        h_psi[:-1] += self._off * psi[1:]
        return psi - self._half * h_psi

    def step_interior(self, psi: np.ndarray) -> np.ndarray:
        rhs = self.apply_rhs(psi)
        new = solve_banded((1, 1), self._lhs, rhs, check_finite=False)
        if not np.all(np.isfinite(new)):
            raise IntegrationError("Crank–Nicolson 三对角求解失败")
        return new

    def step(self, state: GridState) -> GridState:
        psi = np.zeros_like(state.psi)
        psi[1:-1] = self.step_interior(state.psi[1:-1])
        return GridState(psi, state.dr, state.t + self.cfg.dt)


def sample_potential(model: PotentialModel, cfg: CNConfig) -> np.ndarray:
    r = cfg.dr * np.arange(cfg.n_intervals + 1)
    # V 在 r=0 处可能奇异，边界点不参与方程
    values = np.zeros_like(r)
    values[1:] = model.V_array(r[1:])
    return values


def sample_initial(state: InitialState, cfg: CNConfig) -> GridState:
    """在网格上采样 ψ₀，两端置零"""
    r = cfg.dr * np.arange(cfg.n_intervals + 1)
    psi = np.asarray(state.psi0(r), dtype=complex)
    psi[0] = 0.0
    psi[-1] = 0.0
    return GridState(psi, cfg.dr, 0.0)


def cn_step(state: GridState, V_grid: np.ndarray, cfg: CNConfig) -> GridState:
    """单步推进；需要多步时用 CrankNicolsonSolver 复用带状矩阵。"""
    return CrankNicolsonSolver(V_grid, cfg).step(state)


def log_schedule(t_end: float, dt: float, per_decade: int = 10) -> List[int]:
    """快照的步数编号：从第一步到末步按对数均匀分布，总包含末步"""
    n_steps = int(round(t_end / dt))
    if n_steps <= 0:
        return [0]
    count = max(2, int(math.ceil(math.log10(max(n_steps, 1)) * per_decade)) + 1)
    steps = np.unique(np.round(np.geomspace(1, n_steps, count)).astype(int))
    return [int(s) for s in steps]


def cn_evolve(initial: GridState, V_grid: np.ndarray, cfg: CNConfig,
              snapshot_times: Optional[Sequence[float]] = None,
              callback: Optional[Callable[[GridState], None]] = None) -> List[GridState]:
    """从 initial 推进到 cfg.t_end，返回快照（含初态）。

    snapshot_times 为空时按对数间隔取快照；给定时刻四舍五入到最近的步。
    """
    solver = CrankNicolsonSolver(V_grid, cfg)
    n_steps = cfg.n_steps
    if snapshot_times is None:
        wanted = set(log_schedule(cfg.t_end, cfg.dt))
    else:
        if any(t < 0 or t > cfg.t_end * (1 + 1e-12) for t in snapshot_times):
            raise DomainError(f"快照时刻必须在 [0, {cfg.t_end}] 内")
        wanted = {int(round(t / cfg.dt)) for t in snapshot_times}
    wanted.add(n_steps)

    snapshots = [initial] if 0 in wanted or snapshot_times is None else []
    interior = initial.psi[1:-1].copy()
    norm0 = initial.norm()
    for step in range(1, n_steps + 1):
        interior = solver.step_interior(interior)
        if step in wanted:
            psi = np.zeros_like(initial.psi)
            psi[1:-1] = interior
            snapshot = GridState(psi, cfg.dr, step * cfg.dt)
            snapshots.append(snapshot)
            if callback is not None:
                callback(snapshot)
    final_norm = snapshots[-1].norm()
    logger.info(f"CN 推进完成：{n_steps} 步，dt={cfg.dt:.3e}，范数漂移 {abs(final_norm - norm0):.2e}")
    return snapshots


def recommended_box_length(model: PotentialModel, state: InitialState, t_end: float,
                           quantile: float = 0.95) -> float:
    """L ≥ 2·k_q·t_end + 50，k_q 为实轴谱密度 (2/π)k²|C|²/|f(k,0)|² 的分位数"""
    c2 = max(state.tail[0], 1e-3)
    k_hi = max(10.0, 2.0 * math.sqrt(60.0 * c2))
    ks = np.linspace(0.0, k_hi, _SPECTRUM_POINTS)
    batch = coefficients_batch(model, state, ks, with_jost=True)
    density = (2.0 / np.pi) * ks ** 2 * np.abs(batch.C) ** 2 / np.abs(batch.f0) ** 2
    cumulative = cumulative_trapezoid(density, ks, initial=0.0)
    if cumulative[-1] <= 0:
        raise DomainError("初态的谱密度为零，无法确定盒子长度")
    k_q = float(np.interp(quantile * cumulative[-1], cumulative, ks))
    length = 2.0 * k_q * t_end + BOX_MARGIN
    logger.debug(f"建议盒子长度 L={length:.1f}（k_{quantile:.2f}={k_q:.3f}）")
    return length


def interpolate(state: GridState, r: Sequence[float]) -> np.ndarray:
    """把网格解线性插值到任意 r"""
    r = np.asarray(r, dtype=float)
    grid = state.r
    return np.interp(r, grid, state.psi.real) + 1j * np.interp(r, grid, state.psi.imag)


def relative_l2(reference: np.ndarray, other: np.ndarray, r: np.ndarray) -> float:
    """‖other - reference‖/‖reference‖，梯形积分"""
    reference = np.asarray(reference)
    other = np.asarray(other)
    denom = trapezoid(np.abs(reference) ** 2, r)
    if denom <= 0:
        raise DomainError("参考函数的范数为零")
    return float(math.sqrt(trapezoid(np.abs(other - reference) ** 2, r) / denom))
