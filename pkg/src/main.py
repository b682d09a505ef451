# src/main.py
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import asyncio
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.models.config import ExpansionConfig
from src.models.pole import Pole
from src.models.state import InitialState, c0_free_state, load_state, trapped_gaussian
from src.schemas.run_config import RunConfig
from src.services import asymptotics
from src.services.cn import (cn_evolve, interpolate, recommended_box_length, relative_l2,
                             sample_initial, sample_potential)
from src.services.evolution import MIN_P_POINTS, PoleExpansion, log_time_grid, non_escape_P
from src.services.export_service import ExportService
from src.services.jost import EckartModel, FreeModel, NumericalModel, PotentialModel
from src.services.poles import ResonanceScanner, audit_table, pole_table
from src.services.spectral import psi_direct
from src.utils.cli_parser import CLIParser
from src.utils.env_loader import load_env_overrides
from src.utils.errors import ConfigError, DecayError, DomainError, ToleranceError
from src.utils.logger import setup_logger
from src.utils.parallel import ordered_map
from src.utils.result_store import ResultStore

logger = logging.getLogger(__name__)

# evolve 命令在该时刻与直接积分交叉核对
CROSS_CHECK_TIME = 3.0
# 经验交点的指数拟合窗口（t_alg 的倍数）
CROSSOVER_WINDOW = (0.125, 0.5)


class DecaySystem:
    """按 RunConfig 组装模型、初态与极点展开，并执行各子命令。"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.expansion_cfg: ExpansionConfig = config.expansion_config()
        self.ctx = self.expansion_cfg.ctx
        self.model = self._build_model()
        self.state = self._build_state()
        self.out_dir = Path(config.output.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.export_service = ExportService(digits=self.ctx.dps)
        self.result_store = ResultStore(str(self.out_dir))
        self._resonances: Optional[List[Pole]] = None
        self._audits = []
        self._expansion: Optional[PoleExpansion] = None

    def _build_model(self) -> PotentialModel:
        section = self.config.model
        if section.kind == "eckart":
            return EckartModel(section.A, section.rho, self.ctx)
        if section.kind == "free":
            return FreeModel(self.ctx)
        return NumericalModel.from_table(section.table, self.ctx)

    def _build_state(self) -> InitialState:
        section = self.config.state
        if section.kind == "trapped_gaussian":
            return trapped_gaussian(section.rho)
        if section.kind == "c0_free":
            return c0_free_state(section.a1, section.a2)
        return load_state(section.path, tail=(section.tail_rate, 2.0))

    # ------------------------------------------------------------ 公共步骤

    def resonances(self) -> List[Pole]:
        if self._resonances is None:
            if self.model.has_resonances:
                scanner = ResonanceScanner(self.model, self.expansion_cfg.k_max,
                                           cell_size=self.expansion_cfg.cell_size,
                                           workers=self.expansion_cfg.workers)
                self._resonances, self._audits = scanner.scan()
            else:
                self._resonances, self._audits = [], []
        return self._resonances

    def expansion(self) -> PoleExpansion:
        if self._expansion is None:
            self._expansion = PoleExpansion(self.model, self.state, self.expansion_cfg,
                                            resonances=self.resonances()).build()
        return self._expansion

    def time_grid(self) -> np.ndarray:
        schedule = self.config.schedule
        if schedule.times:
            return np.array(sorted(schedule.times), dtype=float)
        return log_time_grid(schedule.t_min, schedule.t_max, schedule.per_decade)

    def _path(self, name: str) -> str:
        return str(self.out_dir / name)

    # ------------------------------------------------------------ 子命令

    async def cmd_poles(self) -> Dict:
        expansion = self.expansion()
        frame = pole_table(expansion.poles, expansion.table, r_ref=self.expansion_cfg.r_grid[0])
        pole_path = await self.export_service.export_frame(frame, self._path("poles.csv"))
        audit_path = None
        if self._audits:
            audit_path = await self.export_service.export_frame(audit_table(self._audits),
                                                                self._path("poles_audit.csv"))
        k0 = expansion.k0
        summary = {
            'alpha': expansion.alpha,
            'k_max': self.expansion_cfg.k_max,
            'aux_count': len(expansion.aux),
            'resonance_count': len(expansion.resonances),
            'pole_count': len(expansion.poles),
            'summands': 3 * len(expansion.poles),
            'audit_defects': int(sum(abs(a.defect) for a in self._audits)),
            'k0': None if k0 is None else k0.value,
            'files': [p for p in (pole_path, audit_path) if p],
        }
        print(f"k0 = {summary['k0']}")
        print(f"共振极点 {summary['resonance_count']} 个，辅助极点 {summary['aux_count']} 个")
        self.result_store.save_result("poles", summary)
        return summary

    async def cmd_evolve(self) -> Dict:
        expansion = self.expansion()
        t_grid = self.time_grid()
        r_grid = self.expansion_cfg.r_grid
        result = expansion.evolve(r_grid, t_grid)
        frame = result.to_frame()
        frame['exp_reference'] = np.nan
        frame['alg_reference'] = np.nan
        frame['marker'] = ""

        markers, reports, checks = [], [], []
        for i, r in enumerate(r_grid):
            report = asymptotics.report(self.model, self.state, r, expansion.resonances)
            entry = report.to_dict()
            entry['empirical_crossover'] = self._sampled_crossover(result, i, report)
            reports.append(entry)
            rows = frame['r'] == r
            if report.exp_amplitude is not None:
                exponential, algebraic = asymptotics.reference_curves(
                    frame.loc[rows, 't'], report.exp_amplitude, report.decay_rate, abs(report.psi_inf))
                frame.loc[rows, 'exp_reference'] = exponential
                frame.loc[rows, 'alg_reference'] = algebraic
            if report.t_alg is not None:
                markers.append({'t': report.t_alg, 'r': r, 'marker': 't_alg'})
            checks.append(self._cross_check(expansion, r))

        if markers:
            frame = pd.concat([frame, pd.DataFrame(markers)], ignore_index=True)
            frame = frame.sort_values(['t', 'r'], kind='mergesort').reset_index(drop=True)
        path = await self.export_service.export_frame(frame, self._path("evolve.csv"))
        summary = {
            'file': path,
            'alpha': result.alpha,
            'k_max': result.k_max,
            'asymptotics': reports,
            'sum_rules': [rule.to_dict() for rule in result.sum_rules],
            'cross_check': checks,
            'max_truncation': float(np.max(result.truncation)) if result.truncation.size else 0.0,
        }
        self.result_store.save_result("evolve", summary)
        return summary

    @staticmethod
    def _sampled_crossover(result, index: int, report) -> Optional[float]:
        """在 [t_alg/8, t_alg/2] 上由采样的 |ψ| 拟合指数曲线，求它与代数曲线的交点"""
        if report.t_alg is None:
            return None
        window = (CROSSOVER_WINDOW[0] * report.t_alg, CROSSOVER_WINDOW[1] * report.t_alg)
        try:
            return asymptotics.sampled_crossover(result.t_grid, np.abs(result.psi[index]),
                                                 abs(report.psi_inf), window)
        except DomainError as e:
            logger.warning(f"r={result.r_grid[index]} 处无法求经验交点: {str(e)}")
            return None

    def _cross_check(self, expansion: PoleExpansion, r: float) -> Dict:
        """t=3 处展开结果与直接积分的对比"""
        if r == 0:
            return {'r': r, 't': CROSS_CHECK_TIME, 'relative_difference': None}
        value, _ = expansion.psi(r, CROSS_CHECK_TIME)
        try:
            direct, error = psi_direct(self.model, self.state, r, CROSS_CHECK_TIME,
                                       self.expansion_cfg.k_max)
        except ToleranceError as e:
            logger.warning(f"r={r} 处直接积分未收敛，跳过交叉核对: {str(e)}")
            return {'r': r, 't': CROSS_CHECK_TIME, 'relative_difference': None}
        difference = abs(value - direct) / max(abs(direct), 1e-300)
        logger.info(f"交叉核对 r={r}, t={CROSS_CHECK_TIME}: 相对差 {difference:.2e}")
        return {'r': r, 't': CROSS_CHECK_TIME, 'relative_difference': difference,
                'direct_error': error}

    def _compare_one(self, t_end: float) -> Tuple[pd.DataFrame, Dict]:
        section = self.config.cn
        L = section.L or recommended_box_length(self.model, self.state, t_end)
        L = max(L, section.r_compare + 1.0)
        cfg = self.config.cn_config(t_end, L)
        snapshots = cn_evolve(sample_initial(self.state, cfg), sample_potential(self.model, cfg), cfg,
                              snapshot_times=[t_end])
        final = snapshots[-1]
        r = final.r[final.r <= section.r_compare]
        psi_cn = interpolate(final, r)
        expansion = self.expansion()
        psi_exp = np.array([expansion.psi(float(x), final.t)[0] for x in r])
        phase = np.angle(psi_cn * np.conj(psi_exp))
        frame = pd.DataFrame({
            't': np.full(r.size, final.t),
            'r': r,
            'abs_psi_expansion': np.abs(psi_exp),
            'abs_psi_cn': np.abs(psi_cn),
            'phase_difference': phase,
            're_psi_expansion': psi_exp.real,
            'im_psi_expansion': psi_exp.imag,
            're_psi_cn': psi_cn.real,
            'im_psi_cn': psi_cn.imag,
        })
        stats = {
            't': final.t,
            'L': L,
            'dr': cfg.dr,
            'dt': cfg.dt,
            'relative_l2': relative_l2(psi_exp, psi_cn, r),
            'relative_l2_abs': relative_l2(np.abs(psi_exp), np.abs(psi_cn), r),
        }
        logger.info(f"CN 比较 t={final.t}: ψ 相对 L² 差 {stats['relative_l2']:.3e}，"
                    f"|ψ| 相对 L² 差 {stats['relative_l2_abs']:.3e}")
        return frame, stats

    async def cmd_compare_cn(self) -> Dict:
        times = self.config.cn.t_end
        if not times:
            raise ConfigError("compare-cn 需要至少一个比较时刻 (cn.t_end)")
        self.expansion()
        outcomes = ordered_map(self._compare_one, times, self.expansion_cfg.workers, label="CN 演化")
        frame = pd.concat([f for f, _ in outcomes], ignore_index=True)
        path = await self.export_service.export_frame(frame, self._path("compare_cn.csv"))
        summary = {'file': path, 'comparisons': [s for _, s in outcomes]}
        self.result_store.save_result("compare-cn", summary)
        return summary

    async def cmd_survival(self) -> Dict:
        expansion = self.expansion()
        t_grid = self.time_grid()
        values = ordered_map(expansion.survival, list(t_grid), self.expansion_cfg.workers,
                             label="S(t) 采样")
        coefficient = asymptotics.survival_coefficient(self.model, self.state)
        rho = self.config.model.rho
        region = expansion.evolve(np.linspace(0.0, rho, MIN_P_POINTS + 1), t_grid, with_sum_rules=False)
        p_values = [non_escape_P(self.expansion_cfg, region, rho, t) for t in t_grid]
        frame = pd.DataFrame({
            't': t_grid,
            'S': [v for v, _ in values],
            'truncation': [e for _, e in values],
            'asymptote': coefficient / t_grid ** 3,
            'P': p_values,
        })
        path = await self.export_service.export_frame(frame, self._path("survival.csv"))
        k0 = expansion.k0
        summary = {
            'file': path,
            'S_coefficient': coefficient,
            'k0': None if k0 is None else k0.value,
            'exponential_rate': None if k0 is None else -2.0 * asymptotics.decay_rate(k0.k),
        }
        print(f"S(t)·t³ → {coefficient!r}")
        self.result_store.save_result("survival", summary)
        return summary

    async def cmd_report(self) -> Dict:
        resonances = self.resonances()
        rho = self.config.model.rho
        frames, texts, reports = [], [], []
        for r in self.expansion_cfg.r_grid:
            report = asymptotics.report(self.model, self.state, r, resonances, rho=rho)
            frames.append(report.to_frame())
            texts.append(report.to_text())
            reports.append(report.to_dict())
        text = "\n\n".join(texts)
        print(text)
        csv_path = await self.export_service.export_frame(pd.concat(frames, ignore_index=True),
                                                          self._path("report.csv"))
        text_path = await self.export_service.export_text(text, self._path("report.txt"))
        summary = {'files': [csv_path, text_path], 'reports': reports}
        self.result_store.save_result("report", summary)
        return summary

    async def run(self, command: str) -> Dict:
        handlers = {
            "poles": self.cmd_poles,
            "evolve": self.cmd_evolve,
            "compare-cn": self.cmd_compare_cn,
            "survival": self.cmd_survival,
            "report": self.cmd_report,
        }
        logger.info(f"开始执行 {command}：模型 {self.model!r}，初态 {self.state.name}，"
                    f"α={self.expansion_cfg.alpha}，K_max={self.expansion_cfg.k_max}，"
                    f"精度 {self.ctx.dps} 位")
        return await handlers[command]()


def resolve_config(args, parser: CLIParser) -> RunConfig:
    """默认值 < 配置文件 < 环境变量 < 命令行"""
    config = RunConfig.from_ini(args.config_path) if args.config_path else RunConfig()
    config = config.with_overrides(load_env_overrides())
    return config.with_overrides(parser.overrides(args))


async def main(argv=None) -> int:
    parser = CLIParser()
    try:
        args = parser.parse_args(argv)
        config = resolve_config(args, parser)
        setup_logger(config.output.log_level, quiet=config.output.quiet)
        system = DecaySystem(config)
        await system.run(args.command)
        return 0
    except DecayError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        print(f"错误: {str(e)}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        # 模型与初态构造中的参数校验
        logger.error(f"参数无效: {str(e)}")
        print(f"错误: {str(e)}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
