# src/utils/cli_parser.py
import argparse
import os
from pathlib import Path
import logging

from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

COMMANDS = {
    "poles": "求出全部极点并输出极点表与辐角原理核对表",
    "evolve": "计算 ψ(r,t) 以及指数、代数参考曲线",
    "compare-cn": "与 Crank–Nicolson 参考解比较",
    "survival": "计算生存概率 S(t) 及其 t⁻³ 渐近线",
    "report": "输出 k₀、t_alg、ψ∞ 与幂律系数",
}


def _float_list(text: str):
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"无法解析为逗号分隔的数值列表: {text}")


class CLIParser:
    """命令行参数解析器。优先级：命令行 > 环境变量 > 配置文件 > 默认值。"""

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            description="衰变态含时波函数的极点展开计算工具",
            formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        self._setup_arguments()

    def _setup_arguments(self):
        """设置命令行参数"""
        self.parser.add_argument(
            "command",
            help="子命令：" + "；".join(f"{name}: {text}" for name, text in COMMANDS.items()),
            choices=list(COMMANDS)
        )

        self.parser.add_argument(
            "--config",
            dest="config_path",
            help="INI 配置文件路径（可用 src/templates 下的预设）",
            type=str
        )

        self.parser.add_argument(
            "-o", "--out",
            dest="out_dir",
            help="输出目录",
            type=str
        )

        self.parser.add_argument(
            "--precision",
            dest="precision",
            help="十进制有效位数，15 为双精度",
            type=int
        )

        self.parser.add_argument(
            "--kmax",
            dest="k_max",
            help="极点模长截断 K_max",
            type=float
        )

        self.parser.add_argument(
            "--alpha",
            dest="alpha",
            help="h_α 的参数 α",
            type=float
        )

        self.parser.add_argument(
            "--r",
            dest="r_values",
            help="逗号分隔的求值位置 r",
            type=_float_list
        )

        self.parser.add_argument(
            "--times",
            dest="times",
            help="逗号分隔的显式时刻，覆盖配置中的对数网格",
            type=_float_list
        )

        self.parser.add_argument(
            "--log-level",
            dest="log_level",
            help="日志级别",
            type=str,
            choices=["DEBUG", "INFO", "WARNING", "ERROR"]
        )

        self.parser.add_argument(
            "--quiet",
            dest="quiet",
            help="不向标准输出打印日志",
            action="store_true"
        )

        self.parser.add_argument(
            "-c", "--concurrent",
            dest="concurrent_workers",
            help="并发工作线程数，用于极点精化、留数准备与独立的 CN 演化",
            type=int
        )

    def parse_args(self, argv=None):
        """解析命令行参数"""
        args = self.parser.parse_args(argv)

        if args.config_path and not os.path.exists(args.config_path):
            logger.error(f"配置文件不存在: {args.config_path}")
            raise ConfigError(f"配置文件不存在: {args.config_path}")

        if args.concurrent_workers is not None and args.concurrent_workers < 1:
            logger.error("并发线程数至少为 1")
            raise ConfigError("并发线程数至少为 1")

        if args.times is not None and any(t < 0 for t in args.times):
            logger.error(f"时刻必须非负: {args.times}")
            raise ConfigError(f"时刻必须非负: {args.times}")

        if args.config_path:
            logger.info(f"使用配置文件: {Path(args.config_path).resolve()}")

        return args

    def overrides(self, args):
        """把命令行参数转成 RunConfig 的 (section, field) 覆盖项，未给出的参数不出现"""
        mapping = {
            ('expansion', 'alpha'): args.alpha,
            ('expansion', 'k_max'): args.k_max,
            ('expansion', 'precision'): args.precision,
            ('expansion', 'r_values'): args.r_values,
            ('expansion', 'workers'): args.concurrent_workers,
            ('schedule', 'times'): args.times,
            ('output', 'out_dir'): args.out_dir,
            ('output', 'log_level'): args.log_level,
            ('output', 'quiet'): True if args.quiet else None,
        }
        return {key: value for key, value in mapping.items() if value is not None}


def get_cli_args(argv=None):
    """获取命令行参数的便捷函数"""
    parser = CLIParser()
    return parser.parse_args(argv)
