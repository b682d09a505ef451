# src/schemas/run_config.py
import configparser
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple

from pydantic import (BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator,
                      model_validator)

from src.models.config import DEFAULT_DR, DEFAULT_ALPHA, DEFAULT_K_MAX, CNConfig, ExpansionConfig
from src.utils.errors import ConfigError


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(',') if item.strip()]
    return value


def _blank_to_none(value):
    if isinstance(value, str) and value.strip() == "":
        return None
    return value


# INI 中的列表写成逗号分隔，空串表示未设置
FloatList = Annotated[List[float], BeforeValidator(_split_list)]
OptionalText = Annotated[Optional[str], BeforeValidator(_blank_to_none)]
OptionalFloat = Annotated[Optional[float], BeforeValidator(_blank_to_none)]


class Section(BaseModel):
    """配置节的公共设置：拒绝未知键与非有限数值"""
    model_config = ConfigDict(extra='forbid', allow_inf_nan=False)


class ModelSection(Section):
    """势模型"""
    kind: Literal['eckart', 'free', 'tabulated'] = Field(default='eckart', description="势模型类型")
    A: float = Field(default=49.25, description="Eckart 势强度 A")
    rho: float = Field(default=1.0, gt=0, description="Eckart 势宽度 ρ")
    table: OptionalText = Field(default=None, description="tabulated 势的两列 CSV 路径 (r, V)")

    @model_validator(mode='after')
    def _check_table(self):
        if self.kind == 'tabulated' and not self.table:
            raise ValueError("kind=tabulated 时必须给出 table 路径")
        return self


class StateSection(Section):
    """初态 ψ₀"""
    kind: Literal['trapped_gaussian', 'c0_free', 'file'] = Field(default='trapped_gaussian', description="初态类型")
    rho: float = Field(default=1.0, gt=0, description="trapped_gaussian 的宽度参数 ρ")
    a1: float = Field(default=2.0, gt=0, description="c0_free 初态的第一个高斯指数")
    a2: float = Field(default=4.0, gt=0, description="c0_free 初态的第二个高斯指数")
    path: OptionalText = Field(default=None, description="file 初态的两列 CSV 路径 (r, ψ₀)")
    tail_rate: float = Field(default=1.0, gt=0, description="file 初态的高斯尾部衰减率 c₂")

    @model_validator(mode='after')
    def _check_path(self):
        if self.kind == 'file' and not self.path:
            raise ValueError("kind=file 时必须给出 path")
        if self.kind == 'c0_free' and self.a1 == self.a2:
            raise ValueError("c0_free 初态要求 a1 ≠ a2")
        return self


class ExpansionSection(Section):
    """极点展开参数"""
    alpha: float = Field(default=DEFAULT_ALPHA, gt=0, description="h_α 的参数 α")
    k_max: float = Field(default=DEFAULT_K_MAX, gt=0, description="极点模长截断 K_max")
    precision: int = Field(default=15, ge=15, description="十进制有效位数")
    r_values: FloatList = Field(default_factory=lambda: [0.5], description="求值位置 r")
    coefficient_method: Literal['ode', 'quad'] = Field(default='ode', description="C(k) 算法")
    workers: int = Field(default=1, ge=1, description="并发线程数")
    cell_size: float = Field(default=2.0, gt=0, description="共振搜索矩形边长")
    truncation_tol: float = Field(default=1e-6, gt=0, description="截断误差容差（相对）")
    sum_rule_tol: float = Field(default=1e-3, gt=0, description="求和规则相对缺陷容差")

    @field_validator('r_values')
    @classmethod
    def _check_r(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("至少需要一个 r")
        if any(r < 0 for r in value):
            raise ValueError("r 必须非负")
        return value


class ScheduleSection(Section):
    """时间采样：显式时刻，或 [t_min, t_max] 上的对数网格"""
    t_min: float = Field(default=0.01, gt=0, description="对数网格起点")
    t_max: float = Field(default=100.0, gt=0, description="对数网格终点")
    per_decade: int = Field(default=200, ge=1, description="每十倍的采样点数")
    times: FloatList = Field(default_factory=list, description="显式时刻，非空时优先")

    @model_validator(mode='after')
    def _check_times(self):
        if self.t_min >= self.t_max:
            raise ValueError(f"t_min={self.t_min} 必须小于 t_max={self.t_max}")
        if any(t < 0 for t in self.times):
            raise ValueError("时刻必须非负")
        return self


class CNSection(Section):
    """Crank–Nicolson 参考解"""
    dr: float = Field(default=DEFAULT_DR, gt=0, description="网格间距 Δr")
    dt: OptionalFloat = Field(default=None, gt=0, description="时间步长，默认 Δr²/4")
    L: OptionalFloat = Field(default=None, gt=0, description="盒子长度，默认按谱分位数自动选取")
    t_end: FloatList = Field(default_factory=lambda: [3.0], description="比较时刻")
    r_compare: float = Field(default=20.0, gt=0, description="比较区间 [0, r_compare]")

    @field_validator('t_end')
    @classmethod
    def _check_t_end(cls, value: List[float]) -> List[float]:
        if any(t <= 0 for t in value):
            raise ValueError("CN 比较时刻必须为正")
        return value


class OutputSection(Section):
    """输出与日志"""
    out_dir: str = Field(default="results", description="输出目录")
    log_level: str = Field(default="INFO", description="日志级别")
    quiet: bool = Field(default=False, description="不向标准输出打印日志")


class RunConfig(BaseModel):
    """一次运行的完整配置，INI 文件每节对应一个字段"""
    model_config = ConfigDict(extra='forbid')

    model: ModelSection = Field(default_factory=ModelSection, description="势模型")
    state: StateSection = Field(default_factory=StateSection, description="初态")
    expansion: ExpansionSection = Field(default_factory=ExpansionSection, description="极点展开")
    schedule: ScheduleSection = Field(default_factory=ScheduleSection, description="时间采样")
    cn: CNSection = Field(default_factory=CNSection, description="Crank–Nicolson")
    output: OutputSection = Field(default_factory=OutputSection, description="输出")

    @classmethod
    def from_ini(cls, path: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        if not parser.read(path, encoding='utf-8'):
            raise ConfigError(f"配置文件不存在或无法读取: {path}")
        data = {section: dict(parser.items(section)) for section in parser.sections()}
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"配置文件 {path} 无效:\n{e}")

    def to_ini(self, path: Optional[str] = None) -> str:
        """序列化为 INI 文本；给出 path 时同时写入文件"""
        lines = []
        for name in type(self).model_fields:
            lines.append(f"[{name}]")
            lines.extend(f"{key} = {_format_value(value)}"
                         for key, value in getattr(self, name).model_dump().items())
            lines.append("")
        text = "\n".join(lines)
        if path is not None:
            Path(path).write_text(text, encoding='utf-8')
        return text

    def with_overrides(self, overrides: Dict[Tuple[str, str], object]) -> "RunConfig":
        """按 (section, field) 覆盖，返回重新校验后的新配置"""
        data = self.model_dump()
        for (section, key), value in overrides.items():
            if value is None:
                continue
            if section not in data or key not in data[section]:
                raise ConfigError(f"未知配置项: {section}.{key}")
            data[section][key] = value
        try:
            return type(self).model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"覆盖后的配置无效:\n{e}")

    def expansion_config(self) -> ExpansionConfig:
        section = self.expansion
        return ExpansionConfig(alpha=section.alpha, k_max=section.k_max, precision=section.precision,
                               r_grid=list(section.r_values), truncation_tol=section.truncation_tol,
                               sum_rule_tol=section.sum_rule_tol, cell_size=section.cell_size,
                               workers=section.workers, coefficient_method=section.coefficient_method)

    def cn_config(self, t_end: float, L: float) -> CNConfig:
        return CNConfig(dr=self.cn.dr, L=L, t_end=t_end, dt=self.cn.dt)


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, list):
        return ", ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
