from dotenv import load_dotenv
import os

from src.utils.errors import ConfigError

# 环境变量名 -> (RunConfig 中的字段路径, 类型)
ENV_OVERRIDES = {
    'DECAY_ALPHA': (('expansion', 'alpha'), float),
    'DECAY_KMAX': (('expansion', 'k_max'), float),
    'DECAY_PRECISION': (('expansion', 'precision'), int),
    'DECAY_OUT': (('output', 'out_dir'), str),
    'DECAY_LOG_LEVEL': (('output', 'log_level'), str),
}


def load_env_overrides(dotenv_path: str = None):
    """
    读取 .env 与进程环境中的覆盖项
    返回: dict，键为 (section, field)，只包含已设置的变量
        - DECAY_ALPHA: h_α 的参数 α
        - DECAY_KMAX: 极点模长截断
        - DECAY_PRECISION: 十进制有效位数
        - DECAY_OUT: 输出目录
        - DECAY_LOG_LEVEL: 日志级别
    """
    if dotenv_path:
        load_dotenv(dotenv_path)
    else:
        load_dotenv()

    overrides = {}
    for name, (path, cast) in ENV_OVERRIDES.items():
        raw = os.getenv(name)
        if raw is None or raw.strip() == "":
            continue
        try:
            overrides[path] = cast(raw.strip())
        except ValueError:
            raise ConfigError(f"环境变量 {name}={raw!r} 无法解析为 {cast.__name__}")

    return overrides
