# src/utils/logger.py
import logging
import sys
from pathlib import Path
from logging.handlers import RotatingFileHandler

_HANDLER_TAG = "_decay_handler"


def setup_logger(log_level: str = "INFO", log_file: str = "decay.log", quiet: bool = False,
                 log_dir: str = "logs"):
    """配置根日志：logs/ 下的轮转文件 + 标准输出（quiet 时省略）。

    重复调用时先移除上一次安装的处理器，不会重复输出。
    """
    log_dir = Path(log_dir)
    log_dir.mkdir(exist_ok=True)
    log_path = log_dir / log_file

    numeric_level = getattr(logging, log_level.upper(), logging.INFO)

    log_format = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            root_logger.removeHandler(handler)
            handler.close()

    file_handler = RotatingFileHandler(
        log_path,
        maxBytes=10*1024*1024,  # 10MB
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setFormatter(log_format)
    handlers = [file_handler]

    if not quiet:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(log_format)
        handlers.append(console_handler)

    root_logger.setLevel(numeric_level)
    for handler in handlers:
        setattr(handler, _HANDLER_TAG, True)
        root_logger.addHandler(handler)

    logging.info(f"日志已配置，级别: {log_level}，文件: {log_path}")
    return log_path
