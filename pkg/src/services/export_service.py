# src/services/export_service.py
from pathlib import Path
import logging
import os

import aiofiles
import pandas as pd

logger = logging.getLogger(__name__)


class ExportService:
    """把结果表写成 CSV：逗号分隔、带表头、科学计数法，输入相同时输出逐字节相同。"""

    def __init__(self, digits: int = 15):
        self.supported_formats = ['.csv']
        self.max_file_size_mb = 500  # 最大文件大小限制(MB)
        self.digits = digits

    @property
    def float_format(self) -> str:
        # 有效位数 = 小数位 + 1
        return f"%.{max(self.digits - 1, 1)}e"

    def render(self, df: pd.DataFrame) -> str:
        return df.to_csv(index=False, float_format=self.float_format, lineterminator='\n')

    async def export_frame(self, df: pd.DataFrame, output_path: str) -> str:
        """导出一张表，返回实际写入的路径"""
        try:
            path = self._validate_output_path(Path(output_path))
            text = self.render(df)
            async with aiofiles.open(path, 'w', encoding='utf-8', newline='') as f:
                await f.write(text)
            self._validate_file_size(path)
            logger.info(f"已导出 {len(df)} 行到 {path}")
            return str(path)
        except Exception as e:
            logger.error(f"导出 {output_path} 时出错: {str(e)}")
            raise

    async def export_text(self, text: str, output_path: str) -> str:
        """写出 key = value 文本块"""
        path = Path(output_path)
        if not path.parent.exists():
            raise ValueError(f"输出目录不存在: {path.parent}")
        async with aiofiles.open(path, 'w', encoding='utf-8', newline='') as f:
            await f.write(text if text.endswith('\n') else text + '\n')
        logger.info(f"已写出 {path}")
        return str(path)

    def _validate_output_path(self, path: Path) -> Path:
        """验证输出路径的有效性"""
        if not path.suffix:
            path = Path(str(path) + '.csv')
            logger.info(f"添加默认扩展名.csv到输出路径: {path}")

        if path.suffix not in self.supported_formats:
            logger.warning(f"不支持的导出格式: {path.suffix}，将使用.csv格式")
            path = Path(str(path.with_suffix('')) + '.csv')

        if not path.parent.exists():
            raise ValueError(f"输出目录不存在: {path.parent}")

        if not os.access(path.parent, os.W_OK):
            raise ValueError(f"没有目录写入权限: {path.parent}")

        if path.exists() and not os.access(path, os.W_OK):
            raise ValueError(f"没有文件写入权限: {path}")
        return path

    def _validate_file_size(self, path: Path):
        """验证导出文件大小"""
        file_size_mb = path.stat().st_size / (1024 * 1024)
        if file_size_mb > self.max_file_size_mb:
            path.unlink()
            raise ValueError(f"导出文件大小 ({file_size_mb:.2f}MB) 超过上限 ({self.max_file_size_mb}MB)")
