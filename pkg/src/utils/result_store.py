# src/utils/result_store.py
import json
import os
import logging
from typing import Dict, Any, Optional

import numpy as np

logger = logging.getLogger(__name__)


class ResultStore:
    """保存与读取每个子命令的运行摘要（k₀、极点数、t_alg、系数、求和规则缺陷）

    每个子命令一个 JSON 文件：<output_dir>/<command>_summary.json。
    """

    def __init__(self, output_dir: str = "results"):
        self.output_dir = output_dir
        os.makedirs(output_dir, exist_ok=True)

    def _path(self, command: str) -> str:
        return os.path.join(self.output_dir, f"{command}_summary.json")

    def save_result(self, command: str, result: Dict[str, Any]) -> str:
        """保存摘要，返回文件路径"""
        file_path = self._path(command)
        try:
            def numeric_encoder(obj):
                if isinstance(obj, complex):
                    return [obj.real, obj.imag]
                if isinstance(obj, np.generic):
                    return obj.item()
                if isinstance(obj, np.ndarray):
                    return obj.tolist()
                if hasattr(obj, 'to_dict') and callable(getattr(obj, 'to_dict')):
                    return obj.to_dict()
                if hasattr(obj, 'model_dump') and callable(getattr(obj, 'model_dump')):
                    return obj.model_dump()
                raise TypeError(f"Object of type {type(obj)} is not JSON serializable")

            with open(file_path, 'w', encoding='utf-8') as f:
                json.dump(result, f, ensure_ascii=False, indent=2, sort_keys=True,
                          default=numeric_encoder)
            logger.info(f"已保存 {command} 的运行摘要到 {file_path}")
            return file_path
        except Exception as e:
            logger.error(f"保存 {command} 摘要时出错: {str(e)}")
            raise

    def load_result(self, command: str) -> Optional[Dict[str, Any]]:
        """读取摘要，文件不存在或损坏时返回 None"""
        file_path = self._path(command)
        if not os.path.exists(file_path):
            logger.warning(f"找不到 {command} 的摘要文件: {file_path}")
            return None

        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                result = json.load(f)
            logger.info(f"已加载 {command} 的运行摘要")
            return result
        except Exception as e:
            logger.error(f"加载 {command} 摘要时出错: {str(e)}")
            return None
