"""
配置加载和管理模块
支持从config目录下的TOML配置文件加载聚类引擎配置
"""
import copy
import os
from typing import Any, Dict, Optional

import tomli
from loguru import logger

from core.errors import InvalidInputError
from core.linkage import LinkageKind

# 配置文件默认路径
CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config")
GLOBAL_CONFIG_PATH = os.path.join(CONFIG_DIR, "config_global.toml")

# 默认配置
DEFAULT_CONFIG = {
    "engine": {
        "leaf_capacity": 16,
        "threads": 1,
        "range_search": True,
    },
    "cache": {
        "comp": 0,
        "ward": 0,
        "avg1": 64,
        "avg2": 0,
    },
    "verify": {
        "max_points": 4096,
        "rtol": 1e-9,
    },
    "bench": {
        "repeats": 3,
    },
    "logging": {
        "level": "INFO",
        "log_dir": None,
    },
    "output": {
        "results_dir": None,
    },
}


class Config:
    """配置管理类"""

    def __init__(self, config_path: Optional[str] = None):
        """
        初始化配置

        Args:
            config_path: 配置文件路径，默认查找config目录下的配置文件

        Raises:
            InvalidInputError: 显式指定的配置文件不存在或无法解析
        """
        self.config = copy.deepcopy(DEFAULT_CONFIG)

        # 如果提供了配置文件路径，尝试加载
        if config_path:
            if not os.path.exists(config_path):
                raise InvalidInputError(f"配置文件不存在: {config_path}")
            self._load_from_toml(config_path)
        elif os.path.exists(GLOBAL_CONFIG_PATH):
            # 尝试从全局配置文件加载
            self._load_from_toml(GLOBAL_CONFIG_PATH)

    def _load_from_toml(self, config_path: str) -> None:
        """
        从TOML文件加载配置

        Args:
            config_path: TOML配置文件路径
        """
        try:
            with open(config_path, "rb") as f:
                toml_config = tomli.load(f)
        except (OSError, tomli.TOMLDecodeError) as e:
            raise InvalidInputError(f"加载配置文件 {config_path} 失败: {e}") from e

        # 递归合并配置
        self._merge_configs(self.config, toml_config)
        logger.debug(f"加载配置文件: {config_path}")

    def _merge_configs(self, target: Dict[str, Any], source: Dict[str, Any]) -> None:
        """
        递归合并配置

        Args:
            target: 目标配置
            source: 源配置
        """
        for key, value in source.items():
            if key in target and isinstance(target[key], dict) and isinstance(value, dict):
                self._merge_configs(target[key], value)
            else:
                target[key] = value

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """
        获取配置项

        Args:
            section: 配置区块
            key: 配置键
            default: 默认值

        Returns:
            配置值
        """
        value = self.config.get(section, {}).get(key, default)
        return default if value is None else value

    def cache_size_for(self, kind) -> int:
        """
        获取指定链接方式的默认缓存大小

        Args:
            kind: 链接方式（LinkageKind 或名称）

        Returns:
            每个簇的缓存表容量 s
        """
        kind = LinkageKind.parse(kind)
        size = int(self.get("cache", kind.value, kind.default_cache_size))
        if size < 0:
            raise InvalidInputError(f"[cache] {kind.value} 必须 >= 0, 当前为 {size}")
        return size
