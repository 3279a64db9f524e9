"""
文件管理模块，用于处理MiniHAC生成的结果文件。
未指定输出路径时，结果保存在按日期和时间组织的会话目录中。
"""
import datetime
import os
import time
from typing import Optional


class FileManager:
    """文件管理器类，管理一次命令调用生成的结果文件。

    会话目录格式：results/年月日/时间前两位_时分秒+时间戳前两位/
    会话目录在第一次写入时才创建。
    """

    def __init__(self, base_dir: Optional[str] = None):
        """初始化文件管理器。

        Args:
            base_dir: 基础目录，默认为项目根目录下的results文件夹
        """
        if not base_dir:
            project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
            self.base_dir = os.path.join(project_root, "results")
        else:
            self.base_dir = base_dir
        self._session_dir: Optional[str] = None

    @staticmethod
    def _ensure_dir_exists(directory: str) -> None:
        """确保目录存在，如果不存在则创建。"""
        if directory:
            os.makedirs(directory, exist_ok=True)

    def _create_session_dir(self) -> str:
        """创建新的会话目录。

        Returns:
            新创建的会话目录路径
        """
        now = datetime.datetime.now()
        date_dir = os.path.join(self.base_dir, now.strftime("%Y%m%d"))
        time_prefix = now.strftime("%H%M")[0:2]
        timestamp = str(int(time.time()))
        session_dir = os.path.join(date_dir, f"{time_prefix}_{now.strftime('%H%M%S')}{timestamp[:2]}")
        self._ensure_dir_exists(session_dir)
        return session_dir

    @property
    def session_dir(self) -> str:
        """会话目录属性（首次访问时创建）。"""
        if self._session_dir is None:
            self._session_dir = self._create_session_dir()
        return self._session_dir

    def path_for(self, filename: str) -> str:
        """会话目录下某个结果文件的完整路径（首次调用时创建会话目录）。

        Args:
            filename: 文件名
        """
        return os.path.join(self.session_dir, filename)

    def save_file_to_path(self, content: str, file_path: str) -> str:
        """保存文本内容到指定的完整文件路径。

        Args:
            content: 要保存的文本内容
            file_path: 完整的文件保存路径，包括文件名

        Returns:
            保存的文件的完整路径
        """
        self._ensure_dir_exists(os.path.dirname(file_path))
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(content)
        return file_path
