"""
日志记录模块，用于记录MiniHAC每次运行的过程。
每次运行生成一个日志文件，引擎内部的 loguru 日志也会写入该文件。
"""
import datetime
import os
import time
import uuid
from typing import Optional

from loguru import logger


class RunLogger:
    """运行日志记录器，记录一次命令调用的系统事件和每轮统计。

    日志文件路径格式：logs/年月日/时间前两位_时分秒+时间戳前两位.log
    """

    def __init__(self, log_dir: Optional[str] = None, level: str = "INFO"):
        """初始化日志记录器。

        Args:
            log_dir: 日志文件存储的目录，默认为项目根目录下的logs文件夹
            level: 写入文件的最低 loguru 日志级别
        """
        # 如果没有指定日志目录，使用默认目录
        if not log_dir:
            project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
            self.log_dir = os.path.join(project_root, "logs")
        else:
            self.log_dir = log_dir
        self.level = level.upper()

        self.log_file: Optional[str] = None
        self.run_id = str(uuid.uuid4())
        self._sink_id: Optional[int] = None

    def create_log_file(self) -> str:
        """创建新的日志文件并挂载 loguru 文件输出。

        Returns:
            日志文件的完整路径
        """
        now = datetime.datetime.now()
        timestamp = str(int(time.time()))

        # 创建日期目录
        date_dir = os.path.join(self.log_dir, now.strftime("%Y%m%d"))
        os.makedirs(date_dir, exist_ok=True)

        # 文件名：时间前两位_时分秒+时间戳前两位.log
        time_prefix = now.strftime("%H%M")[0:2]
        filename = f"{time_prefix}_{now.strftime('%H%M%S')}{timestamp[:2]}.log"
        self.log_file = os.path.join(date_dir, filename)

        with open(self.log_file, "w", encoding="utf-8") as f:
            f.write(f"运行ID: {self.run_id}\n")
            f.write("=== MiniHAC运行日志 ===\n")
            f.write(f"开始时间: {now.strftime('%Y-%m-%d %H:%M:%S')}\n")
            f.write("===================\n\n")

        self._sink_id = logger.add(
            self.log_file,
            level=self.level,
            format="[{time:HH:mm:ss}] {level: <7} {name}: {message}",
            encoding="utf-8",
            enqueue=False,
        )
        return self.log_file

    def _ensure_file(self) -> None:
        if not self.log_file:
            self.create_log_file()

    def log_system_event(self, event_type: str, details: str = "") -> None:
        """记录系统事件。

        Args:
            event_type: 事件类型
            details: 事件详情
        """
        self._ensure_file()
        logger.bind(run_id=self.run_id).info(f"系统事件 - {event_type}: {details}")

    def log_round(self, round_index: int, terminals: int, active: int, merges: int) -> None:
        """记录一轮合并的统计。"""
        self._ensure_file()
        logger.debug(f"第 {round_index} 轮: |Z|={terminals} |A|={active} 合并={merges}")

    def save_complete_log(self) -> None:
        """在运行结束时写入结尾并卸载文件输出。"""
        if not self.log_file:
            return
        if self._sink_id is not None:
            logger.remove(self._sink_id)
            self._sink_id = None
        with open(self.log_file, "a", encoding="utf-8") as f:
            now = datetime.datetime.now()
            f.write("\n===================\n")
            f.write(f"结束时间: {now.strftime('%Y-%m-%d %H:%M:%S')}\n")
            f.write("=== 日志记录结束 ===\n")
