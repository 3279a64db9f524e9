"""
常驻内存峰值采样模块。
在后台线程中周期性读取当前进程的 RSS，记录一段代码运行期间的最大值。
"""
import threading
from typing import Optional

import psutil

MB = 1024 * 1024


class PeakMemoryMonitor:
    """进程常驻内存（RSS）峰值采样器，作为上下文管理器使用。

    进入和退出时各采样一次，期间每隔 ``interval`` 秒采样一次。
    """

    def __init__(self, interval: float = 0.01):
        """初始化采样器。

        Args:
            interval: 采样间隔（秒）
        """
        self.interval = interval
        self.peak_bytes = 0
        self._process = psutil.Process()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _sample(self) -> None:
        rss = self._process.memory_info().rss
        if rss > self.peak_bytes:
            self.peak_bytes = rss

    def _loop(self) -> None:
        while not self._stop.wait(self.interval):
            self._sample()

    def __enter__(self) -> "PeakMemoryMonitor":
        self.peak_bytes = 0
        self._stop.clear()
        self._sample()
        self._thread = threading.Thread(target=self._loop, name="minihac-rss", daemon=True)
        self._thread.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        self._sample()

    @property
    def peak_mb(self) -> float:
        """峰值 RSS（MiB）"""
        return self.peak_bytes / MB
