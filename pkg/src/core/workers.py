"""
Thread-pool evaluation of independent per-cube work.

Each task runs on a Qt worker thread; results are gathered under a mutex and
handed back in submission order, so the caller's reduction order never
depends on scheduling.
"""

import logging
import os
from typing import Any, Callable, Iterable, Optional, Sequence

from PySide6.QtCore import QMutex, QMutexLocker, QRunnable, QThread, QThreadPool

logger = logging.getLogger(__name__)

THREADS_ENV = "MC_THREADS"


def thread_count(requested: Optional[int] = None) -> int:
    """
    Resolve the worker count.

    An explicit request wins; otherwise ``MC_THREADS`` caps parallelism and
    an absent or unusable value means all cores.
    """
    if requested is not None and requested > 0:
        return int(requested)
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            value = int(raw)
            if value > 0:
                return value
        except ValueError:
            pass
        logger.warning("Ignoring invalid %s=%r", THREADS_ENV, raw)
    return max(1, QThread.idealThreadCount())


class _Task(QRunnable):
    """One unit of work; stores its result (or exception) in the shared slot list."""

    def __init__(self, index: int, fn: Callable[[Any], Any], item: Any,
                 results: list, errors: list, mutex: QMutex):
        super().__init__()
        self.setAutoDelete(True)
        self._index = index
        self._fn = fn
        self._item = item
        self._results = results
        self._errors = errors
        self._mutex = mutex

    def run(self):
        try:
            value = self._fn(self._item)
        except Exception as e:  # handed to the caller thread
            with QMutexLocker(self._mutex):
                self._errors.append((self._index, e))
            return
        with QMutexLocker(self._mutex):
            self._results[self._index] = value


class ParallelEvaluator:
    """Maps a function over items on a private ``QThreadPool``."""

    def __init__(self, threads: Optional[int] = None):
        self.threads = thread_count(threads)
        self._pool: Optional[QThreadPool] = None

    @property
    def pool(self) -> QThreadPool:
        if self._pool is None:
            self._pool = QThreadPool()
            self._pool.setMaxThreadCount(self.threads)
        return self._pool

    def map(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> list:
        """Apply ``fn`` to every item; results follow the order of ``items``."""
        items: Sequence[Any] = list(items)
        if not items:
            return []

        if self.threads == 1 or len(items) == 1:
            return [fn(item) for item in items]

        results: list = [None] * len(items)
        errors: list = []
        mutex = QMutex()
        for index, item in enumerate(items):
            self.pool.start(_Task(index, fn, item, results, errors, mutex))
        self.pool.waitForDone()

        if errors:
            errors.sort(key=lambda pair: pair[0])
            raise errors[0][1]
        return results
