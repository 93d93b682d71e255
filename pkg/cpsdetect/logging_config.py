import logging
import sys
import time
import uuid
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator, Optional

from pythonjsonlogger.json import JsonFormatter

logger = logging.getLogger(__name__)
run_id_var: ContextVar[str] = ContextVar("run_id", default="-")

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - [%(run_id)s] %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(run_id)s %(message)s"


class RunIdFilter(logging.Filter):
    """Stamps the current run id on every record"""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = run_id_var.get()
        return True


def new_run_id(run_id: Optional[str] = None) -> str:
    run_id = run_id or uuid.uuid4().hex
    run_id_var.set(run_id)
    return run_id


def configure_logging(level: str = "INFO", fmt: str = "json") -> None:
    """Configure the root logger once per process"""
    handler = logging.StreamHandler(sys.stderr)
    handler.addFilter(RunIdFilter())
    if fmt == "json":
        handler.setFormatter(JsonFormatter(JSON_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level.upper())


@contextmanager
def log_duration(log: logging.Logger, label: str, **fields: object) -> Iterator[None]:
    """Log the elapsed wall time of a stage"""
    start = time.perf_counter()
    try:
        yield
    finally:
        duration_ms = (time.perf_counter() - start) * 1000
        extra = ", ".join(f"{k}={v}" for k, v in fields.items())
        log.info("%s finished: %s%.1fms", label, f"{extra}, " if extra else "", duration_ms)
