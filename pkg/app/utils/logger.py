import logging
from sys import stderr
from pathlib import Path
from functools import wraps
from typing import Dict, Optional

ROOT_LOGGER_NAME = "defect_analytics"
LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(filename)s:%(funcName)s | %(message)s"


class SingletonLogger:
    """
    One configured logger per service name, all children of the
    ``defect_analytics`` root. Diagnostics go to stderr so that data written
    to stdout or report files never interleaves with log lines.
    """

    __instances: Dict[str, "SingletonLogger"] = {}
    __root_configured = False

    @staticmethod
    def getInstance(service_name: str = "DefectAnalytics", log_to_file: Optional[bool] = None):
        if service_name not in SingletonLogger.__instances:
            SingletonLogger.__instances[service_name] = SingletonLogger(service_name, log_to_file)
        return SingletonLogger.__instances[service_name]

    @staticmethod
    def configure(level: str = "INFO", log_to_file: bool = False, log_dir: Optional[str] = None):
        """
        Configures the root handler. Safe to call more than once; the last call wins.

        Args:
            level (str): Logging level name for the whole pipeline.
            log_to_file (bool): Also write ``<log_dir>/defect_analytics.log``.
            log_dir (str | None): Directory for the log file.
        """
        root = logging.getLogger(ROOT_LOGGER_NAME)
        for handler in list(root.handlers):
            root.removeHandler(handler)
            handler.close()

        root.setLevel(getattr(logging, level.upper(), logging.INFO))
        root.propagate = False
        formatter = logging.Formatter(LOG_FORMAT)

        console_handler = logging.StreamHandler(stderr)
        console_handler.setFormatter(formatter)
        root.addHandler(console_handler)

        if log_to_file:
            directory = Path(log_dir) if log_dir else Path.cwd() / "logs"
            directory.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(directory / f"{ROOT_LOGGER_NAME}.log")
            file_handler.setFormatter(formatter)
            root.addHandler(file_handler)

        SingletonLogger.__root_configured = True

    def __init__(self, service_name: str, log_to_file: Optional[bool] = None):
        if service_name in SingletonLogger.__instances:
            raise RuntimeError(f"SingletonLogger for {service_name} already instantiated")

        if not SingletonLogger.__root_configured:
            SingletonLogger.configure(log_to_file=bool(log_to_file))

        self.logger = logging.getLogger(f"{ROOT_LOGGER_NAME}.{service_name}")


def log_exceptions(msg: Optional[str] = None):
    def _decorator(fn):
        @wraps(fn)
        def _wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except Exception as exc:
                _logger = SingletonLogger.getInstance(fn.__module__.rsplit(".", 1)[-1]).logger
                _logger.exception(f"{msg or 'Error in ' + fn.__qualname__}: {exc}")
                raise
        return _wrapper
    return _decorator
