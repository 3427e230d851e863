from dotenv import load_dotenv
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, IO, Optional, Union

import orjson

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def load_environment_variables(env_file: Optional[str] = None) -> None:
    """
    Load environment variables from .env file

    Args:
        env_file: Optional path to .env file. If None, searches in current directory
    """
    load_dotenv(dotenv_path=env_file)


def get_thread_count(key_name: str = "QGCAM_THREADS") -> int:
    """
    Get the worker thread cap from the environment

    Returns:
        int: thread count, 1 when the variable is unset

    Raises:
        ValueError: If the value is not a positive integer
    """
    value = os.getenv(key_name)
    if not value:
        return 1
    try:
        threads = int(value)
    except ValueError:
        raise ValueError(f"{key_name} must be a positive integer, got {value!r}")
    if threads < 1:
        raise ValueError(f"{key_name} must be a positive integer, got {threads}")
    return threads


def setup_logging(level: int = logging.INFO) -> None:
    """Human-readable log lines go to stderr; stdout stays machine-readable"""
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def dumps_line(record: Dict[str, Any]) -> bytes:
    """One JSON line with sorted keys so repeated runs produce identical bytes"""
    return orjson.dumps(record, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY) + b"\n"


class JsonLinesWriter:
    """Appends JSON records to a file and optionally echoes them to a stream"""

    def __init__(self, path: Optional[Union[str, Path]] = None, echo: Optional[IO[bytes]] = None):
        self.path = Path(path) if path is not None else None
        self.echo = echo
        self._handle = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "wb")

    def write(self, record: Dict[str, Any]) -> None:
        line = dumps_line(record)
        if self._handle is not None:
            self._handle.write(line)
        if self.echo is not None:
            self.echo.write(line)
            self.echo.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "JsonLinesWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
