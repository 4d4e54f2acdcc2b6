import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import numpy as np

from bridgesim.core.config import LOG_LEVEL


def to_jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class JSONFormatter(logging.Formatter):
    """
    Formatter that outputs JSON strings for structured logging.
    """
    def format(self, record: logging.LogRecord) -> str:
        log_record = {
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="milliseconds"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        # logger.info("msg", extra={"event": "...", "run_id": "..."})
        if hasattr(record, "event"):
            log_record["event"] = record.event

        if hasattr(record, "run_id"):
            log_record["run_id"] = record.run_id

        if hasattr(record, "data"):
            log_record.update(record.data)

        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_record, default=to_jsonable)


def get_logger(name: str, level: Optional[int] = None) -> logging.Logger:
    """
    JSON logger writing to stdout. level defaults to BRIDGESIM_LOG_LEVEL.
    """
    logger = logging.getLogger(name)
    logger.setLevel(LOG_LEVEL if level is None else level)

    # one stdout handler per named logger
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(JSONFormatter())
        logger.addHandler(handler)

    return logger


def log_event(logger: logging.Logger, event: str, data: Dict[str, Any], level=logging.INFO):
    """
    Log a structured event. The data keys become top-level fields of the
    JSON record; the message is the event name.
    """
    logger.log(level, event, extra={"event": event, "data": data})
