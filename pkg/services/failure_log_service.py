import logging
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

RECORD_LIMIT = 1900


def format_failure(source: str, message: str, exc: Optional[BaseException] = None) -> str:
    record = f"[FAIL] {source}\n{message}"
    if exc is not None:
        record += f"\n{type(exc).__name__}: {exc}"

    if len(record) > RECORD_LIMIT:
        record = record[:RECORD_LIMIT - 3] + "..."
    return record


def report_failure(
    source: str,
    message: str,
    exc: Optional[BaseException] = None,
    record_path=None,
    level: int = logging.ERROR,
) -> str:
    """Log a failure record and optionally append it to a record file.

    Returns the record so callers can surface it.
    """
    record = format_failure(source, message, exc)
    logger.log(level, record.replace("\n", " | "))

    if record_path is not None:
        path = Path(record_path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as handle:
                handle.write(record + "\n\n")
        except OSError as write_err:
            logger.debug(f"Failed to write failure record to {path}: {write_err}")
    return record
