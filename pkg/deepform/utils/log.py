import logging
from pathlib import Path

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(funcName)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# third-party loggers that flood DEBUG output
QUIET_LOGGERS = ("matplotlib", "PIL")


def _handler(handler: logging.Handler, level: int, formatter: logging.Formatter) -> logging.Handler:
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logging(
    log_file: str | Path | None = None,
    cli_level: int = logging.INFO,
    file_level: int = logging.DEBUG
) -> logging.Logger:
    """
    Route all deepform logging to stderr and, optionally, a file.

    Parameters
    ----------
    log_file : str | Path | None
        Log file path; parent directories are created. ``None`` logs to the console only.
    cli_level : int
        Console level.
    file_level : int
        File level; the file normally keeps the per-iteration DEBUG detail.

    Calling it again replaces the handlers of the previous call.
    """
    root = logging.getLogger()
    root.handlers.clear()
    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)

    root.addHandler(_handler(logging.StreamHandler(), cli_level, formatter))
    levels = [cli_level]
    if log_file is not None:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        root.addHandler(_handler(logging.FileHandler(log_file, encoding="utf-8"), file_level, formatter))
        levels.append(file_level)
    root.setLevel(min(levels))

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(max(logging.WARNING, root.level))

    root.debug(f"Logging to console at {logging.getLevelName(cli_level)}"
               + (f" and to {log_file}" if log_file is not None else ""))
    return root
