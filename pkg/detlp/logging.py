"""
Structured logging for detlp solver runs.

Every event is one compact JSON object per line, so a run of the simplex
solver, a scenario batch, or a certificate verification can be replayed and
filtered with ordinary line tools.

Core Components:
- JsonlLogger: append-only JSON Lines writer with timestamp injection
- DebugLogger: level filtering with prefixed event names
- performance_trace: timing decorator for solver methods
- ErrorContext: failure records with location, stack and context

Usage Patterns:
    logger = DebugLogger("./data/logs/detlp_events.jsonl", level="DEBUG")
    logger.info("scenario_solved", {"scenario": "dsym", "value": 0.9})

    class SimplexSolver:
        @performance_trace()
        def solve(self, lp): ...

    try:
        verify_certificate(cert, spec, q, scenario)
    except CertificateError as e:
        ErrorContext.log_operation_error(logger, "verify_certificate", e)
"""
import functools
import inspect
import json
import os
import threading
import time
from typing import Any, Callable, Dict, Optional

from .types import AppConfig
from .utils import now_ms


class JsonlLogger:
    """JSON Lines logger for structured event logging.

    File Format:
        {"ts_ms": 1703123456789, "event": "lp_solved", "status": "optimal", "iterations": 412}

    Args:
        path: File path for log output (parent directories created if missing)
    """

    def __init__(self, path: str):
        self.path = path
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        # Line buffering keeps each event on disk as soon as it is written
        self._fp = open(path, "a", buffering=1)
        self._lock = threading.Lock()

    def write(self, event_type: str, payload: Dict[str, Any]) -> None:
        """Write one event record.

        Args:
            event_type: Event identifier (e.g., "lp_solved", "certificate_verified")
            payload: Event data merged into the record
        """
        rec = {"ts_ms": now_ms(), "event": event_type, **payload}
        line = json.dumps(rec, separators=(",", ":"), ensure_ascii=False, default=str) + "\n"
        # scenario_table may log from worker threads
        with self._lock:
            self._fp.write(line)

    def close(self) -> None:
        """Flush and close the log file handle. Safe to call twice."""
        try:
            self._fp.close()
        except Exception:
            pass


class DebugLogger(JsonlLogger):
    """JsonlLogger with hierarchical levels.

    Levels follow the standard library numbering (DEBUG 10 ... CRITICAL 50).
    DEBUG, WARNING, ERROR and CRITICAL events get a "debug_", "warn_",
    "error_" or "critical_" prefix; INFO events are written unprefixed.

    Args:
        path: Log file output path
        level: Minimum level written (case-insensitive, unknown names mean INFO)
    """

    LEVELS = {
        'DEBUG': 10,
        'INFO': 20,
        'WARNING': 30,
        'ERROR': 40,
        'CRITICAL': 50
    }

    def __init__(self, path: str, level: str = 'INFO'):
        super().__init__(path)
        self.level = self.LEVELS.get(level.upper(), self.LEVELS['INFO'])

    def debug(self, event_type: str, payload: Dict[str, Any]) -> None:
        """Pivot-level detail: entering/leaving variables, refactorizations."""
        if self.level <= self.LEVELS['DEBUG']:
            self.write(f"debug_{event_type}", payload)

    def info(self, event_type: str, payload: Dict[str, Any]) -> None:
        """Normal progress: LP solved, scenario value, certificate verdict."""
        if self.level <= self.LEVELS['INFO']:
            self.write(event_type, payload)

    def warning(self, event_type: str, payload: Dict[str, Any]) -> None:
        """Suspicious but recoverable: degenerate settings, Bland fallback."""
        if self.level <= self.LEVELS['WARNING']:
            self.write(f"warn_{event_type}", payload)

    def error(self, event_type: str, payload: Dict[str, Any]) -> None:
        """Failed operation: numerical failure, bad input file."""
        if self.level <= self.LEVELS['ERROR']:
            self.write(f"error_{event_type}", payload)

    def critical(self, event_type: str, payload: Dict[str, Any]) -> None:
        """Verification failures that indicate a solver bug."""
        if self.level <= self.LEVELS['CRITICAL']:
            self.write(f"critical_{event_type}", payload)


def make_logger(cfg: AppConfig) -> Optional[DebugLogger]:
    """Build the run logger from configuration; None when log_path is unset."""
    if not cfg.log_path:
        return None
    return DebugLogger(cfg.log_path, level=cfg.logging.level)


def performance_trace(logger_attr: str = 'logger'):
    """Decorator timing a method when its instance carries a DEBUG-level logger.

    The logger is looked up as ``getattr(self, logger_attr)``. Without a
    DebugLogger at DEBUG level the wrapped method runs untouched.

    Log Output:
        {"ts_ms": ..., "event": "debug_perf_function",
         "function": "detlp.lp.SimplexSolver.solve", "duration_ms": 15.234, "args_count": 2}
    """

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            if not args:
                return func(*args, **kwargs)

            logger = getattr(args[0], logger_attr, None)
            if not isinstance(logger, DebugLogger) or logger.level > DebugLogger.LEVELS['DEBUG']:
                return func(*args, **kwargs)

            start_time = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                duration_ms = (time.perf_counter() - start_time) * 1000
                logger.error("perf_function_error", {
                    "function": f"{func.__module__}.{func.__qualname__}",
                    "duration_ms": round(duration_ms, 3),
                    "error": str(e),
                    "error_type": type(e).__name__
                })
                raise
            duration_ms = (time.perf_counter() - start_time) * 1000
            logger.debug("perf_function", {
                "function": f"{func.__module__}.{func.__qualname__}",
                "duration_ms": round(duration_ms, 3),
                "args_count": len(args) + len(kwargs)
            })
            return result

        return wrapper

    return decorator


class ErrorContext:
    """Failure records with location, stack trace and caller context.

    Log Output:
        {
            "ts_ms": 1703123456789,
            "event": "error_detailed_error",
            "error_message": "basis matrix became singular",
            "error_type": "LpNumericalError",
            "function": "solve",
            "file": "detlp/lp.py",
            "line": 142,
            "stack_trace": "Traceback (most recent call last):\\n...",
            "context": {"operation": "solve_scenario", "scenario": "dsym"}
        }
    """

    @staticmethod
    def capture_error(
        logger: DebugLogger,
        error: Exception,
        context: Optional[Dict[str, Any]] = None,
        include_stack: bool = True
    ) -> None:
        """Log an exception with the location of the code that handled it.

        Args:
            logger: DebugLogger receiving the record (written at ERROR level)
            error: Exception to describe
            context: Extra structured context
            include_stack: Attach the formatted traceback
        """
        import traceback

        function_name = "unknown"
        file_name = "unknown"
        line_number = 0

        frame = inspect.currentframe()
        try:
            # skip capture_error -> log_operation_error -> caller
            caller_frame = frame
            for _ in range(3):
                if caller_frame:
                    caller_frame = caller_frame.f_back
            if caller_frame:
                function_name = caller_frame.f_code.co_name
                file_name = caller_frame.f_code.co_filename
                line_number = caller_frame.f_lineno
        except AttributeError:
            pass
        finally:
            del frame

        error_payload = {
            "error_message": str(error),
            "error_type": type(error).__name__,
            "function": function_name,
            "file": file_name,
            "line": line_number,
            "timestamp": now_ms()
        }
        if include_stack:
            error_payload["stack_trace"] = traceback.format_exc()
        if context:
            error_payload["context"] = context

        logger.error("detailed_error", error_payload)

    @staticmethod
    def log_operation_error(
        logger: DebugLogger,
        operation: str,
        error: Exception,
        context: Optional[Dict[str, Any]] = None
    ) -> None:
        """Log an error raised inside a named operation.

        Example:
            ErrorContext.log_operation_error(logger, "solve_scenario", e, {
                "scenario": "dmin:Bob", "fixed": {"Alice": 1.0}
            })
        """
        full_context = {
            "operation": operation,
            **(context or {})
        }
        ErrorContext.capture_error(logger, error, full_context)
