import json
import sys
from datetime import datetime, timezone
from typing import Optional, TextIO

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class AppException(Exception):
    def __init__(self, message: str, error_code: str = "INTERNAL_ERROR", exit_code: int = EXIT_NUMERICAL):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.exit_code = exit_code


class UsageException(AppException):
    def __init__(self, message: str = "Invalid usage"):
        super().__init__(message, "USAGE_ERROR", EXIT_USAGE)


class DataException(AppException):
    def __init__(self, message: str = "Invalid data", error_code: str = "DATA_ERROR"):
        super().__init__(message, error_code, EXIT_DATA)


class SchemaMismatchException(DataException):
    def __init__(self, message: str = "Schema mismatch"):
        super().__init__(message, "SCHEMA_MISMATCH")


class IngestionException(DataException):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, "INGESTION_ERROR")
        self.line = line


class NumericalException(AppException):
    def __init__(self, message: str = "Numerical failure", error_code: str = "NUMERICAL_ERROR"):
        super().__init__(message, error_code, EXIT_NUMERICAL)


class ConvergenceException(NumericalException):
    def __init__(self, message: str, max_violation: float):
        super().__init__(f"{message} (max KKT violation {max_violation:.3e})", "CONVERGENCE_ERROR")
        self.max_violation = max_violation


def handle_app_exception(exc: AppException, stream: Optional[TextIO] = None) -> int:
    """Report an AppException on stderr and return its exit code"""
    stream = stream or sys.stderr
    content = {
        "status": exc.exit_code,
        "error": exc.error_code,
        "message": exc.message,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    stream.write(json.dumps(content) + "\n")
    return exc.exit_code
