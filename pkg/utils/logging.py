"""
Logging utilities for the application.
"""

import datetime
import logging
import sys

LOGGER_NAME = "csl"

# Console stream resolved at write time so redirected stderr is honoured
STDERR = object()

MARKER_PREFIXES = {
    "🔍": "INFO:",
    "📊": "INFO:",
    "🚀": "INFO:",
    "✅": "SUCCESS:",
    "❌": "ERROR:",
    "⚠️": "WARNING:",
    "💾": "INFO:",
    "📁": "INFO:",
    "⏱️": "INFO:",
}

MARKER_LEVELS = {
    "🔍": logging.DEBUG,
    "📊": logging.DEBUG,
    "⚠️": logging.WARNING,
    "❌": logging.ERROR,
}

# Per-step chatter: file log only unless verbose logging is on
DETAILED_MARKERS = ("🔍", "📊")


class LoggingMixin:
    """Mixin class providing logging functionality"""

    def __init__(self, console=STDERR):
        self.verbose_logging = False  # Control detailed logging
        self.console = console
        self.operation_history = []
        self.logger = logging.getLogger(f"{LOGGER_NAME}.{type(self).__name__}")

    def log_message(self, message, level=None):
        """Log a message to the logger and, unless filtered, to the console"""
        if level is None:
            level = self._marker_level(message)
        elif isinstance(level, str):
            level = logging.getLevelName(level.upper())
            if not isinstance(level, int):
                level = logging.INFO

        simplified_message = self._simplify_message(message)
        self.logger.log(level, simplified_message)

        # Filter out detailed logs unless verbose mode is enabled
        if not self.verbose_logging and self._is_detailed_log(message):
            return

        stream = sys.stderr if self.console is STDERR else self.console
        if stream is None:
            return
        timestamp = datetime.datetime.now().strftime("%H:%M:%S")
        try:
            stream.write(f"[{timestamp}] {simplified_message}\n")
            stream.flush()
        except (OSError, ValueError):
            # Console might be closed, ignore logging errors
            pass

    def _is_detailed_log(self, message):
        """Check if a message is a detailed log that should be filtered out"""
        return any(indicator in message for indicator in DETAILED_MARKERS)

    def _marker_level(self, message):
        for marker, level in MARKER_LEVELS.items():
            if marker in message:
                return level
        return logging.INFO

    def _simplify_message(self, message):
        """Replace emoji markers with plain text prefixes"""
        simplified = message
        for marker, replacement in MARKER_PREFIXES.items():
            simplified = simplified.replace(marker, replacement)
        return " ".join(simplified.split())

    def clear_logs(self):
        """Clear the operation history"""
        self.operation_history.clear()
        self.log_message("Logs cleared")

    def record_operation(self, operation, status, details):
        """Record an operation in the history"""
        timestamp = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        self.operation_history.append((timestamp, operation, status, details))

    def set_verbose_logging(self, enabled):
        """Enable or disable verbose logging"""
        self.verbose_logging = enabled
        if enabled:
            self.log_message("INFO: Verbose logging enabled")
        else:
            self.log_message("INFO: Verbose logging disabled")
