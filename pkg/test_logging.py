#!/usr/bin/env python3
"""
Tests for the simplified logging system.
"""

import io
import logging

from utils.logging import LoggingMixin


class RecordingApp(LoggingMixin):
    def __init__(self):
        self.stream = io.StringIO()
        super().__init__(console=self.stream)

    @property
    def lines(self):
        return self.stream.getvalue().splitlines()


def test_markers_become_text_prefixes():
    app = RecordingApp()
    app.log_message("✅ Checkpoint saved")
    app.log_message("❌ Error loading config: bad")
    app.log_message("⚠️ Configuration file not found")
    assert app.lines[0].endswith("SUCCESS: Checkpoint saved")
    assert app.lines[1].endswith("ERROR: Error loading config: bad")
    assert app.lines[2].endswith("WARNING: Configuration file not found")
    assert all(line.startswith("[") for line in app.lines)


def test_detailed_logs_hidden_until_verbose():
    app = RecordingApp()
    app.log_message("📊 epoch 1 step 0: total=1.0")
    app.log_message("🔍 window 3 selected")
    assert app.lines == []

    app.set_verbose_logging(True)
    app.log_message("📊 epoch 1 step 1: total=0.9")
    assert app.lines[-1].endswith("INFO: epoch 1 step 1: total=0.9")


def test_detailed_logs_still_reach_the_logger(caplog):
    app = RecordingApp()
    with caplog.at_level(logging.DEBUG, logger="csl"):
        app.log_message("📊 epoch 2 step 3: total=0.5")
    assert any("epoch 2 step 3" in r.getMessage() and r.levelno == logging.DEBUG for r in caplog.records)


def test_marker_levels(caplog):
    app = RecordingApp()
    with caplog.at_level(logging.DEBUG, logger="csl"):
        app.log_message("❌ broken")
        app.log_message("⚠️ careful")
        app.log_message("plain message")
    levels = [r.levelno for r in caplog.records]
    assert levels == [logging.ERROR, logging.WARNING, logging.INFO]


def test_silent_console():
    app = LoggingMixin(console=None)
    app.log_message("✅ nothing printed")
    app.record_operation("Train", "Success", "3 epochs")
    assert app.operation_history[0][1:] == ("Train", "Success", "3 epochs")


def test_clear_logs_empties_history():
    app = RecordingApp()
    app.record_operation("Encode", "Success", "out")
    app.clear_logs()
    assert app.operation_history == []
