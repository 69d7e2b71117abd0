"""
Unit tests for structured logging setup
"""

import io
import json
import logging

import pytest
import structlog
from structlog.testing import capture_logs

from utils.logging_config import APP_NAME, get_logger, setup_logging, timed_operation


@pytest.fixture(autouse=True)
def restore_logging():
    yield
    for handler in list(logging.root.handlers):
        logging.root.removeHandler(handler)
        handler.close()
    structlog.reset_defaults()


class TestSetupLogging:
    """Test JSON and file output"""

    def test_json_lines_carry_app_context(self):
        stream = io.StringIO()
        setup_logging("INFO", json_logs=True, stream=stream)
        get_logger("tests.json").info("model_saved", features=12)
        record = json.loads(stream.getvalue().strip().splitlines()[-1])
        assert record["event"] == "model_saved"
        assert record["features"] == 12
        assert record["app"] == APP_NAME
        assert record["level"] == "info"

    def test_level_filters_debug(self):
        stream = io.StringIO()
        setup_logging("WARNING", json_logs=True, stream=stream)
        get_logger("tests.level").info("quiet")
        assert stream.getvalue() == ""

    def test_log_file(self, tmp_path):
        path = tmp_path / "logs" / "crf.log"
        setup_logging("INFO", json_logs=True, log_file=path, stream=io.StringIO())
        get_logger("tests.file").info("written_to_file")
        for handler in logging.root.handlers:
            handler.flush()
        assert "written_to_file" in path.read_text()


class TestTimedOperation:
    """Test the performance context manager"""

    def test_reports_duration(self):
        with capture_logs() as logs:
            with timed_operation(get_logger("tests.timed"), "featurize", instances=3):
                pass
        assert logs[-1]["event"] == "performance_metric"
        assert logs[-1]["operation"] == "featurize"
        assert logs[-1]["instances"] == 3
        assert logs[-1]["duration_ms"] >= 0.0

    def test_reports_even_on_error(self):
        with capture_logs() as logs:
            with pytest.raises(RuntimeError):
                with timed_operation(get_logger("tests.failing"), "explode"):
                    raise RuntimeError("boom")
        assert logs[-1]["operation"] == "explode"
