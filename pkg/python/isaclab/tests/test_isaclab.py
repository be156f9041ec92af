# Copyright (c) 2020, ISACLAB DEVELOPERS.

import logging
import subprocess
import sys
import tempfile

import pytest

import isaclab
from isaclab.isaclab import LOG_HEADER


@pytest.mark.parametrize(
    "error, errcode",
    [
        (isaclab.ConfigError("bad field"), 1),
        (isaclab.InfeasibleScenarioError("floor"), 2),
        (isaclab.UnidentifiableGeometryError("null", direction="vertical"), 2),
        (isaclab.SolverError("nan"), 3),
    ],
)
def test_errcodes(error, errcode):
    assert isinstance(error, isaclab.IsacLabError)
    assert error.errcode == errcode


def test_unidentifiable_is_infeasible():
    e = isaclab.UnidentifiableGeometryError("null", direction="horizontal")
    assert isinstance(e, isaclab.InfeasibleScenarioError)
    assert e.direction == "horizontal"


@pytest.mark.parametrize("level", ["INFO", "DEBUG"])
def test_isaclab_csv_log(level):
    with tempfile.NamedTemporaryFile() as fp:
        isaclab.reinitialize(logging=True, log_file_name=fp.name, level=level)
        assert isaclab.is_initialized()
        logging.getLogger("isaclab.tests").info("bracket [1, 2]")
        isaclab._flush_logs()
        csv = fp.read()
        assert csv.find(LOG_HEADER.encode()) == 0
        assert csv.find(b"isaclab.tests,INFO") >= 0
        # fields with commas are quoted
        assert csv.find(b'"bracket [1, 2]"') >= 0
    isaclab.reinitialize()
    assert not isaclab.is_initialized()


def test_isaclab_csv_log_level_filters():
    with tempfile.NamedTemporaryFile() as fp:
        isaclab.reinitialize(
            logging=True, log_file_name=fp.name, level="WARNING"
        )
        logging.getLogger("isaclab.tests").info("dropped")
        isaclab._flush_logs()
        assert fp.read().find(b"dropped") < 0
    isaclab.reinitialize()


def test_isaclab_log_file_from_env(monkeypatch):
    with tempfile.NamedTemporaryFile() as fp:
        monkeypatch.setenv("ISACLAB_LOG_FILE", fp.name)
        isaclab.reinitialize(logging=True)
        isaclab._flush_logs()
        assert fp.read().startswith(LOG_HEADER.encode())
    isaclab.reinitialize()


def test_isaclab_log_requires_file(monkeypatch):
    monkeypatch.delenv("ISACLAB_LOG_FILE", raising=False)
    with pytest.raises(TypeError):
        isaclab.reinitialize(logging=True)
    assert not isaclab.is_initialized()


def test_isaclab_log_flushed_at_exit(tmp_path):
    log = tmp_path / "exit.csv"
    script = (
        "import logging, isaclab\n"
        f"isaclab.reinitialize(logging=True, log_file_name={str(log)!r})\n"
        "logging.getLogger('isaclab.tests').warning('last words')\n"
    )
    subprocess.run([sys.executable, "-c", script], check=True)
    text = log.read_text()
    assert text.startswith(LOG_HEADER)
    assert "isaclab.tests,WARNING,last words" in text
