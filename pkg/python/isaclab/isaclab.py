# Copyright (c) 2020, ISACLAB DEVELOPERS.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
import atexit
import csv
import io
import logging as _logging
import os

LOG_HEADER = "Time,Logger,Level,Message"

_log_handler = None


# Errors
class IsacLabError(Exception):
    def __init__(self, errcode, msg):
        self.errcode = errcode
        super(IsacLabError, self).__init__(msg)


class ConfigError(IsacLabError):
    def __init__(self, msg):
        super(ConfigError, self).__init__(1, msg)


class InfeasibleScenarioError(IsacLabError):
    def __init__(self, msg):
        super(InfeasibleScenarioError, self).__init__(2, msg)


class UnidentifiableGeometryError(InfeasibleScenarioError):
    def __init__(self, msg, direction=None):
        self.direction = direction
        super(UnidentifiableGeometryError, self).__init__(msg)


class SolverError(IsacLabError):
    def __init__(self, msg):
        super(SolverError, self).__init__(3, msg)


class CsvEventFormatter(_logging.Formatter):
    """
    Formats a log record as one CSV row matching ``LOG_HEADER``.
    """

    def format(self, record):
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow(
            [
                self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
                record.name,
                record.levelname,
                record.getMessage(),
            ]
        )
        return buf.getvalue()


def _initialize():
    # library code never prints unless a sink is attached
    _logging.getLogger("isaclab").addHandler(_logging.NullHandler())


def reinitialize(logging=False, log_file_name=None, level="INFO"):
    """
    Detaches any event log previously attached by this function and, when
    requested, attaches a new one.

    Parameters
    ----------
    logging : bool, default False
        If True, record solver, optimizer and sweep events of every
        ``isaclab`` logger into a CSV file.
    log_file_name : str
        Name of the log file. If not specified, the environment variable
        ISACLAB_LOG_FILE is used. A TypeError is thrown if neither is
        available.
    level : str or int, default "INFO"
        Minimum level recorded. "DEBUG" includes per-iteration solver
        residuals.
    """
    global _log_handler

    logger = _logging.getLogger("isaclab")
    if _log_handler is not None:
        logger.removeHandler(_log_handler)
        _log_handler.close()
        _log_handler = None

    if not logging:
        return

    if log_file_name is None:
        log_file_name = os.environ.get("ISACLAB_LOG_FILE")
    if log_file_name is None:
        raise TypeError(
            "No log file name given and ISACLAB_LOG_FILE is not set"
        )

    handler = _logging.FileHandler(log_file_name, mode="w")
    handler.stream.write(LOG_HEADER + "\n")
    handler.setFormatter(CsvEventFormatter())
    handler.setLevel(level)
    logger.addHandler(handler)
    logger.setLevel(level)
    _log_handler = handler


def is_initialized():
    """
    Returns true if an event log is attached, false otherwise
    """
    return _log_handler is not None


def _flush_logs():
    if _log_handler is not None:
        _log_handler.flush()


atexit.register(_flush_logs)
