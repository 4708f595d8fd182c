# utils.py - Utility functions for the path-entanglement certification toolkit

import hashlib
import json
import logging
import math
import operator
import os
from datetime import datetime

from rich.logging import RichHandler

from config import *

# -----------------------
# ERRORS
# -----------------------

class PathCertError(Exception):
    """Base class for every error raised by the toolkit"""
    exit_code = EXIT_VALIDATION


class ValidationError(PathCertError):
    """Input violates a documented precondition"""


class InvalidDimensionError(ValidationError):
    pass


class InvalidParameterError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class InvalidPairError(ValidationError):
    pass


class AssumptionViolatedError(ValidationError):
    """An entropy bound was asked for outside the regime where it holds"""


class UndefinedVisibilityError(ValidationError):
    pass


class LayoutError(PathCertError):
    """Optical network touches ports it does not declare, or merges two modes"""


class IncompleteDataError(PathCertError):
    exit_code = EXIT_INCOMPLETE

    def __init__(self, message, missing=None):
        self.missing = sorted(missing or [])
        if self.missing:
            shown = ", ".join(self.missing[:8])
            more = f" (+{len(self.missing) - 8} more)" if len(self.missing) > 8 else ""
            message = f"{message}: missing {shown}{more}"
        super().__init__(message)


class VerificationError(PathCertError):
    exit_code = EXIT_VERIFICATION

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)

# -----------------------
# LOGGING
# -----------------------

def setup_directories(*extra):
    """Create necessary directories if they don't exist"""
    for directory in (LOGS_DIR, *extra):
        if directory and not os.path.exists(directory):
            os.makedirs(directory)
            log_message(f"Created directory: {directory}", "DEBUG")

def setup_logging(level=None):
    """Setup logging configuration"""
    setup_directories()

    log_filename = os.path.join(LOGS_DIR, f"{TOOL_NAME}_{datetime.now().strftime('%Y%m%d')}.log")

    handlers = [logging.FileHandler(log_filename)]
    handlers.append(RichHandler(show_path=False) if DEBUG_MODE else logging.NullHandler())

    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper()),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )

def log_message(message, level="INFO"):
    """Log a message with the specified level"""
    logger = logging.getLogger(TOOL_NAME)

    if level.upper() == "DEBUG":
        logger.debug(message)
    elif level.upper() == "INFO":
        logger.info(message)
    elif level.upper() == "WARNING":
        logger.warning(message)
    elif level.upper() == "ERROR":
        logger.error(message)
    elif level.upper() == "CRITICAL":
        logger.critical(message)

# -----------------------
# NUMERIC HELPERS
# -----------------------

def is_power_of_two(n):
    try:
        n = operator.index(n)
    except TypeError:
        return False
    return n >= 1 and (n & (n - 1)) == 0

def log2_int(n):
    """Exponent of a power of two"""
    if not is_power_of_two(n):
        raise InvalidDimensionError(f"{n} is not a power of 2")
    return operator.index(n).bit_length() - 1

def compensated_sum(values):
    """Exactly rounded float sum (Shewchuk), used for entropy accumulation"""
    return math.fsum(float(v) for v in values)

def canonical_json(data):
    """Stable JSON text used for hashing and byte-stable outputs"""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=True)

def config_hash(data):
    """SHA-256 of the canonical JSON form of a config dictionary"""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()

def parse_int_list(text):
    """Parse '2,4,8' (or '2-32:2') into a list of ints"""
    text = text.strip()
    if "-" in text and ":" in text:
        span, step = text.split(":")
        start, stop = span.split("-")
        return list(range(int(start), int(stop) + 1, int(step)))
    return [int(part) for part in text.split(",") if part.strip()]
