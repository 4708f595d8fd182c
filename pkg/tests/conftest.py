import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import utils  # noqa: E402


@pytest.fixture
def log_dir(tmp_path, monkeypatch):
    """Route the CLI log file into the test's temporary directory"""
    path = tmp_path / "logs"
    monkeypatch.setattr(utils, "LOGS_DIR", str(path))
    return path
