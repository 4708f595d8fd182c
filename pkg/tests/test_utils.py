"""Tests for the helpers in utils.py"""

import pytest

from utils import (
    is_power_of_two, log2_int, compensated_sum, config_hash, parse_int_list,
    IncompleteDataError, InvalidDimensionError, VerificationError, PathCertError,
)
from config import EXIT_INCOMPLETE, EXIT_VALIDATION, EXIT_VERIFICATION


def test_powers_of_two():
    assert [n for n in range(40) if is_power_of_two(n)] == [1, 2, 4, 8, 16, 32]
    assert not is_power_of_two(4.0)
    assert log2_int(32) == 5
    with pytest.raises(InvalidDimensionError):
        log2_int(12)


def test_compensated_sum_keeps_small_terms():
    assert compensated_sum([1e16, 1.0, -1e16]) == 1.0


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [2, 3]}) == config_hash({"b": [2, 3], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_parse_int_list():
    assert parse_int_list("2,4, 8") == [2, 4, 8]
    assert parse_int_list("2-32:2") == list(range(2, 33, 2))


def test_error_exit_codes():
    error = IncompleteDataError("cannot estimate", ["b", "a"])
    assert error.missing == ["a", "b"]
    assert "missing a, b" in str(error)
    assert error.exit_code == EXIT_INCOMPLETE
    assert VerificationError("failed", {"passed": False}).exit_code == EXIT_VERIFICATION
    assert PathCertError("x").exit_code == EXIT_VALIDATION
