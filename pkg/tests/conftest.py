"""Shared fixtures: fixture-file access and a quiet logging default."""

from __future__ import annotations

import logging
from pathlib import Path

import pytest

FIXTURE_DIR = Path(__file__).parent / "fixtures"
GOLDEN_DIR = Path(__file__).parent / "golden"

logging.getLogger("accelkit").setLevel(logging.WARNING)


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_DIR


def load_fixture(name: str) -> bytes:
    return (FIXTURE_DIR / name).read_bytes()


@pytest.fixture(scope="session")
def fixture_bytes():
    return load_fixture


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdict lines outside pytest's output capture."""
    try:
        from test_acceptance import VERDICT_LINES
    except ImportError:
        return
    if VERDICT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)
