"""Acceptance suite at full scale: one printed pass/fail line per criterion."""

import pytest

from delegation.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print(f"\n{result.line()}")
    failed = [c for c in result.checks if not c.passed]
    assert result.passed, failed
