"""Acceptance criteria 1-10, one test each, printing one pass/fail line per criterion.

The checks live in nlkg_lab.verify and are shared with ``nlkg-lab verify-all``.
Thresholds there are the stated tolerances; nothing is relaxed here.
"""

import pytest

from nlkg_lab import verify


@pytest.mark.parametrize("check", verify.CRITERIA, ids=lambda f: f.__name__)
def test_criterion(check, capsys):
    result = check()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
