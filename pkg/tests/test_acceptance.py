"""One pass/fail line per acceptance criterion.

Lines are printed straight to the terminal so they appear under ``pytest -v``
without ``-s``. Criteria that miss their tolerance fail here on purpose.
"""
import pytest

from polyrestrict.acceptance import CRITERIA


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{c.number}_{c.__name__}" for c in CRITERIA])
def test_criterion(criterion, capsys):
    result = criterion(seed=0)
    with capsys.disabled():
        print("\n" + result.line())
    failed = [c.name for c in result.checks if not c.passed]
    assert result.passed, f"criterion {result.number} missed: {failed or 'runtime budget'}"
