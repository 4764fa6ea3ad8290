"""Acceptance suite: one test (and one printed PASS/FAIL line) per criterion."""
import pytest

from simcovert.acceptance import CRITERIA, run_criterion


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(CRITERIA), ids=[f"criterion_{n}" for n in sorted(CRITERIA)])
def test_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
    assert result.within_budget, f"took {result.seconds:.1f}s, budget {result.budget:.0f}s"
