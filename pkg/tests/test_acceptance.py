"""The thirteen acceptance criteria, one test each, at the stated tolerances.

Each result line is printed and also echoed in the terminal summary.
"""
import pytest

from fracheat.verify import CHECKS, run_check

RESULTS = {}


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number):
    res = run_check(number)
    RESULTS[number] = res
    print(res.line())
    assert res.passed, res.line()
