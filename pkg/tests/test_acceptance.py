"""Acceptance suite: one test per criterion, run at its stated tolerance.

Each test prints a ``[PASS]``/``[FAIL]`` line (also collected into the
terminal summary).  Run directly with ``python tests/test_acceptance.py``
to print the lines without pytest.
"""

import pytest

from signbias.verify import CRITERIA, run_criterion

pytestmark = pytest.mark.acceptance


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, acceptance_log):
    res = run_criterion(number)
    line = res.line()
    print(line)
    acceptance_log.append(line)
    assert res.passed, line
    assert res.within_budget, f"runtime {res.runtime_s:.1f}s exceeds budget {res.budget_s:.0f}s"


if __name__ == "__main__":
    from signbias.verify import run_all

    run_all()
