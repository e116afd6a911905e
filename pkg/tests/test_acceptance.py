"""The release gate: every acceptance criterion at its stated tolerance.

Each criterion prints one pass/fail line; the same battery backs the CLI's
``verify-suite`` command.
"""

import numpy as np
import pytest

from dqip import acceptance, qcore


@pytest.mark.parametrize("criterion", acceptance.CRITERIA, ids=lambda c: c.ident)
def test_criterion(criterion):
    result = criterion.evaluate()
    print(result.row())
    for line in result.details:
        print(f"    {line}")
    assert result.elapsed_seconds <= criterion.budget_seconds
    if result.comparison == "<=":
        assert result.measured <= result.bound, result.details
    else:
        assert result.measured >= result.bound, result.details


def test_battery_total_runtime_under_budget():
    results, total = acceptance.run_all()
    assert all(r.passed for r in results)
    assert total <= 15 * 60


def test_mutated_rotation_breaks_perfect_completeness(monkeypatch):
    # Injecting a sign error into the acceptance rotation must surface in the
    # perfect-completeness criterion: the honest amplitude no longer cancels.
    original = qcore.acceptance_rotation

    def broken(c):
        sc, ss = np.sqrt(c), np.sqrt(1.0 - c)
        return qcore.Gate(1, np.array([[sc, -ss], [ss, sc]], dtype=np.complex128))

    monkeypatch.setattr(qcore, "acceptance_rotation", broken)
    criterion = next(c for c in acceptance.CRITERIA if c.ident == "perfect-completeness")
    result = criterion.evaluate()
    monkeypatch.setattr(qcore, "acceptance_rotation", original)
    assert not result.passed
