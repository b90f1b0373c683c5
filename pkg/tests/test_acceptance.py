"""Acceptance criteria 1-10 at their stated tolerances; one PASS/FAIL line per criterion."""

import pytest

from collision_chords import acceptance

OPTS = acceptance.AcceptanceOptions()
RESULTS: dict[int, acceptance.CriterionResult] = {}


def _report(capsys, res):
    with capsys.disabled():
        print()
        print(res.line())
        for d in res.details[1:]:
            print(f"        {d}")


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    res = acceptance.run_criterion(number, OPTS)
    RESULTS[number] = res
    _report(capsys, res)
    assert res.passed, res.details[0]


@pytest.mark.slow
def test_criterion_10_determinism(capsys, tmp_path):
    first = None
    if set(RESULTS) == set(acceptance.CRITERIA):
        first = acceptance.write_metrics(tmp_path, [RESULTS[n] for n in sorted(RESULTS)])
    res = acceptance.criterion_determinism(OPTS, first)
    _report(capsys, res)
    assert res.passed, res.details


@pytest.mark.slow
def test_loosened_tolerance_breaks_oracle_agreement(capsys):
    res = acceptance.run_criterion(1, acceptance.with_loosened_tolerance(OPTS, 1e4))
    with capsys.disabled():
        print()
        print(f"sensitivity (tolerance x 1e4): {res.line()}")
    assert not res.passed
