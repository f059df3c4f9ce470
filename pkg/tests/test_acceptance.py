"""Acceptance criteria at their stated tolerances and time limits; one PASS/FAIL line each."""
import pytest

from polyest import acceptance

CRITERIA = [
    (1, acceptance.criterion_1),
    (2, acceptance.criterion_2),
    (3, acceptance.criterion_3),
    (4, acceptance.criterion_4),
    (5, acceptance.criterion_5),
    (6, acceptance.criterion_6),
    (7, acceptance.criterion_7),
    (8, acceptance.criterion_8),
    (9, acceptance.criterion_9),
    (10, acceptance.criterion_10),
]


@pytest.mark.parametrize("number,check", CRITERIA, ids=[f"criterion_{k}" for k, _ in CRITERIA])
def test_criterion(number, check, capsys):
    result = check()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.number == number
    assert result.passed, result.line()
