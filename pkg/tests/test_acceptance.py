"""Acceptance criteria at full scale, one test per criterion.

Each test prints a PASS/FAIL line; run with ``pytest -s tests/test_acceptance.py``
to see the matrix, or ``coldplasma verify``. The whole module takes
roughly half an hour on one core.
"""
import pytest

from coldplasma.verify import SUITES, run_suite

CRITERIA = [
    (1, "delta_sweep"),
    (2, "periodicity"),
    (3, "sign_invariance"),
    (4, "friction"),
    (5, "density_friction"),
    (6, "pressure"),
    (7, "viscosity"),
    (8, "viscosity_diffusion"),
    (9, "stochastic"),
    (10, "determinism"),
]


def test_every_suite_is_listed():
    assert sorted(name for _, name in CRITERIA) == sorted(SUITES)


@pytest.mark.slow
@pytest.mark.parametrize("number,name", CRITERIA, ids=[f"{n:02d}-{s}" for n, s in CRITERIA])
def test_acceptance(number, name):
    res = run_suite(name)
    print(f"\ncriterion {number:2d}: {res.line()}  [{res.seconds:.0f} s]")
    assert res.passed, res.summary
