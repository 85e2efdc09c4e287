"""The frozen reference numbers must still come out of the oracles."""

import pytest

import oracles

TOLERANCE = {"paper_logistic_sse": 1e-9, "exp_sse_optimum": 1e-6}


@pytest.fixture(scope="module")
def fresh():
    return oracles.recompute()


@pytest.mark.parametrize("key", sorted(oracles.FROZEN))
def test_oracles_reproduce_frozen_values(fresh, key):
    tol = TOLERANCE.get(key, 5e-5 * max(1.0, abs(oracles.FROZEN[key])))
    assert fresh[key] == pytest.approx(oracles.FROZEN[key], abs=tol)
