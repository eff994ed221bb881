import math

import numpy as np
import pytest

from scfqkd.core import REFERENCE_CHANNEL
from scfqkd.optimize import OptimizationProblem, optimize_key_rate, secure_distance


def test_dark_channel_has_no_key():
    res = optimize_key_rate(OptimizationProblem(0.0), REFERENCE_CHANNEL.replace(eta_d=0.0, p_d=0.0))
    assert res.R == 0.0 and res.no_key


def planted(p0, mu):
    t = np.log(p0 / (1 - p0))
    return 1e-3 * np.exp(-((t - math.log(4.0)) ** 2) - (np.log(mu) - math.log(0.01)) ** 2 / 4)


def test_recovers_planted_maximum():
    res = optimize_key_rate(OptimizationProblem(0.0, grid=(12, 9)), REFERENCE_CHANNEL, objective=planted)
    assert res.p0 == pytest.approx(0.8, rel=1e-3)
    assert res.mu == pytest.approx(0.01, rel=1e-3)
    assert res.R == pytest.approx(1e-3, rel=1e-4)
    assert res.R >= res.grid_best


def test_rate_nonincreasing_with_distance():
    rates = [optimize_key_rate(OptimizationProblem(0.0), REFERENCE_CHANNEL.replace(distance_km=d)).R for d in range(0, 200, 10)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert rates[0] > 0


def test_deterministic_and_feasible():
    prob = OptimizationProblem(1e-6, "twcc")
    chan = REFERENCE_CHANNEL.replace(distance_km=40.0)
    a, b = optimize_key_rate(prob, chan), optimize_key_rate(prob, chan)
    assert a == b
    assert prob.p0_bounds[0] <= a.p0 <= prob.p0_bounds[1]
    assert 1e-6 <= a.mu <= 1.0
    assert a.R >= a.grid_best


@pytest.mark.parametrize(
    "problem",
    [
        OptimizationProblem(1.0),
        OptimizationProblem(0.0, p0_bounds=(0.5, 0.5)),
        OptimizationProblem(0.0, mode="bogus"),
        OptimizationProblem(0.0, grid=(1, 40)),
    ],
)
def test_empty_region_rejected(problem):
    with pytest.raises(ValueError):
        optimize_key_rate(problem, REFERENCE_CHANNEL)


def test_secure_distance_brackets_zero():
    prob = OptimizationProblem(1e-6)
    d = secure_distance(prob, REFERENCE_CHANNEL)
    assert d > 0
    assert optimize_key_rate(prob, REFERENCE_CHANNEL.replace(distance_km=d)).R > 0
    assert optimize_key_rate(prob, REFERENCE_CHANNEL.replace(distance_km=d + 0.1)).R == 0


def test_secure_distance_dark_channel():
    assert secure_distance(OptimizationProblem(0.0), REFERENCE_CHANNEL.replace(eta_d=0.0, p_d=0.0)) == 0.0
