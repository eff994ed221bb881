import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfqkd.core import (
    REFERENCE_CHANNEL,
    ChannelConfig,
    ConfigError,
    NonFiniteError,
    ObservedCounts,
    OrderingError,
    OutOfRangeError,
    ProtocolConfig,
    binary_entropy,
    validate_config,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def _mp_entropy(x):
    mpmath.mp.dps = 50
    x = mpmath.mpf(x)
    return float(-x * mpmath.log(x, 2) - (1 - x) * mpmath.log(1 - x, 2))


@pytest.mark.parametrize("x, expected", [(0.5, 1.0), (0.0, 0.0), (1.0, 0.0)])
def test_entropy_fixed_points(x, expected):
    assert binary_entropy(x) == expected


def test_entropy_against_high_precision():
    # frozen from a 50-digit evaluation
    assert binary_entropy(0.11) == pytest.approx(0.49991595816452800, rel=1e-14)
    assert binary_entropy(0.11) == pytest.approx(_mp_entropy("0.11"), rel=1e-14)


@pytest.mark.parametrize("x", [-1e-12, 1.0 + 1e-12, float("nan"), float("inf")])
def test_entropy_domain(x):
    with pytest.raises(ValueError):
        binary_entropy(x)


def test_entropy_vectorized():
    xs = np.array([0.0, 0.11, 0.5, 1.0])
    out = binary_entropy(xs)
    assert out.shape == (4,)
    assert out[2] == 1.0 and out[0] == out[3] == 0.0


@settings(max_examples=1000, deadline=None)
@given(unit, unit, unit)
def test_entropy_concave(a, b, lam):
    mix = binary_entropy(lam * a + (1 - lam) * b)
    assert mix >= lam * binary_entropy(a) + (1 - lam) * binary_entropy(b) - 1e-12


@settings(max_examples=1000, deadline=None)
@given(unit)
def test_entropy_symmetric(x):
    assert abs(binary_entropy(x) - binary_entropy(1 - x)) <= 1e-14


def test_table_one_accepted():
    proto = ProtocolConfig.symmetric(1e-8, 0.1, 0.5)
    assert validate_config(proto, REFERENCE_CHANNEL) == (proto, REFERENCE_CHANNEL)


@pytest.mark.parametrize(
    "changes, exc, name",
    [
        ({"p0": 1.2}, OutOfRangeError, "p0"),
        ({"p0": 0.0}, OutOfRangeError, "p0"),
        ({"nu_upper_A": 0.2}, OrderingError, "nu_upper_A"),
        ({"nu_upper_B": 0.2}, OrderingError, "nu_upper_B"),
        ({"mu_upper_B": -0.1}, OutOfRangeError, "mu_upper_B"),
        ({"r": 1.0}, OutOfRangeError, "r"),
        ({"N": 10.5}, OutOfRangeError, "N"),
        ({"N": -1}, OutOfRangeError, "N"),
        ({"p0": float("nan")}, NonFiniteError, "p0"),
    ],
)
def test_protocol_rejections(changes, exc, name):
    proto = ProtocolConfig.symmetric(1e-8, 0.1, 0.5).replace(**changes)
    with pytest.raises(exc) as info:
        validate_config(proto, REFERENCE_CHANNEL)
    assert info.value.field == name
    assert name in str(info.value)


@pytest.mark.parametrize(
    "changes, name",
    [
        ({"eta_d": 1.5}, "eta_d"),
        ({"p_d": -1e-9}, "p_d"),
        ({"E_d": 2.0}, "E_d"),
        ({"f": 0.9}, "f"),
        ({"distance_km": -1.0}, "distance_km"),
        ({"alpha_f": float("inf")}, "alpha_f"),
    ],
)
def test_channel_rejections(changes, name):
    with pytest.raises(ConfigError) as info:
        validate_config(ProtocolConfig.symmetric(0.0, 0.1, 0.5), REFERENCE_CHANNEL.replace(**changes))
    assert info.value.field == name


def test_range_message_is_readable():
    with pytest.raises(OutOfRangeError, match=r"1\.2 outside \(0\.0, 1\.0\)"):
        validate_config(ProtocolConfig.symmetric(0.0, 0.1, 1.2), REFERENCE_CHANNEL)


finite = st.floats(-10.0, 10.0, allow_nan=False)


@settings(max_examples=500, deadline=None)
@given(finite, finite, finite, finite, finite, finite, finite, finite)
def test_validation_is_total(nu, mu, p0, r, eta, pd, ed, f):
    proto = ProtocolConfig(nu, nu, mu, mu, p0, r, 100)
    chan = ChannelConfig(10.0, 0.2, eta, pd, ed, f)
    try:
        validate_config(proto, chan)
    except ConfigError as exc:
        assert exc.field in {
            "nu_upper_A", "mu_upper_A", "p0", "r", "eta_d", "p_d", "E_d", "f",
        }


def test_observed_counts_frozen_layout():
    c = ObservedCounts(n_O_L=1, key_counts=np.arange(8).reshape(4, 2), N=10)
    assert c.key_counts.shape == (4, 2)
    with pytest.raises(ValueError):
        c.key_counts[0, 0] = 5
    assert c == ObservedCounts(n_O_L=1, key_counts=np.arange(8).reshape(4, 2), N=10)
    with pytest.raises(ValueError):
        ObservedCounts(key_counts=np.zeros(8))


def test_px_complements_p0():
    assert ProtocolConfig.symmetric(0, 0.1, 0.3).px == pytest.approx(0.7)
    assert math.isclose(REFERENCE_CHANNEL.eta_d, 0.6)
