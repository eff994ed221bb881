"""Shared domain types, validation and elementary functions.

The dataclasses here are plain immutable records. Numeric fields are normally
Python floats, but every formula in the package is written with numpy
operations, so fields may also hold broadcastable arrays when a caller wants to
evaluate a whole parameter grid at once (the optimizer does this). Validation
is explicit through :func:`validate_config` and is only meaningful for scalar
records.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

__all__ = [
    "ProtocolConfig",
    "ChannelConfig",
    "WindowStats",
    "ObservedCounts",
    "SecuritySummary",
    "KeyRateReport",
    "ConfigError",
    "OutOfRangeError",
    "OrderingError",
    "NonFiniteError",
    "binary_entropy",
    "validate_config",
    "REFERENCE_CHANNEL",
    "WINDOW_CLASSES",
]

# Key-window source pairings, in the order used by every class-resolved array.
# "ZA": Alice strong / Bob weak, "ZB": Alice weak / Bob strong.
WINDOW_CLASSES = ("O", "B", "ZA", "ZB")


class ConfigError(ValueError):
    """A configuration field violates one of its invariants."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class OutOfRangeError(ConfigError):
    pass


class OrderingError(ConfigError):
    pass


class NonFiniteError(ConfigError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    """Source settings shared by Alice and Bob.

    Intensities are upper bounds in photons per pulse. ``r`` is the fraction of
    windows used for testing and ``N`` the total number of windows; in
    asymptotic mode ``r`` is 0 and ``N`` only sets the scale of the counts.
    """

    nu_upper_A: float
    nu_upper_B: float
    mu_upper_A: float
    mu_upper_B: float
    p0: float
    r: float = 0.0
    N: int = 10**10

    @classmethod
    def symmetric(cls, nu: float, mu: float, p0: float, r: float = 0.0, N: int = 10**10):
        """Both parties use the same weak/strong intensity bounds."""
        return cls(nu, nu, mu, mu, p0, r, N)

    @property
    def px(self):
        return 1.0 - self.p0

    def replace(self, **changes) -> "ProtocolConfig":
        return type(self)(**{**asdict(self), **changes})


@dataclass(frozen=True)
class ChannelConfig:
    """Fiber and detector parameters.

    The defaults describe the reference link: 0.2 dB/km fiber, 60% efficient
    detectors with 1e-9 dark counts, 4% misalignment and f = 1.1.
    """

    distance_km: float = 0.0
    alpha_f: float = 0.2
    eta_d: float = 0.6
    p_d: float = 1.0e-9
    E_d: float = 0.04
    f: float = 1.1

    def replace(self, **changes) -> "ChannelConfig":
        return type(self)(**{**asdict(self), **changes})


REFERENCE_CHANNEL = ChannelConfig()


@dataclass(frozen=True)
class WindowStats:
    """Effective-event probabilities per window class and detector.

    ``S_Z_*`` refers to the single-strong windows. ``E_K`` and ``D_eff`` describe
    the key-generation windows: bit-flip error rate and total effective
    probability.
    """

    S_O_L: Any
    S_O_R: Any
    S_B_L: Any
    S_B_R: Any
    S_Z_L: Any
    S_Z_R: Any
    E_K: Any = 0.0
    D_eff: Any = 0.0

    @property
    def S_O(self):
        return self.S_O_L + self.S_O_R

    @property
    def S_B(self):
        return self.S_B_L + self.S_B_R

    @property
    def S_Z(self):
        return self.S_Z_L + self.S_Z_R


@dataclass(frozen=True)
class ObservedCounts:
    """Counts from a finite run.

    ``n_*`` are effective events in test windows. ``key_counts`` has shape
    (4, 2): rows follow :data:`WINDOW_CLASSES`, columns are detectors (L, R),
    restricted to key-generation windows.
    """

    n_O_L: int = 0
    n_O_R: int = 0
    n_B_L: int = 0
    n_B_R: int = 0
    n_Z_L: int = 0
    n_Z_R: int = 0
    key_counts: np.ndarray = field(default_factory=lambda: np.zeros((4, 2), dtype=np.int64))
    N: int = 0

    def __post_init__(self):
        counts = np.asarray(self.key_counts, dtype=np.int64)
        if counts.shape != (4, 2):
            raise ValueError(f"key_counts must have shape (4, 2), got {counts.shape}")
        counts.setflags(write=False)
        object.__setattr__(self, "key_counts", counts)

    @property
    def test_counts(self) -> dict[str, int]:
        return {
            name: getattr(self, name)
            for name in ("n_O_L", "n_O_R", "n_B_L", "n_B_R", "n_Z_L", "n_Z_R")
        }

    def __eq__(self, other):
        if not isinstance(other, ObservedCounts):
            return NotImplemented
        return (
            self.test_counts == other.test_counts
            and self.N == other.N
            and np.array_equal(self.key_counts, other.key_counts)
        )


@dataclass(frozen=True)
class SecuritySummary:
    c0: Any
    c1: Any
    c2_bar: Any
    n_ph_upper: Any
    n_u: Any
    e_ph_upper: Any
    n_ph_clamped: Any = False


@dataclass(frozen=True)
class KeyRateReport:
    """Key rate for one post-processing mode plus its intermediates.

    ``R_raw`` is the unclamped value; ``clamped`` is set when it was negative
    and ``R`` was forced to zero.
    """

    mode: str
    R: Any
    R_raw: Any
    clamped: Any
    details: dict = field(default_factory=dict)

    @property
    def no_key(self):
        return np.logical_not(np.asarray(self.R) > 0)

    def as_dict(self) -> dict:
        out = {"mode": self.mode, "R": self.R, "R_raw": self.R_raw, "clamped": self.clamped}
        out.update(self.details)
        return out


def binary_entropy(x):
    """Binary Shannon entropy in bits, with H(0) = H(1) = 0.

    Accepts scalars or arrays. Raises ``ValueError`` outside [0, 1].
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise ValueError("binary_entropy is defined on [0, 1]")
    inner = (arr > 0.0) & (arr < 1.0)
    safe = np.where(inner, arr, 0.5)
    h = -safe * np.log2(safe) - (1.0 - safe) * np.log2(1.0 - safe)
    h = np.where(inner, h, 0.0)
    if np.ndim(x) == 0:
        return float(h)
    return h


def _check_finite(name: str, value):
    try:
        ok = math.isfinite(value)
    except TypeError:
        raise NonFiniteError(name, f"expected a real number, got {value!r}") from None
    if not ok:
        raise NonFiniteError(name, f"must be finite, got {value!r}")


def _check_range(name: str, value, lo=None, hi=None, lo_open=False, hi_open=False):
    _check_finite(name, value)
    below = lo is not None and (value < lo or (lo_open and value == lo))
    above = hi is not None and (value > hi or (hi_open and value == hi))
    if below or above:
        left = "(" if lo_open or lo is None else "["
        right = ")" if hi_open or hi is None else "]"
        interval = f"{left}{'-inf' if lo is None else lo}, {'inf' if hi is None else hi}{right}"
        raise OutOfRangeError(name, f"{value!r} outside {interval}")


def validate_config(protocol: ProtocolConfig, channel: ChannelConfig):
    """Check every invariant of the two configs.

    Returns the ``(protocol, channel)`` pair unchanged, or raises the first
    :class:`ConfigError` found; the exception names the offending field.
    """
    for f_ in fields(protocol):
        _check_finite(f_.name, getattr(protocol, f_.name))
    for side in ("A", "B"):
        nu = getattr(protocol, f"nu_upper_{side}")
        mu = getattr(protocol, f"mu_upper_{side}")
        _check_range(f"nu_upper_{side}", nu, lo=0.0)
        _check_range(f"mu_upper_{side}", mu, lo=0.0)
        if nu > mu:
            raise OrderingError(f"nu_upper_{side}", f"weak bound {nu!r} exceeds strong bound {mu!r}")
    _check_range("p0", protocol.p0, 0.0, 1.0, lo_open=True, hi_open=True)
    _check_range("r", protocol.r, 0.0, 1.0, hi_open=True)
    _check_range("N", protocol.N, lo=0)
    if int(protocol.N) != protocol.N:
        raise OutOfRangeError("N", f"must be an integer, got {protocol.N!r}")

    for f_ in fields(channel):
        _check_finite(f_.name, getattr(channel, f_.name))
    _check_range("distance_km", channel.distance_km, lo=0.0)
    _check_range("alpha_f", channel.alpha_f, lo=0.0)
    for name in ("eta_d", "p_d", "E_d"):
        _check_range(name, getattr(channel, name), 0.0, 1.0)
    _check_range("f", channel.f, lo=1.0)
    return protocol, channel
