"""Asymptotic end-to-end evaluation: configs in, key-rate report out."""

from __future__ import annotations

import numpy as np

from .channel import asymptotic_stats
from .core import ChannelConfig, KeyRateReport, ProtocolConfig, validate_config
from .pairing import class_fractions, expected_aopp, expected_twcc
from .rates import (
    BoundCoefficients,
    key_rate_aopp,
    key_rate_original,
    key_rate_twcc,
    security_summary,
)

__all__ = ["MODES", "evaluate", "evaluate_modes", "rate_surface"]

MODES = ("original", "twcc", "aopp")


def _evaluate(protocol, channel, mode, coeffs=None) -> KeyRateReport:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    stats = asymptotic_stats(protocol, channel)
    summary = security_summary(stats, protocol, coeffs)
    n_t = protocol.N * (1.0 - protocol.r) * np.asarray(stats.D_eff)
    if mode == "original":
        report = key_rate_original(summary, n_t, stats.E_K, channel.f, protocol.N)
    elif mode == "twcc":
        report = key_rate_twcc(summary, expected_twcc(n_t, class_fractions(protocol, channel)), channel.f, protocol.N)
    else:
        report = key_rate_aopp(summary, expected_aopp(n_t, class_fractions(protocol, channel)), channel.f, protocol.N)
    report.details.update(
        c0=summary.c0,
        c1=summary.c1,
        c2_bar=summary.c2_bar,
        n_ph_upper=summary.n_ph_upper,
        n_ph_clamped=summary.n_ph_clamped,
        E_K=stats.E_K,
        D_eff=stats.D_eff,
        n_t=n_t if np.ndim(n_t) else float(n_t),
    )
    return report


def evaluate(
    protocol: ProtocolConfig,
    channel: ChannelConfig,
    mode: str = "original",
    coeffs: BoundCoefficients | None = None,
) -> KeyRateReport:
    """Key rate of an honest run with expected (noise-free) statistics."""
    validate_config(protocol, channel)
    return _evaluate(protocol, channel, mode, coeffs)


def evaluate_modes(protocol, channel, modes=MODES) -> dict[str, KeyRateReport]:
    validate_config(protocol, channel)
    return {m: _evaluate(protocol, channel, m) for m in modes}


def rate_surface(nu, p0, mu, channel: ChannelConfig, mode: str = "original"):
    """Vectorized key rate over broadcastable arrays of p0 and mu.

    Callers are responsible for keeping the arrays inside the admissible box;
    only the channel is validated.
    """
    validate_config(ProtocolConfig.symmetric(0.0, 0.0, 0.5), channel)
    p0, mu = np.broadcast_arrays(np.asarray(p0, dtype=float), np.asarray(mu, dtype=float))
    protocol = ProtocolConfig.symmetric(nu, mu, p0)
    return np.asarray(_evaluate(protocol, channel, mode).R)
