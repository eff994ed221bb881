"""Side-channel-free QKD with imperfect vacuum sources: bounds, simulation, optimization."""

from .core import (
    REFERENCE_CHANNEL,
    ChannelConfig,
    ConfigError,
    KeyRateReport,
    ObservedCounts,
    ProtocolConfig,
    SecuritySummary,
    WindowStats,
    binary_entropy,
    validate_config,
)
from .pipeline import MODES, evaluate, evaluate_modes

__all__ = [
    "REFERENCE_CHANNEL",
    "ChannelConfig",
    "ConfigError",
    "KeyRateReport",
    "ObservedCounts",
    "ProtocolConfig",
    "SecuritySummary",
    "WindowStats",
    "binary_entropy",
    "validate_config",
    "MODES",
    "evaluate",
    "evaluate_modes",
]
