"""Analytic symmetric interference channel with threshold detectors.

Charlie interferes the phase-compensated pulse pair on a 50:50 beamsplitter.
Detector L sits at the constructive port, R at the destructive one.
Misalignment moves a fraction ``E_d`` of each port's intensity to the other
port. A window is effective when exactly one detector clicks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ChannelConfig, ProtocolConfig, WindowStats

__all__ = [
    "ArmModel",
    "side_transmittance",
    "port_intensities",
    "detector_click",
    "window_click_probs",
    "class_click_probs",
    "asymptotic_stats",
]


@dataclass(frozen=True)
class ArmModel:
    eta: float

    @classmethod
    def from_channel(cls, channel: ChannelConfig) -> "ArmModel":
        return cls(side_transmittance(channel))


def side_transmittance(channel: ChannelConfig):
    """Detector efficiency times the loss of one half of the link."""
    half = np.asarray(channel.distance_km, dtype=float) / 2.0
    return channel.eta_d * 10.0 ** (-channel.alpha_f * half / 10.0)


def port_intensities(in_L, in_R, E_d):
    """Apply misalignment cross-talk to ideal port intensities."""
    return (1.0 - E_d) * in_L + E_d * in_R, (1.0 - E_d) * in_R + E_d * in_L


def detector_click(intensity, p_d):
    return -np.expm1(-intensity) * (1.0 - p_d) + p_d


def window_click_probs(w_A, w_B, channel: ChannelConfig, eta=None):
    """Probabilities (S_L, S_R) that exactly detector L / R clicks.

    ``w_A`` and ``w_B`` are the emitted intensities; ``eta`` overrides the
    one-side transmittance derived from ``channel``.
    """
    w_A = np.asarray(w_A, dtype=float)
    w_B = np.asarray(w_B, dtype=float)
    if np.any(w_A < 0) or np.any(w_B < 0):
        raise ValueError("intensities must be non-negative")
    if eta is None:
        eta = side_transmittance(channel)
    a = np.sqrt(eta * w_A)
    b = np.sqrt(eta * w_B)
    I_L, I_R = port_intensities((a + b) ** 2 / 2.0, (a - b) ** 2 / 2.0, channel.E_d)
    P_L = detector_click(I_L, channel.p_d)
    P_R = detector_click(I_R, channel.p_d)
    S_L = P_L * (1.0 - P_R)
    S_R = P_R * (1.0 - P_L)
    if S_L.ndim == 0:
        return float(S_L), float(S_R)
    return S_L, S_R


def class_click_probs(protocol: ProtocolConfig, channel: ChannelConfig):
    """(S_L, S_R) for each key class in ``WINDOW_CLASSES`` order.

    Simulation treats the intensity upper bounds as the emitted intensities.
    """
    nu_A, nu_B = protocol.nu_upper_A, protocol.nu_upper_B
    mu_A, mu_B = protocol.mu_upper_A, protocol.mu_upper_B
    eta = side_transmittance(channel)
    return {
        "O": window_click_probs(nu_A, nu_B, channel, eta),
        "B": window_click_probs(mu_A, mu_B, channel, eta),
        "ZA": window_click_probs(mu_A, nu_B, channel, eta),
        "ZB": window_click_probs(nu_A, mu_B, channel, eta),
    }


def asymptotic_stats(protocol: ProtocolConfig, channel: ChannelConfig) -> WindowStats:
    """Expected window statistics of an honest run.

    O and B windows are exactly the ones where the two raw bits disagree, so
    they make up the key error rate. ``E_K`` is 0 when nothing clicks at all.
    """
    probs = class_click_probs(protocol, channel)
    O_L, O_R = probs["O"]
    B_L, B_R = probs["B"]
    Z_L = 0.5 * (probs["ZA"][0] + probs["ZB"][0])
    Z_R = 0.5 * (probs["ZA"][1] + probs["ZB"][1])
    p0, px = protocol.p0, protocol.px
    wrong = p0**2 * (O_L + O_R) + px**2 * (B_L + B_R)
    D_eff = wrong + 2.0 * p0 * px * (Z_L + Z_R)
    D_arr = np.asarray(D_eff, dtype=float)
    E_K = np.divide(wrong, D_arr, out=np.zeros(np.broadcast(wrong, D_arr).shape), where=D_arr > 0)
    if E_K.ndim == 0:
        E_K = float(E_K)
    return WindowStats(O_L, O_R, B_L, B_R, Z_L, Z_R, E_K=E_K, D_eff=D_eff)
