"""Brute-force photon-number check of the analytic interference model.

Two truncated Fock-space input states are sent through a 50:50 beamsplitter
(mode a -> (L + R)/sqrt2, mode b -> (L - R)/sqrt2). The joint output
photon-number distribution is then passed through the same classical detector
layer as :mod:`scfqkd.channel`: each photon leaves through the wrong port with
probability ``E_d``, and each detector fires on any photon or on a dark count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammainc, gammaln

from .core import ChannelConfig

__all__ = [
    "TruncationError",
    "FockState",
    "default_cutoff",
    "coherent_fock",
    "beamsplitter_output_distribution",
    "coherent_output_distribution",
    "click_probs_from_distribution",
    "beamsplitter_click_probs",
]

TAIL_LIMIT = 1e-12
NORM_TOL = 1e-12


class TruncationError(ValueError):
    """The Fock cutoff is too small for the requested intensity."""


def default_cutoff(intensity: float) -> int:
    return max(40, math.ceil(10.0 * intensity + 10.0))


def _poisson_tail(intensity: float, n_max: int) -> float:
    # P(n > n_max) for a Poisson(intensity) photon number.
    if intensity == 0:
        return 0.0
    return float(gammainc(n_max + 1, intensity))


@dataclass(frozen=True)
class FockState:
    amplitudes: np.ndarray
    n_max: int
    intensity: float

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_max + 1,):
            raise ValueError("need one amplitude per photon number 0..n_max")
        expected = 1.0 - _poisson_tail(self.intensity, self.n_max)
        if abs(np.vdot(amps, amps).real - expected) > NORM_TOL:
            raise ValueError("amplitudes do not match a truncated coherent state")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def tail_mass(self) -> float:
        return _poisson_tail(self.intensity, self.n_max)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(self.n_max + 1), self.probabilities))


def coherent_fock(intensity: float, n_max: int | None = None) -> FockState:
    """Truncated coherent state with real, non-negative amplitude."""
    if intensity < 0:
        raise ValueError("intensity must be non-negative")
    if n_max is None:
        n_max = default_cutoff(intensity)
    n = np.arange(n_max + 1)
    if intensity == 0:
        amps = (n == 0).astype(complex)
    else:
        log_amp = 0.5 * (-intensity + n * math.log(intensity) - gammaln(n + 1))
        amps = np.exp(log_amp).astype(complex)
    return FockState(amps, n_max, float(intensity))


@lru_cache(maxsize=None)
def _bs_block(total: int) -> np.ndarray:
    """Beamsplitter unitary on the fixed-total-photon subspace.

    Entry [k, m] is the amplitude of |k, total-k> (L, R) given the input
    |m, total-m> (a, b).
    """
    # (x + y)^m (x - y)^(total - m) expanded in powers of x, normalized by the
    # Fock factorials. The expansion is done in exact integers: the signed
    # float convolution cancels catastrophically above ~50 photons.
    log_fact = gammaln(np.arange(total + 1) + 1)
    block = np.zeros((total + 1, total + 1))
    k = np.arange(total + 1)
    for m in range(total + 1):
        n = total - m
        poly = [0] * (total + 1)
        for i in range(m + 1):
            ci = math.comb(m, i)
            for j in range(n + 1):
                poly[i + j] += ci * math.comb(n, j) * (-1) ** (n - j)
        poly = np.array([float(c) for c in poly])
        scale = np.exp(0.5 * (log_fact[k] + log_fact[total - k] - log_fact[m] - log_fact[total - m]) - 0.5 * total * math.log(2.0))
        block[:, m] = poly * scale
    return block


def beamsplitter_output_distribution(state_A: FockState, state_B: FockState) -> np.ndarray:
    """Joint photon-number probabilities P[k_L, k_R] behind the beamsplitter."""
    amp_a, amp_b = state_A.amplitudes, state_B.amplitudes
    n_out = state_A.n_max + state_B.n_max
    dist = np.zeros((n_out + 1, n_out + 1))
    for total in range(n_out + 1):
        m_lo = max(0, total - state_B.n_max)
        m_hi = min(total, state_A.n_max)
        m = np.arange(m_lo, m_hi + 1)
        vec = np.zeros(total + 1, dtype=complex)
        vec[m] = amp_a[m] * amp_b[total - m]
        out = _bs_block(total) @ vec
        k = np.arange(total + 1)
        dist[k, total - k] = np.abs(out) ** 2
    return dist


def coherent_output_distribution(w_A: float, w_B: float, n_max: int) -> np.ndarray:
    """Closed form: outputs are independent coherent states (a +/- b)/sqrt2."""
    a, b = math.sqrt(w_A), math.sqrt(w_B)
    k = np.arange(n_max + 1)

    def poisson(lam):
        if lam == 0:
            return (k == 0).astype(float)
        return np.exp(-lam + k * math.log(lam) - gammaln(k + 1))

    return np.outer(poisson((a + b) ** 2 / 2), poisson((a - b) ** 2 / 2))


def click_probs_from_distribution(dist: np.ndarray, channel: ChannelConfig):
    """Exactly-one-click probabilities from a joint photon-number distribution."""
    E_d, p_d = channel.E_d, channel.p_d
    k_L = np.arange(dist.shape[0])[:, None]
    k_R = np.arange(dist.shape[1])[None, :]
    # a photon count survives misrouting to leave a port dark
    dark_L = np.sum(dist * E_d**k_L * (1.0 - E_d) ** k_R)
    dark_R = np.sum(dist * (1.0 - E_d) ** k_L * E_d**k_R)
    dark_both = dist[0, 0]
    quiet = 1.0 - p_d
    S_L = quiet * dark_R - quiet**2 * dark_both
    S_R = quiet * dark_L - quiet**2 * dark_both
    return float(S_L), float(S_R)


def beamsplitter_click_probs(state_A: FockState, state_B: FockState, channel: ChannelConfig):
    """(S_L, S_R) for two inputs whose intensities already include transmittance."""
    for name, st in (("state_A", state_A), ("state_B", state_B)):
        if st.tail_mass > TAIL_LIMIT:
            raise TruncationError(
                f"{name}: cutoff n_max={st.n_max} leaves tail mass {st.tail_mass:.3g} "
                f"at intensity {st.intensity}; need n_max >= {default_cutoff(st.intensity)}"
            )
    return click_probs_from_distribution(beamsplitter_output_distribution(state_A, state_B), channel)
