"""Expected outcome of two-way post-processing for an asymptotically long key.

Each effective key bit comes from one of four source pairings. With the bit
assignment (Alice: weak 0 / strong 1, Bob: weak 1 / strong 0):

=====  =============  =======  =====
class  Alice / Bob    Bob bit  error
=====  =============  =======  =====
O      weak / weak    1        yes
B      strong/strong  0        yes
ZA     strong / weak  1        no
ZB     weak / strong  0        no
=====  =============  =======  =====

A pair passes a parity check when both or neither of its bits are wrong, and
the kept bit is then wrong only if both were.
"""

from __future__ import annotations

import numpy as np

from .core import ChannelConfig, ProtocolConfig
from .channel import class_click_probs
from .rates import AoppStats, TwccStats

__all__ = ["class_fractions", "expected_twcc", "expected_aopp"]


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=den > 0)
    return float(out) if out.ndim == 0 else out


def class_fractions(protocol: ProtocolConfig, channel: ChannelConfig) -> dict:
    """Share of effective key bits contributed by each source pairing."""
    probs = class_click_probs(protocol, channel)
    p0, px = protocol.p0, protocol.px
    weight = {"O": p0 * p0, "B": px * px, "ZA": px * p0, "ZB": p0 * px}
    mass = {k: weight[k] * (probs[k][0] + probs[k][1]) for k in weight}
    total = mass["O"] + mass["B"] + mass["ZA"] + mass["ZB"]
    return {k: _ratio(v, total) for k, v in mass.items()}


def expected_twcc(n_t, q: dict) -> TwccStats:
    """Standard pairing of ``n_t`` bits with class fractions ``q``."""
    pairs = 0.5 * np.asarray(n_t, dtype=float)
    s00 = q["ZB"] ** 2 + q["B"] ** 2
    s11 = q["ZA"] ** 2 + q["O"] ** 2
    s01 = 2.0 * (q["ZB"] * q["ZA"] + q["B"] * q["O"])
    return TwccStats(
        n_t=n_t,
        n_t1=pairs * s00,
        n_t2=pairs * s11,
        n_t3=pairs * s01,
        E_1=_ratio(q["B"] ** 2, s00),
        E_2=_ratio(q["O"] ** 2, s11),
        E_3=_ratio(2.0 * q["B"] * q["O"], s01),
    )


def expected_aopp(n_t, q: dict) -> AoppStats:
    """Odd-parity pairing of Bob's zeros with his ones."""
    n_t = np.asarray(n_t, dtype=float)
    n_b0 = n_t * (q["ZB"] + q["B"])
    n_b1 = n_t * (q["ZA"] + q["O"])
    n_g = np.minimum(n_b0, n_b1)
    ok0, bad0 = _ratio(q["ZB"], q["ZB"] + q["B"]), _ratio(q["B"], q["ZB"] + q["B"])
    ok1, bad1 = _ratio(q["ZA"], q["ZA"] + q["O"]), _ratio(q["O"], q["ZA"] + q["O"])
    survive = ok0 * ok1 + bad0 * bad1
    n_t_aopp = n_g * survive
    return AoppStats(
        n_b0=n_b0,
        n_b1=n_b1,
        n_g=n_g,
        n_u0=n_t * q["ZB"],
        n_u1=n_t * q["ZA"],
        n_t_aopp=n_t_aopp,
        E_aopp=_ratio(bad0 * bad1, survive),
        empty=np.asarray(n_t_aopp) <= 0,
    )
