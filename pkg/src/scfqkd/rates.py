"""Phase-error bounds and key-rate formulas.

All functions use numpy arithmetic and broadcast over array-valued inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import KeyRateReport, ProtocolConfig, SecuritySummary, WindowStats, binary_entropy

__all__ = [
    "BoundError",
    "BoundCoefficients",
    "default_coefficients",
    "c2_upper_bound",
    "input_output_upper",
    "input_output_lower",
    "phase_error_count_upper",
    "untagged_count",
    "phase_error_rate",
    "security_summary",
    "twcc_phase_error",
    "key_rate_original",
    "key_rate_twcc",
    "key_rate_aopp",
    "TwccStats",
    "AoppStats",
]

# Slack allowed on the c0*c1 = 1 constraint.
PRODUCT_RTOL = 1e-12


class BoundError(ArithmeticError):
    """A bound that is non-negative by construction came out negative."""


@dataclass(frozen=True)
class BoundCoefficients:
    c0: Any
    c1: Any
    c2_bar: Any = None

    def __post_init__(self):
        c0 = np.asarray(self.c0, dtype=float)
        c1 = np.asarray(self.c1, dtype=float)
        if np.any(c0 <= 0) or np.any(c1 <= 0):
            raise ValueError("c0 and c1 must be positive")
        if np.any(np.abs(c0 * c1 - 1.0) > PRODUCT_RTOL):
            raise ValueError("c0 * c1 must equal 1")


@dataclass(frozen=True)
class TwccStats:
    """Outcome of standard two-way post-processing on the raw key.

    ``n_t`` is the raw key length before pairing; class 1 are pairs where Bob
    holds 00, class 2 pairs with 11, class 3 the odd pairs.
    """

    n_t: Any
    n_t1: Any
    n_t2: Any
    n_t3: Any
    E_1: Any
    E_2: Any
    E_3: Any


@dataclass(frozen=True)
class AoppStats:
    """Outcome of actively odd-parity pairing on the raw key.

    ``n_u0``/``n_u1`` count untagged bits among Bob's zeros/ones.
    ``empty`` is set when no pair survived and ``E_aopp`` was defined as 0.
    """

    n_b0: Any
    n_b1: Any
    n_g: Any
    n_u0: Any
    n_u1: Any
    n_t_aopp: Any
    E_aopp: Any
    empty: Any = False


def default_coefficients(protocol: ProtocolConfig) -> BoundCoefficients:
    """c0 = exp((nu - mu)/2), c1 = 1/c0, using Alice's intensity bounds."""
    half_gap = 0.5 * (np.asarray(protocol.nu_upper_A) - np.asarray(protocol.mu_upper_A))
    return BoundCoefficients(np.exp(half_gap), np.exp(-half_gap))


def _c2_factor(c0, nu, mu):
    # c0 + c1 - 2 e^{-(nu+mu)/2} + 2 sqrt(1-e^-nu) sqrt(1-e^-mu), with c1 = 1/c0,
    # rewritten as a sum of non-negative terms so no cancellation occurs at
    # small intensities.
    log_c0 = np.log(c0)
    spread = 4.0 * np.sinh(0.5 * log_c0) ** 2
    vacuum = -2.0 * np.expm1(-0.5 * (nu + mu))
    overlap = 2.0 * np.sqrt(-np.expm1(-nu)) * np.sqrt(-np.expm1(-mu))
    return spread + vacuum + overlap


def c2_upper_bound(protocol: ProtocolConfig, c0, c1=None):
    """Worst-case upper bound on the residual coefficient c2 over all windows.

    The product of one factor per party, evaluated at the intensity upper
    bounds; returns its square root.
    """
    c0 = np.asarray(c0, dtype=float)
    if c1 is not None and np.any(np.abs(c0 * np.asarray(c1) - 1.0) > PRODUCT_RTOL):
        raise ValueError("c0 * c1 must equal 1")
    fa = _c2_factor(c0, np.asarray(protocol.nu_upper_A), np.asarray(protocol.mu_upper_A))
    fb = _c2_factor(c0, np.asarray(protocol.nu_upper_B), np.asarray(protocol.mu_upper_B))
    if np.any(fa < 0) or np.any(fb < 0):
        raise BoundError("negative c2 factor; c0 * c1 = 1 should make this impossible")
    out = np.sqrt(fa * fb)
    return float(out) if out.ndim == 0 else out


def _check_io_inputs(xi0, xi1, xi2, S0, S1):
    for name, v in (("xi0", xi0), ("xi1", xi1), ("xi2", xi2)):
        if np.any(np.asarray(v) < 0):
            raise ValueError(f"{name} must be non-negative")
    for name, v in (("S0", S0), ("S1", S1)):
        a = np.asarray(v)
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError(f"{name} must be a probability")


def input_output_upper(xi0, xi1, xi2, S0, S1):
    """Largest click probability for xi0|phi0> + xi1|phi1> + xi2|phi2>.

    S0 and S1 are the click probabilities of |phi0> and |phi1>; nothing is
    assumed about |phi2>.
    """
    _check_io_inputs(xi0, xi1, xi2, S0, S1)
    r0, r1 = np.sqrt(S0), np.sqrt(S1)
    val = (xi0 * r0 + xi1 * r1 + xi2) ** 2
    return np.minimum(1.0, val)


def input_output_lower(xi0, xi1, xi2, S0, S1):
    """Smallest click probability for the same superposition, floored at 0."""
    _check_io_inputs(xi0, xi1, xi2, S0, S1)
    r0, r1 = np.sqrt(S0), np.sqrt(S1)
    val = xi0**2 * S0 + xi1**2 * S1 - 2 * (xi0 * xi1 * r0 * r1 + xi0 * xi2 * r0 + xi1 * xi2 * r1)
    return np.maximum(0.0, val)


def _phase_error_bracket(stats: WindowStats, coeffs: BoundCoefficients):
    c0, c1, c2 = coeffs.c0, coeffs.c1, coeffs.c2_bar
    oL, oR = np.sqrt(stats.S_O_L), np.sqrt(stats.S_O_R)
    bL, bR = np.sqrt(stats.S_B_L), np.sqrt(stats.S_B_R)
    return (
        c0**2 * (stats.S_O_R - stats.S_O_L)
        + c1**2 * (stats.S_B_R - stats.S_B_L)
        + c2**2
        + 2 * c0 * c1 * (oR * bR + oL * bL)
        + 2 * c0 * c2 * (oR + oL)
        + 2 * c1 * c2 * (bR + bL)
        + 4 * stats.S_Z_L
    )


def _key_scale(protocol: ProtocolConfig):
    return protocol.p0 * protocol.px * (1.0 - protocol.r) * protocol.N


def phase_error_count_upper(stats: WindowStats, protocol: ProtocolConfig, coeffs: BoundCoefficients):
    """Upper bound on the number of phase errors among untagged key bits.

    ``coeffs.c2_bar`` must be set. Negative brackets clamp to 0; use
    :func:`security_summary` to see whether clamping happened.
    """
    if coeffs.c2_bar is None:
        raise ValueError("coefficients need c2_bar")
    bracket = _phase_error_bracket(stats, coeffs)
    return 0.5 * _key_scale(protocol) * np.maximum(bracket, 0.0)


def untagged_count(stats: WindowStats, protocol: ProtocolConfig):
    return 2.0 * _key_scale(protocol) * (stats.S_Z_L + stats.S_Z_R)


def phase_error_rate(n_ph_upper, n_u):
    """n_ph / n_u clamped to [0, 1]; no untagged bits counts as rate 1."""
    n_ph_upper = np.asarray(n_ph_upper, dtype=float)
    n_u = np.asarray(n_u, dtype=float)
    positive = n_u > 0
    ratio = np.divide(n_ph_upper, n_u, out=np.ones(np.broadcast(n_ph_upper, n_u).shape), where=positive)
    out = np.clip(np.where(positive, ratio, 1.0), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def security_summary(stats: WindowStats, protocol: ProtocolConfig, coeffs: BoundCoefficients | None = None):
    """Run the full bound chain: coefficients, c2_bar, n_ph, n_u, e_ph."""
    if coeffs is None:
        coeffs = default_coefficients(protocol)
    if coeffs.c2_bar is None:
        coeffs = BoundCoefficients(coeffs.c0, coeffs.c1, c2_upper_bound(protocol, coeffs.c0, coeffs.c1))
    bracket = _phase_error_bracket(stats, coeffs)
    n_ph = 0.5 * _key_scale(protocol) * np.maximum(bracket, 0.0)
    n_u = untagged_count(stats, protocol)
    return SecuritySummary(
        c0=coeffs.c0,
        c1=coeffs.c1,
        c2_bar=coeffs.c2_bar,
        n_ph_upper=n_ph,
        n_u=n_u,
        e_ph_upper=phase_error_rate(n_ph, n_u),
        n_ph_clamped=bracket < 0,
    )


def twcc_phase_error(e_ph):
    """Phase-error bound after one round of pairing, 2e(1-e).

    The bound is taken as the worst value over [0, e_ph], which pins it at 1/2
    once e_ph reaches 1/2.
    """
    e = np.minimum(np.asarray(e_ph, dtype=float), 0.5)
    out = 2.0 * e * (1.0 - e)
    return float(out) if out.ndim == 0 else out


def _report(mode, secret, leak, N, insecure, details):
    N = np.asarray(N, dtype=float)
    raw = np.divide(secret - leak, N, out=np.zeros(np.broadcast(secret, leak, N).shape), where=N > 0)
    raw = np.where(insecure, np.minimum(raw, 0.0), raw)
    R = np.maximum(raw, 0.0)
    clamped = raw < 0
    if np.ndim(R) == 0:
        R, raw, clamped = float(R), float(raw), bool(clamped)
    return KeyRateReport(mode=mode, R=R, R_raw=raw, clamped=clamped, details=details)


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=den > 0)


def key_rate_original(summary: SecuritySummary, n_t, E_K, f, N) -> KeyRateReport:
    """Secret bits per window from the untagged bits, less error-correction leakage."""
    e = np.asarray(summary.e_ph_upper, dtype=float)
    secret = summary.n_u * (1.0 - binary_entropy(np.minimum(e, 0.5)))
    leak = f * n_t * binary_entropy(E_K)
    details = {"n_u": summary.n_u, "e_ph": summary.e_ph_upper, "n_t": n_t, "E_K": E_K}
    return _report("original", secret, leak, N, e >= 0.5, details)


def key_rate_twcc(summary: SecuritySummary, twcc: TwccStats, f, N) -> KeyRateReport:
    n_u_twcc = _safe_ratio(np.asarray(summary.n_u, dtype=float) ** 2, 2.0 * np.asarray(twcc.n_t, dtype=float))
    e_twcc = twcc_phase_error(summary.e_ph_upper)
    secret = n_u_twcc * (1.0 - binary_entropy(e_twcc))
    leak = f * (
        twcc.n_t1 * binary_entropy(twcc.E_1)
        + twcc.n_t2 * binary_entropy(twcc.E_2)
        + twcc.n_t3 * binary_entropy(twcc.E_3)
    )
    details = {
        "n_u": summary.n_u,
        "e_ph": summary.e_ph_upper,
        "n_u_twcc": n_u_twcc,
        "e_ph_twcc": e_twcc,
        "n_t": twcc.n_t,
        "n_t1": twcc.n_t1,
        "n_t2": twcc.n_t2,
        "n_t3": twcc.n_t3,
        "E_1": twcc.E_1,
        "E_2": twcc.E_2,
        "E_3": twcc.E_3,
    }
    return _report("twcc", secret, leak, N, np.asarray(e_twcc) >= 0.5, details)


def key_rate_aopp(summary: SecuritySummary, aopp: AoppStats, f, N) -> KeyRateReport:
    frac0 = _safe_ratio(aopp.n_u0, aopp.n_b0)
    frac1 = _safe_ratio(aopp.n_u1, aopp.n_b1)
    n_u_aopp = frac0 * frac1 * aopp.n_g
    e_aopp = twcc_phase_error(summary.e_ph_upper)
    secret = n_u_aopp * (1.0 - binary_entropy(e_aopp))
    leak = f * aopp.n_t_aopp * binary_entropy(aopp.E_aopp)
    details = {
        "n_u": summary.n_u,
        "e_ph": summary.e_ph_upper,
        "n_b0": aopp.n_b0,
        "n_b1": aopp.n_b1,
        "n_g": aopp.n_g,
        "n_u0": aopp.n_u0,
        "n_u1": aopp.n_u1,
        "n_u_aopp": n_u_aopp,
        "e_ph_aopp": e_aopp,
        "n_t_aopp": aopp.n_t_aopp,
        "E_aopp": aopp.E_aopp,
    }
    return _report("aopp", secret, leak, N, np.asarray(e_aopp) >= 0.5, details)
