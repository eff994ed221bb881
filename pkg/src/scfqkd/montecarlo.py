"""Seeded finite-N simulation of the three-party protocol.

Random stream: window ``i`` consumes doubles ``2i`` and ``2i+1`` of a Philox
generator keyed by the seed. The first double picks the source pairing and
test/key role, the second the detector outcome. Chunks start at even window
offsets and jump straight to their counter position, so the output depends
only on ``(config, seed)``, not on chunk size or worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, poisson

from .channel import class_click_probs
from .core import WINDOW_CLASSES, ChannelConfig, ObservedCounts, ProtocolConfig, WindowStats, validate_config
from .rates import AoppStats, TwccStats, security_summary

__all__ = [
    "ALICE_BIT",
    "BOB_BIT",
    "RawKeySample",
    "SimSeed",
    "simulate_counts",
    "estimate_stats",
    "expected_counts",
    "simulate_twcc",
    "simulate_aopp",
    "poisson_zscore",
    "e_ph_from_counts",
    "e_ph_bootstrap_sigma",
]

# Raw bits per class in WINDOW_CLASSES order (O, B, ZA, ZB).
ALICE_BIT = np.array([0, 1, 1, 0], dtype=np.uint8)
BOB_BIT = np.array([1, 0, 1, 0], dtype=np.uint8)
UNTAGGED = np.array([False, False, True, True])

DEFAULT_CHUNK = 1 << 22


@dataclass(frozen=True)
class SimSeed:
    """Seed plus the chunking used to walk the window stream."""

    seed: int
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.chunk_size < 2 or self.chunk_size % 2:
            raise ValueError("chunk_size must be an even number >= 2")

    def generator(self, first_window: int) -> np.random.Generator:
        # Philox emits 4 doubles per counter step, i.e. two windows.
        bitgen = np.random.Philox(key=self.seed)
        bitgen.advance(first_window // 2)
        return np.random.Generator(bitgen)


@dataclass(frozen=True)
class RawKeySample:
    """Effective key-generation windows in window order.

    ``cls`` indexes WINDOW_CLASSES; ``detector`` is 0 for L and 1 for R.
    """

    cls: np.ndarray
    detector: np.ndarray

    def __post_init__(self):
        cls = np.asarray(self.cls, dtype=np.int8)
        det = np.asarray(self.detector, dtype=np.int8)
        if cls.shape != det.shape or cls.ndim != 1:
            raise ValueError("cls and detector must be 1-d arrays of equal length")
        object.__setattr__(self, "cls", cls)
        object.__setattr__(self, "detector", det)

    @classmethod
    def from_classes(cls, classes, detector=None):
        classes = np.asarray(classes)
        if detector is None:
            detector = np.zeros(len(classes), dtype=np.int8)
        return cls(classes, detector)

    def __len__(self):
        return len(self.cls)

    @property
    def alice(self) -> np.ndarray:
        return ALICE_BIT[self.cls]

    @property
    def bob(self) -> np.ndarray:
        return BOB_BIT[self.cls]

    @property
    def untagged(self) -> np.ndarray:
        return UNTAGGED[self.cls]


def _class_table(protocol: ProtocolConfig, channel: ChannelConfig):
    p0, px, r = protocol.p0, protocol.px, protocol.r
    weight = np.array([p0 * p0, px * px, px * p0, p0 * px])
    # category = 2 * class + role, role 0 = test, 1 = key
    cat_prob = np.column_stack([weight * r, weight * (1.0 - r)]).ravel()
    cum = np.cumsum(cat_prob)
    cum[-1] = 1.0
    probs = class_click_probs(protocol, channel)
    S = np.array([probs[c] for c in WINDOW_CLASSES], dtype=float)
    return cum, S


def _run_chunk(start, size, seed: SimSeed, cum, S):
    u = seed.generator(start).random(2 * size).reshape(size, 2)
    cat = np.searchsorted(cum, u[:, 0], side="right")
    cat = np.minimum(cat, 7)
    cls = cat >> 1
    is_key = (cat & 1).astype(bool)
    s_L = S[cls, 0]
    det = np.where(u[:, 1] < s_L, 0, np.where(u[:, 1] < s_L + S[cls, 1], 1, 2))
    effective = det < 2
    test_eff = effective & ~is_key
    test = np.bincount(cls[test_eff] * 2 + det[test_eff], minlength=8)
    key_eff = effective & is_key
    k_cls = cls[key_eff].astype(np.int8)
    k_det = det[key_eff].astype(np.int8)
    return test, k_cls, k_det


def simulate_counts(
    protocol: ProtocolConfig,
    channel: ChannelConfig,
    seed: int | SimSeed,
    workers: int = 1,
) -> tuple[ObservedCounts, RawKeySample]:
    """Sample ``protocol.N`` windows and tally test counts and the raw key."""
    validate_config(protocol, channel)
    if not isinstance(seed, SimSeed):
        seed = SimSeed(int(seed))
    N = int(protocol.N)
    cum, S = _class_table(protocol, channel)
    starts = list(range(0, N, seed.chunk_size))
    jobs = [(s, min(seed.chunk_size, N - s)) for s in starts]

    def work(job):
        return _run_chunk(job[0], job[1], seed, cum, S)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    test = np.zeros(8, dtype=np.int64)
    for t, _, _ in results:
        test += t
    if results:
        k_cls = np.concatenate([r[1] for r in results])
        k_det = np.concatenate([r[2] for r in results])
    else:
        k_cls = np.zeros(0, dtype=np.int8)
        k_det = np.zeros(0, dtype=np.int8)
    key_counts = np.bincount(k_cls.astype(np.int64) * 2 + k_det, minlength=8).reshape(4, 2)
    # test-window classes O, B and both single-strong orientations
    counts = ObservedCounts(
        n_O_L=int(test[0]),
        n_O_R=int(test[1]),
        n_B_L=int(test[2]),
        n_B_R=int(test[3]),
        n_Z_L=int(test[4] + test[6]),
        n_Z_R=int(test[5] + test[7]),
        key_counts=key_counts,
        N=N,
    )
    return counts, RawKeySample(k_cls, k_det)


def estimate_stats(counts: ObservedCounts, protocol: ProtocolConfig) -> WindowStats:
    """Turn test-window counts into per-window click frequencies.

    Works element-wise when the count fields are arrays.
    """
    N, p0, px, r = protocol.N, protocol.p0, protocol.px, protocol.r
    if not r > 0:
        raise ValueError("estimating frequencies needs test windows (r > 0)")
    if N == 0:
        zero = 0.0
        return WindowStats(zero, zero, zero, zero, zero, zero, E_K=0.0, D_eff=0.0)
    o = N * p0 * p0 * r
    b = N * px * px * r
    z = 2.0 * N * p0 * px * r
    key = np.asarray(counts.key_counts)
    total = key.sum()
    wrong = key[:2].sum()
    E_K = float(wrong / total) if total > 0 else 0.0
    D_eff = float(total / (N * (1.0 - r)))
    return WindowStats(
        counts.n_O_L / o,
        counts.n_O_R / o,
        counts.n_B_L / b,
        counts.n_B_R / b,
        counts.n_Z_L / z,
        counts.n_Z_R / z,
        E_K=E_K,
        D_eff=D_eff,
    )


def expected_counts(protocol: ProtocolConfig, channel: ChannelConfig) -> dict:
    """Mean test counts and key-class counts of an N-window run."""
    N, p0, px, r = protocol.N, protocol.p0, protocol.px, protocol.r
    probs = class_click_probs(protocol, channel)
    weight = {"O": p0 * p0, "B": px * px, "ZA": px * p0, "ZB": p0 * px}
    out = {
        "n_O_L": N * r * weight["O"] * probs["O"][0],
        "n_O_R": N * r * weight["O"] * probs["O"][1],
        "n_B_L": N * r * weight["B"] * probs["B"][0],
        "n_B_R": N * r * weight["B"] * probs["B"][1],
        "n_Z_L": N * r * (weight["ZA"] * probs["ZA"][0] + weight["ZB"] * probs["ZB"][0]),
        "n_Z_R": N * r * (weight["ZA"] * probs["ZA"][1] + weight["ZB"] * probs["ZB"][1]),
    }
    for c in WINDOW_CLASSES:
        out[f"key_{c}"] = N * (1.0 - r) * weight[c] * sum(probs[c])
    # Bob's zeros come from ZB, his ones from ZA
    out["n_u0"] = out["key_ZB"]
    out["n_u1"] = out["key_ZA"]
    return out


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def simulate_twcc(sample: RawKeySample, seed: int) -> TwccStats:
    """Random pairing of Bob's bits, keeping the first bit of parity-matched pairs.

    An odd leftover bit is dropped.
    """
    rng = np.random.default_rng(seed)
    n = len(sample)
    perm = rng.permutation(n)[: 2 * (n // 2)]
    i, j = perm[0::2], perm[1::2]
    a, b = sample.alice, sample.bob
    kept = (a[i] ^ a[j]) == (b[i] ^ b[j])
    err = a[i] != b[i]
    kind = np.where(b[i] != b[j], 3, np.where(b[i] == 0, 1, 2))
    n_t = {}
    E = {}
    for k in (1, 2, 3):
        sel = kept & (kind == k)
        n_t[k] = int(sel.sum())
        E[k] = _ratio(int((sel & err).sum()), n_t[k])
    return TwccStats(n_t=n, n_t1=n_t[1], n_t2=n_t[2], n_t3=n_t[3], E_1=E[1], E_2=E[2], E_3=E[3])


def simulate_aopp(sample: RawKeySample, seed: int) -> AoppStats:
    """Pair Bob's zeros with his ones; keep the zero-member of Alice-odd pairs."""
    rng = np.random.default_rng(seed)
    a, b = sample.alice, sample.bob
    zeros = rng.permutation(np.flatnonzero(b == 0))
    ones = rng.permutation(np.flatnonzero(b == 1))
    n_g = min(len(zeros), len(ones))
    i, j = zeros[:n_g], ones[:n_g]
    survive = (a[i] ^ a[j]) == 1
    n_surv = int(survive.sum())
    n_err = int((survive & (a[i] != b[i])).sum())
    untagged = sample.untagged
    return AoppStats(
        n_b0=len(zeros),
        n_b1=len(ones),
        n_g=n_g,
        n_u0=int((untagged & (b == 0)).sum()),
        n_u1=int((untagged & (b == 1)).sum()),
        n_t_aopp=n_surv,
        E_aopp=_ratio(n_err, n_surv),
        empty=n_surv == 0,
    )


def poisson_zscore(observed, expected: float) -> float:
    """Signed normal quantile of the Poisson tail beyond ``observed``.

    Equals (observed - expected)/sqrt(expected) for large counts and stays
    meaningful when the expected count is well below one.
    """
    if expected <= 0:
        return 0.0 if observed == 0 else float("inf")
    if observed > expected:
        z = norm.isf(poisson.sf(observed - 1, expected))
    elif observed < expected:
        z = -norm.isf(poisson.cdf(observed, expected))
    else:
        return 0.0
    if observed > expected:
        return float(max(z, 0.0))
    return float(min(z, 0.0))


def e_ph_from_counts(counts: ObservedCounts, protocol: ProtocolConfig):
    return security_summary(estimate_stats(counts, protocol), protocol).e_ph_upper


def e_ph_bootstrap_sigma(protocol: ProtocolConfig, channel: ChannelConfig, n_boot: int = 4000, seed: int = 0):
    """Spread of the finite-N phase-error estimate under Poisson test counts.

    Counts are drawn around their analytic means, so this is the sampling
    distribution of the estimator under the honest-channel model.
    """
    rng = np.random.default_rng(seed)
    mean = expected_counts(protocol, channel)
    names = ("n_O_L", "n_O_R", "n_B_L", "n_B_R", "n_Z_L", "n_Z_R")
    draws = {k: rng.poisson(mean[k], size=n_boot) for k in names}
    o = protocol.N * protocol.p0**2 * protocol.r
    b = protocol.N * protocol.px**2 * protocol.r
    z = 2.0 * protocol.N * protocol.p0 * protocol.px * protocol.r
    stats = WindowStats(
        draws["n_O_L"] / o,
        draws["n_O_R"] / o,
        draws["n_B_L"] / b,
        draws["n_B_R"] / b,
        draws["n_Z_L"] / z,
        draws["n_Z_R"] / z,
    )
    e = np.asarray(security_summary(stats, protocol).e_ph_upper)
    return float(np.std(e, ddof=1))
