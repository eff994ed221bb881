import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scfqkd.channel import asymptotic_stats
from scfqkd.core import REFERENCE_CHANNEL, WINDOW_CLASSES, ObservedCounts, ProtocolConfig
from scfqkd.montecarlo import (
    RawKeySample,
    SimSeed,
    e_ph_from_counts,
    estimate_stats,
    expected_counts,
    poisson_zscore,
    simulate_aopp,
    simulate_counts,
    simulate_twcc,
)
from scfqkd.pairing import expected_aopp, expected_twcc

# Bright, noisy setting so every test-window class collects counts quickly.
BUSY = ProtocolConfig.symmetric(0.01, 0.3, 0.5, r=0.5, N=200_000)
BUSY_CHANNEL = REFERENCE_CHANNEL.replace(p_d=1e-4)


def test_zero_windows():
    counts, sample = simulate_counts(BUSY.replace(N=0), BUSY_CHANNEL, 1)
    assert counts == ObservedCounts()
    assert len(sample) == 0


def test_no_click_source():
    proto = ProtocolConfig.symmetric(0.0, 0.0, 0.5, r=0.3, N=100_000)
    counts, sample = simulate_counts(proto, REFERENCE_CHANNEL.replace(p_d=0.0), 5)
    assert sum(counts.test_counts.values()) == 0 and len(sample) == 0


def test_deterministic_across_workers_and_chunks():
    base, sample = simulate_counts(BUSY, BUSY_CHANNEL, SimSeed(9, chunk_size=1 << 16))
    for seed, workers in [(SimSeed(9, chunk_size=1 << 12), 4), (SimSeed(9, chunk_size=1 << 20), 1), (9, 3)]:
        counts, other = simulate_counts(BUSY, BUSY_CHANNEL, seed, workers=workers)
        assert counts == base
        assert np.array_equal(other.cls, sample.cls) and np.array_equal(other.detector, sample.detector)
    assert simulate_twcc(sample, 3) == simulate_twcc(other, 3)
    assert simulate_aopp(sample, 3) == simulate_aopp(other, 3)


def test_seed_changes_output():
    a, _ = simulate_counts(BUSY, BUSY_CHANNEL, 1)
    b, _ = simulate_counts(BUSY, BUSY_CHANNEL, 2)
    assert a != b


def test_odd_chunk_rejected():
    with pytest.raises(ValueError):
        SimSeed(1, chunk_size=1001)


def test_untagged_consistency():
    counts, sample = simulate_counts(BUSY, BUSY_CHANNEL, 11)
    ao = simulate_aopp(sample, 11)
    assert ao.n_u0 + ao.n_u1 == counts.key_counts[2:].sum() == sample.untagged.sum()
    assert ao.n_u0 == counts.key_counts[3].sum() and ao.n_u1 == counts.key_counts[2].sum()


def test_estimator_unbiased_over_seeds():
    names = ("S_O_L", "S_O_R", "S_B_L", "S_B_R", "S_Z_L", "S_Z_R")
    draws = np.array([
        [getattr(estimate_stats(simulate_counts(BUSY, BUSY_CHANNEL, s)[0], BUSY), n) for n in names]
        for s in range(100)
    ])
    truth = asymptotic_stats(BUSY, BUSY_CHANNEL)
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    for k, name in enumerate(names):
        assert abs(draws[:, k].mean() - getattr(truth, name)) < 5 * se[k], name


def test_estimate_zero_counts():
    s = estimate_stats(ObservedCounts(N=1000), BUSY.replace(N=1000))
    assert (s.S_O_L, s.S_B_R, s.S_Z_L, s.E_K, s.D_eff) == (0, 0, 0, 0, 0)


def test_estimate_inversion_identity():
    proto = ProtocolConfig.symmetric(0.0, 0.1, 0.4, r=0.25, N=1_000_000)
    n = round(1_000_000 * 0.16 * 0.25 * 0.003)
    s = estimate_stats(ObservedCounts(n_O_R=n, N=1_000_000), proto)
    assert s.S_O_R == pytest.approx(0.003, rel=1e-12)


def test_estimate_needs_test_windows():
    with pytest.raises(ValueError):
        estimate_stats(ObservedCounts(), BUSY.replace(r=0.0))


def test_counts_agree_with_analytic():
    counts, _ = simulate_counts(BUSY.replace(N=2_000_000), BUSY_CHANNEL, 4)
    mean = expected_counts(BUSY.replace(N=2_000_000), BUSY_CHANNEL)
    for key, obs in counts.test_counts.items():
        assert abs(poisson_zscore(obs, mean[key])) <= 5, key
    for i, c in enumerate(WINDOW_CLASSES):
        assert abs(poisson_zscore(int(counts.key_counts[i].sum()), mean[f"key_{c}"])) <= 5, c


def test_e_ph_estimate_converges():
    proto = BUSY.replace(N=4_000_000, r=0.5)
    counts, _ = simulate_counts(proto, BUSY_CHANNEL, 8)
    from scfqkd.pipeline import evaluate

    assert e_ph_from_counts(counts, proto) == pytest.approx(evaluate(proto, BUSY_CHANNEL).details["e_ph"], abs=0.02)


@pytest.mark.parametrize(
    "obs, mean, z",
    [(0, 0.0, 0.0), (100, 100.0, 0.0), (0, 1e-3, 0.0), (3, 1e-3, None)],
)
def test_poisson_zscore(obs, mean, z):
    got = poisson_zscore(obs, mean)
    if z is None:
        assert got > 5
    else:
        assert abs(got - z) < 1e-3


def test_poisson_zscore_gaussian_regime():
    assert poisson_zscore(10_300, 10_000.0) == pytest.approx(3.0, abs=0.05)
    assert poisson_zscore(9_700, 10_000.0) == pytest.approx(-3.0, abs=0.05)


# ------------------------------------------------------------ post-processing


@pytest.mark.parametrize("k", [1, 50, 1000])
def test_twcc_error_free(k):
    rng = np.random.default_rng(k)
    sample = RawKeySample.from_classes(rng.integers(2, 4, size=2 * k))
    tw = simulate_twcc(sample, 0)
    assert tw.n_t1 + tw.n_t2 + tw.n_t3 == k
    assert tw.E_1 == tw.E_2 == tw.E_3 == 0


def test_twcc_global_flip():
    rng = np.random.default_rng(1)
    sample = RawKeySample.from_classes(rng.integers(0, 2, size=400))
    tw = simulate_twcc(sample, 0)
    assert tw.n_t1 + tw.n_t2 + tw.n_t3 == 200
    for n, e in ((tw.n_t1, tw.E_1), (tw.n_t2, tw.E_2), (tw.n_t3, tw.E_3)):
        assert e == (1 if n else 0)


def test_twcc_odd_leftover_dropped():
    tw = simulate_twcc(RawKeySample.from_classes([2, 3, 2]), 0)
    assert tw.n_t == 3 and tw.n_t1 + tw.n_t2 + tw.n_t3 == 1


def test_aopp_error_free():
    sample = RawKeySample.from_classes([2] * 30 + [3] * 45)
    ao = simulate_aopp(sample, 0)
    assert (ao.n_b0, ao.n_b1, ao.n_g, ao.n_t_aopp, ao.E_aopp) == (45, 30, 30, 30, 0.0)
    assert not ao.empty


def test_aopp_without_zeros():
    ao = simulate_aopp(RawKeySample.from_classes([2, 2, 0]), 0)
    assert ao.n_b0 == 0 and ao.n_g == 0 and ao.empty and ao.E_aopp == 0


MIX = np.array([0.05, 0.03, 0.5, 0.42])


def mixed_sample(n, seed):
    cls = np.random.default_rng(seed).choice(4, size=n, p=MIX)
    sample = RawKeySample.from_classes(cls)
    q = dict(zip(WINDOW_CLASSES, np.bincount(cls, minlength=4) / n))
    return sample, q


def within(obs, n, p, k=5.0):
    return abs(obs - n * p) <= k * np.sqrt(n * p * (1 - p)) + 1e-9


def test_twcc_matches_pairing_model():
    sample, q = mixed_sample(200_000, 3)
    tw = simulate_twcc(sample, 3)
    ref = expected_twcc(len(sample), q)
    pairs = len(sample) // 2
    for obs, exp_n, E_obs, E_ref in (
        (tw.n_t1, ref.n_t1, tw.E_1, ref.E_1),
        (tw.n_t2, ref.n_t2, tw.E_2, ref.E_2),
        (tw.n_t3, ref.n_t3, tw.E_3, ref.E_3),
    ):
        assert within(obs, pairs, exp_n / pairs)
        assert within(round(E_obs * obs), obs, E_ref)


def test_aopp_matches_pairing_model():
    sample, q = mixed_sample(200_000, 4)
    ao = simulate_aopp(sample, 4)
    ref = expected_aopp(len(sample), q)
    assert ao.n_b0 == pytest.approx(ref.n_b0) and ao.n_g == pytest.approx(ref.n_g)
    assert within(ao.n_t_aopp, ao.n_g, ref.n_t_aopp / ref.n_g)
    assert within(round(ao.E_aopp * ao.n_t_aopp), ao.n_t_aopp, ref.E_aopp)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=300), st.integers(0, 2**32 - 1))
def test_conservation(classes, seed):
    sample = RawKeySample.from_classes(np.array(classes, dtype=np.int8))
    tw = simulate_twcc(sample, seed)
    assert tw.n_t1 + tw.n_t2 + tw.n_t3 <= len(classes) // 2
    ao = simulate_aopp(sample, seed)
    assert ao.n_t_aopp <= ao.n_g == min(ao.n_b0, ao.n_b1)
    assert ao.n_b0 + ao.n_b1 == len(classes)
    assert 0 <= ao.E_aopp <= 1 and all(0 <= e <= 1 for e in (tw.E_1, tw.E_2, tw.E_3))
