import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mpclab import primitives
from mpclab.primitives import (
    detection_probability,
    equality_bits,
    equality_test,
    field_width,
    hitting_set_estimate,
    is_prime,
    primes_upto,
    sample_prime,
    wilson_interval,
)


def trial_division(n):
    if n < 2:
        return False
    return all(n % d for d in range(2, math.isqrt(n) + 1))


def test_sieve_agrees_with_trial_division():
    assert primes_upto(200) == [p for p in range(201) if trial_division(p)]


def test_primality_of_known_large_values():
    mersenne_exponents = (61, 89, 107, 127, 521)
    for e in mersenne_exponents:
        assert is_prime(2**e - 1)
    # strong pseudoprimes to several small bases, and a semiprime of two large primes
    for n in (3215031751, 3825123056546413051, 318665857834031151167461, (2**61 - 1) * (2**89 - 1)):
        assert not is_prime(n)


def test_miller_rabin_region_agrees_with_trial_division():
    rng = random.Random(5)
    lo = primitives.SIEVE_LIMIT + 1
    for _ in range(300):
        n = rng.randrange(lo, lo + 10**6)
        assert is_prime(n) == trial_division(n)


def test_sample_prime_tiny_range():
    rng = random.Random(0)
    assert {sample_prime(2, 2, rng) for _ in range(200)} == {2, 3}


def test_sample_prime_uniform_chi_square():
    rng = random.Random(11)
    primes = primes_upto(64)
    draws = 100_000
    counts = {p: 0 for p in primes}
    for _ in range(draws):
        counts[sample_prime(4, 3, rng)] += 1
    observed = np.array([counts[p] for p in primes])
    _, pvalue = stats.chisquare(observed)
    assert pvalue > 1e-3


def test_sample_prime_wide_range_all_prime():
    rng = random.Random(3)
    for _ in range(1000):
        p = sample_prime(256, 8, rng)
        assert 2 <= p <= 256**8
        assert primitives._miller_rabin(p, primitives._DET_BASES)


def test_sample_prime_rejects_bad_parameters():
    with pytest.raises(ValueError):
        sample_prime(1, 2, random.Random(0))


@given(st.text(alphabet="01", max_size=64), st.integers(2, 64), st.integers(1, 6), st.integers(0, 2**32))
@settings(max_examples=60, deadline=None)
def test_equal_strings_always_pass(m, n, lam, seed):
    flag, bits = equality_test(m, m, n, lam, random.Random(seed))
    assert flag == 1
    assert bits == equality_bits(n, lam)


@given(st.integers(2, 4096), st.integers(1, 8))
def test_bit_cost_bound(n, lam):
    assert n**lam - 1 < 2 ** field_width(n, lam)
    if n**lam == 2:
        # the prime 2 alone needs a two-bit field
        assert equality_bits(n, lam) == 5
        return
    t = lam * math.log2(n)
    assert equality_bits(n, lam) <= 2 * math.ceil(t) + math.ceil(math.log2(t)) + 1


def test_completeness_all_8_bit_strings():
    rng = random.Random(0)
    for v in range(256):
        m = format(v, "08b")
        assert equality_test(m, m, 8, 2, rng)[0] == 1


def test_detection_probability_brute_force_example():
    # 6 vs 0 over primes {2, 3, 5, 7}: 2 and 3 collide, 5 and 7 detect
    assert detection_probability("110", "000", 2, 3) == pytest.approx(0.5)
    rng = random.Random(1)
    hits = sum(equality_test("110", "000", 2, 3, rng)[0] == 0 for _ in range(20_000))
    assert abs(hits / 20_000 - 0.5) < 0.02


def test_false_accept_rate_64_bit_strings():
    rng = random.Random(7)
    n, lam, trials = 64, 4, 100_000
    accepted = 0
    for _ in range(trials):
        a = rng.getrandbits(64)
        b = rng.getrandbits(64)
        if a == b:
            continue
        flag, _ = equality_test(format(a, "064b"), format(b, "064b"), n, lam, rng)
        accepted += flag
    _, hi = wilson_interval(accepted, trials)
    assert accepted / trials <= 1 / n**lam + 5e-4
    assert hi < 1e-3


def test_hitting_set_edges():
    assert hitting_set_estimate(100, 20, 1.0, 200, 0)[0] == 1.0
    assert hitting_set_estimate(100, 20, 0.0, 200, 0)[0] == 1.0
    with pytest.raises(ValueError):
        hitting_set_estimate(10, 20, 0.5, 10, 0)


def test_hitting_set_large_sample():
    est, (lo, _) = hitting_set_estimate(1000, 200, 0.1, 10_000, np.random.default_rng(2))
    assert est >= 0.99


def test_wilson_interval_brackets_estimate():
    lo, hi = wilson_interval(30, 100)
    assert lo < 0.3 < hi
    assert wilson_interval(0, 0) == (0.0, 1.0)
    assert wilson_interval(0, 500)[0] == 0.0
