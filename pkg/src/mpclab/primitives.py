"""Modular fingerprinting for succinct equality tests, and sampling helpers.

Bit strings are read most-significant-bit first; the empty string is 0.
On the wire the tester's message is the prime and the residue, each in a
fixed field of ``field_width(n, lam)`` bits, followed by the 1-bit verdict.
"""
from __future__ import annotations

import math
import random
from functools import lru_cache

import numpy as np

# primality is decided by table lookup below this bound
SIEVE_LIMIT = 1 << 24

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
# Miller-Rabin with these bases is exact below this bound
_DET_BASES = _SMALL_PRIMES
_DET_LIMIT = 3_317_044_064_679_887_385_961_981
# trial division by every prime below this bound, done as one gcd with their product
_TRIAL_BOUND = 128


@lru_cache(maxsize=1)
def _sieve() -> np.ndarray:
    flags = np.ones(SIEVE_LIMIT + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, math.isqrt(SIEVE_LIMIT) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return flags


def _miller_rabin(n: int, bases) -> bool:
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in bases:
        if a % n == 0:
            continue
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@lru_cache(maxsize=1)
def _primorial() -> int:
    return math.prod(np.flatnonzero(_sieve()[:_TRIAL_BOUND]).tolist())


def _jacobi(a: int, n: int) -> int:
    a %= n
    result = 1
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                result = -result
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            result = -result
        a %= n
    return result if n == 1 else 0


def _strong_lucas(n: int) -> bool:
    """Strong Lucas probable-prime test with Selfridge parameters; ``n`` odd and not a square."""
    D = 5
    while True:
        j = _jacobi(D, n)
        if j == -1:
            break
        if j == 0 and abs(D) != n:
            return False
        D = -D - 2 if D > 0 else -D + 2
    P, Q = 1, (1 - D) // 4
    d, s = n + 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1

    def half(x: int) -> int:
        return (x + n if x & 1 else x) // 2 % n

    U, V, Qk = 1, P, Q % n
    for bit in bin(d)[3:]:
        U, V, Qk = U * V % n, (V * V - 2 * Qk) % n, Qk * Qk % n
        if bit == "1":
            U, V, Qk = half(P * U + V), half(D * U + P * V), Qk * Q % n
    if U == 0 or V == 0:
        return True
    for _ in range(s - 1):
        V, Qk = (V * V - 2 * Qk) % n, Qk * Qk % n
        if V == 0:
            return True
    return False


def is_prime(n: int) -> bool:
    """Exact below 3.3e24 (sieve, then 13 fixed Miller-Rabin bases); Baillie-PSW above."""
    if n < 2:
        return False
    if n <= SIEVE_LIMIT:
        return bool(_sieve()[n])
    if math.gcd(n, _primorial()) != 1:
        return False
    if n < _DET_LIMIT:
        return _miller_rabin(n, _DET_BASES)
    if not _miller_rabin(n, (2,)):
        return False
    if math.isqrt(n) ** 2 == n:
        return False
    return _strong_lucas(n)


def primes_upto(limit: int) -> list[int]:
    if limit <= SIEVE_LIMIT:
        return np.flatnonzero(_sieve()[: limit + 1]).tolist()
    return [p for p in range(2, limit + 1) if is_prime(p)]


def sample_prime(n: int, lam: int, rng: random.Random) -> int:
    """Uniform prime in ``[2, n**lam]`` by rejection sampling."""
    if n < 2 or lam < 1:
        raise ValueError("need n >= 2 and lam >= 1")
    top = n**lam
    # candidates are 2 and the odd numbers up to top, each equally likely, so every prime is too
    odd = (top - 1) // 2
    while True:
        r = rng.randrange(odd + 1)
        candidate = 2 * r + 1 if r else 2
        if is_prime(candidate):
            return candidate


def field_width(n: int, lam: int) -> int:
    """Bits needed for any prime (and any residue) drawn from ``[2, n**lam]``."""
    return max(2, (n**lam - 1).bit_length())


def equality_bits(n: int, lam: int) -> int:
    return 2 * field_width(n, lam) + 1


def to_int(bits: str) -> int:
    return int(bits, 2) if bits else 0


def equality_test(m1: str, m2: str, n: int, lam: int, rng: random.Random) -> tuple[int, int]:
    """Run the two-message fingerprint test between holders of ``m1`` and ``m2``.

    The holder of ``m1`` draws the prime from ``rng``.  Returns the verdict
    (1 means "looks equal") and the number of bits exchanged.
    """
    p = sample_prime(n, lam, rng)
    flag = int(to_int(m1) % p == to_int(m2) % p)
    return flag, equality_bits(n, lam)


def detection_probability(m1: str, m2: str, n: int, lam: int) -> float:
    """Exact probability that the test outputs 0, by enumerating the prime range."""
    primes = primes_upto(n**lam)
    a, b = to_int(m1), to_int(m2)
    caught = sum(1 for p in primes if a % p != b % p)
    return caught / len(primes)


# ---------------------------------------------------------------------------


def wilson_interval(successes: int, trials: int, z: float = 2.5758) -> tuple[float, float]:
    """Wilson score interval; the default z gives 99% two-sided coverage."""
    if trials == 0:
        return 0.0, 1.0
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def hitting_set_estimate(
    n: int, H_size: int, p: float, trials: int, rng: np.random.Generator | int
) -> tuple[float, tuple[float, float]]:
    """Monte-Carlo estimate of ``P[|H & R| >= p|H|/2]`` for a p-sampled ``R``.

    ``H`` is taken to be the first ``H_size`` indices.  Returns the estimate
    and its Wilson interval.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if not 0 <= H_size <= n:
        raise ValueError("H_size must lie in [0, n]")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    # only membership of H's elements matters for the event
    hits = (rng.random((trials, H_size)) < p).sum(axis=1)
    ok = int((hits >= p * H_size / 2).sum())
    return ok / trials, wilson_interval(ok, trials)
