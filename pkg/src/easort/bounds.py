"""Closed-form distortion bounds and exact small-instance expectations.

Lower bounds come from rate-distortion counting: any procedure limited to
t block transfers can distinguish only so many output permutations, so the
balls those outputs must cover put a floor under the achievable average
distortion.  Upper bounds for the k-pass sort come from its bucket-length
distribution.  Asymptotic expressions are evaluated with their hidden
constants set to 1 and must be reported as envelopes, not expectations.

Everything that can overflow is evaluated in the log2 domain; the exact
small-instance calculators use rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

from easort.iosim import ParameterError
from easort.sorting import compute_bucket_count

_LOG2E = math.log2(math.e)


def _check_params(n: int, m: int, b: int) -> None:
    if b <= 1:
        raise ParameterError(f"1 < b violated: b={b}")
    if 2 * b >= m:
        raise ParameterError(f"b < m/2 violated: b={b}, m={m}")
    if m >= n:
        raise ParameterError(f"m < n violated: m={m}, n={n}")


def _check_t(t: int) -> None:
    if t < 0:
        raise ParameterError(f"t must be nonnegative, got {t}")
    if t % 2 != 0:
        raise ParameterError(f"t must be even, got {t}")


def binary_entropy(p: float) -> float:
    """H2(p) in bits, with H2(0) = H2(1) = 0 by continuity."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def avg_esp_random_exact(n: int, b: int) -> Fraction:
    """Exact mean block footrule of a uniform random permutation vs sorted.

    Evaluates (1/n) * sum_{i,j} |ceil(i/b) - ceil(j/b)| in closed form for
    b dividing n; the value is n^2/(3b) - b/3, i.e. the asymptotic
    n^2/(3b) minus a nonnegative correction bounded by b.
    """
    if n < 1 or b < 1:
        raise ValueError("n and b must be positive")
    if n % b != 0:
        raise ValueError(f"b must divide n: n={n}, b={b}")
    nb = n // b
    return Fraction(b * b * (nb**3 - nb), 3 * n)


def avg_ee_random(n: int, b: int) -> int:
    """Mean block-mismatch count of a uniform random permutation: n - b."""
    if not 1 <= b <= n:
        raise ValueError(f"need 1 <= b <= n, got b={b}, n={n}")
    return n - b


def _log2_factorial(x: int) -> float:
    return math.lgamma(x + 1) / math.log(2)


def _log2_comb(x: int, y: int) -> float:
    if y < 0 or y > x:
        return float("-inf")
    return _log2_factorial(x) - _log2_factorial(y) - _log2_factorial(x - y)


def code_size_upper_log2(n: int, m: int, b: int, t: int) -> float:
    """log2 of the output-permutation count reachable with t transfers.

    t reads each pick one of n/b blocks, t/2 writes each pick one of
    C(m, b) memory subsets, and each block's first arrival contributes a
    b! factor; all evaluated with log-gamma, never materialising a
    factorial.
    """
    _check_params(n, m, b)
    _check_t(t)
    if t == 0:
        return 0.0
    log_nb = math.log2(n) - math.log2(b)
    return (
        t * log_nb
        + (t / 2) * _log2_comb(m, b)
        + min(n / b, t / 2) * _log2_factorial(b)
    )


@dataclass(frozen=True)
class ClampedBound:
    """A bound value plus whether clamping to its valid range fired."""

    value: float
    clamped: bool


def ee_lower_bound(n: int, m: int, b: int, t: int) -> ClampedBound:
    """Floor on mean block-mismatch fraction alpha = d_ee/n after t transfers.

    Evaluates, in base-2 logs,

        alpha >= log_{n/b}( n * b^((t/2 - min(n/b, t/2)) * b/n)
                            / (2e * b^2 * (n/b)^(t/n) * (em)^((t/2) * b/n)) )

    and clamps the result to [0, (n-1)/n].  A true lower bound for any
    algorithm; at desk scales it usually clamps to 0.
    """
    _check_params(n, m, b)
    _check_t(t)
    log_n = math.log2(n)
    log_b = math.log2(b)
    log_m = math.log2(m)
    log_nb = log_n - log_b
    excess = (Fraction(t, 2) - min(Fraction(n, b), Fraction(t, 2))) * Fraction(b, n)
    numer = log_n + float(excess) * log_b
    denom = (
        1.0
        + _LOG2E
        + 2.0 * log_b
        + float(Fraction(t, n)) * log_nb
        + float(Fraction(t * b, 2 * n)) * (_LOG2E + log_m)
    )
    alpha = (numer - denom) / log_nb
    hi = (n - 1) / n
    if alpha < 0.0:
        return ClampedBound(0.0, True)
    if alpha > hi:
        return ClampedBound(hi, True)
    return ClampedBound(alpha, False)


def esp_lower_bound(n: int, m: int, b: int, t: int) -> ClampedBound:
    """Floor on mean block footrule after t transfers, clamped below at 0.

    Evaluates r >= n^2 * b^((t/2 - min(n/b, t/2)) * b/n)
                   / (e^2 * 2b * (n/b)^(t/n) * (em)^((t/2) * b/n)) - n
    in the log domain.
    """
    _check_params(n, m, b)
    _check_t(t)
    log_n = math.log2(n)
    log_b = math.log2(b)
    log_m = math.log2(m)
    log_nb = log_n - log_b
    excess = (Fraction(t, 2) - min(Fraction(n, b), Fraction(t, 2))) * Fraction(b, n)
    log_frac = (
        2.0 * log_n
        + float(excess) * log_b
        - (1.0 + log_b)
        - 2.0 * _LOG2E
        - float(Fraction(t, n)) * log_nb
        - float(Fraction(t * b, 2 * n)) * (_LOG2E + log_m)
    )
    if log_frac > 1000.0:  # beyond float range; the bound is astronomically large
        return ClampedBound(math.inf, False)
    r = 2.0**log_frac - n
    if r < 0.0:
        return ClampedBound(0.0, True)
    return ClampedBound(r, False)


def easort_esp_upper(n: int, m: int, b: int, k: int) -> float:
    """Envelope on the k-pass sort's mean block footrule (constants 1).

    n^2 * b^(k-1) / m^k + n^2 * b^(2k) / m^(2k); an asymptotic envelope,
    not an exact expectation.
    """
    _check_params(n, m, b)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    log_n = math.log2(n)
    log_b = math.log2(b)
    log_m = math.log2(m)
    first = 2.0 * log_n + (k - 1) * log_b - k * log_m
    second = 2.0 * log_n + 2 * k * log_b - 2 * k * log_m
    return 2.0**first + 2.0**second


def easort_ee_upper(n: int, m: int, b: int, k: int) -> float:
    """Bound on the k-pass sort's mean block-mismatch count (raw, unclamped).

    (1 - m^k/(n b^(k-1))) * (n - m^k/b^(k-1)) + 2 n b^k / m^k, or 0 once
    m^k / b^(k-1) >= n (every bucket then fits in memory).  Values above n
    are meaningless as distortions and are clamped at the reporting layer,
    where the raw value is preserved alongside.
    """
    _check_params(n, m, b)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    q = Fraction(m**k, b ** (k - 1))
    if q >= n:
        return 0.0
    qf = float(q)
    return (1.0 - qf / n) * (n - qf) + 2.0 * n * float(Fraction(b**k, m**k))


@lru_cache(maxsize=None)
def _mean_block_footrule(length: int, b: int) -> Fraction:
    """Exact mean block footrule of a uniform arrangement of given length."""
    total = 0
    for i in range(1, length + 1):
        bi = (i + b - 1) // b
        for j in range(1, length + 1):
            total += abs(bi - (j + b - 1) // b)
    return Fraction(total, length)


def bucket_length_frequency(n: int, m: int, b: int, length: int, k: int = 1) -> int:
    """How often a bucket of the given length arises over all sample choices.

    First-bucket, last-bucket and interior-bucket counts summed; over all
    lengths the counts total C(n, p^(k-1) m) * p^k, one per bucket per
    sample choice.
    """
    p = compute_bucket_count(m, b)
    s = p ** (k - 1) * m
    if m % p != 0:
        raise ParameterError(f"bucket count {p} must divide m={m}")
    g = m // p
    first = comb(length - 1, g - 1) * comb(n - length, s - g)
    last = comb(length, g) * comb(n - length - 1, s - g - 1)
    interior = (p**k - 2) * comb(length - 1, g - 1) * comb(n - length - 1, s - g)
    return first + last + interior


def expected_bucket_distortion_exact(n: int, m: int, b: int, k: int = 1) -> Fraction:
    """Exact expected block footrule of the one-pass sort on a uniform input.

    Sums the exact per-length mean footrule weighted by the bucket-length
    frequency over lengths m/p .. n - m + m/p, normalised by C(n, m).
    Exact big-integer binomials keep this tractable only for small n, so
    the range is guarded; it serves as the oracle the simulated sorter is
    checked against.
    """
    if n > 60:
        raise ParameterError(f"exact calculator limited to n <= 60, got n={n}")
    if k != 1:
        raise ParameterError(f"exact calculator limited to k = 1, got k={k}")
    _check_params(n, m, b)
    p = compute_bucket_count(m, b)
    if p == 1:
        return _mean_block_footrule(n, b)
    if m % p != 0:
        raise ParameterError(f"bucket count {p} must divide m={m}")
    s = m
    g = m // p
    total = Fraction(0)
    for length in range(g, n - s + g + 1):
        total += _mean_block_footrule(length, b) * bucket_length_frequency(n, m, b, length, k)
    return total / comb(n, s)
