"""Sign-aware log-space arithmetic.

Numbers are carried as (sign, log-magnitude) pairs with sign in {-1, 0, +1}
and log-magnitude -inf exactly when sign is 0.  Sums use a max shift plus
Neumaier-compensated accumulation of the shifted exponentials, so long
series with wildly different term sizes stay accurate to double precision.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable

import numpy as np

NEG_INF = float("-inf")

# exp() overflows double beyond this
LOG_FLOAT_MAX = math.log(np.finfo(float).max)


def slog_from_float(x: float) -> tuple[int, float]:
    if x == 0.0:
        return (0, NEG_INF)
    return (1, math.log(x)) if x > 0 else (-1, math.log(-x))


def log_abs_int(i: int) -> float:
    """log|i| for arbitrarily large integers."""
    if i == 0:
        return NEG_INF
    i = abs(i)
    bits = i.bit_length()
    if bits <= 900:
        return math.log(i)
    shift = bits - 53
    return math.log(i >> shift) + shift * math.log(2)


def slog_from_fraction(fr: Fraction) -> tuple[int, float]:
    if fr == 0:
        return (0, NEG_INF)
    sign = 1 if fr > 0 else -1
    return (sign, log_abs_int(fr.numerator) - log_abs_int(fr.denominator))


def slog_to_float(sl: tuple[int, float]) -> float:
    sign, lm = sl
    if sign == 0:
        return 0.0
    if lm > LOG_FLOAT_MAX:
        return sign * math.inf
    return sign * math.exp(lm)


def slog_sum(terms: Iterable[tuple[int, float]]) -> tuple[int, float]:
    """Signed logsumexp with Neumaier compensation."""
    terms = [(s, l) for s, l in terms if s != 0]
    if not terms:
        return (0, NEG_INF)
    shift = max(l for _, l in terms)
    if shift == NEG_INF:
        return (0, NEG_INF)
    total = 0.0
    comp = 0.0
    for s, l in terms:
        v = s * math.exp(l - shift)
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
    total += comp
    if total == 0.0:
        return (0, NEG_INF)
    sign = 1 if total > 0 else -1
    return (sign, shift + math.log(abs(total)))


def logsumexp(logs: np.ndarray) -> float:
    """Plain logsumexp of nonnegative terms given by their logs."""
    logs = np.asarray(logs, dtype=float)
    if logs.size == 0:
        return NEG_INF
    shift = logs.max()
    if shift == NEG_INF:
        return NEG_INF
    return shift + math.log(np.exp(logs - shift).sum())


def nonneg_log_convolve(a: np.ndarray, b: np.ndarray, log_binom: np.ndarray) -> np.ndarray:
    """Binomial convolution in log space for nonnegative sequences.

    Given log-moments a, b of two independent variables (entries -inf where
    the moment vanishes), returns the log-moments of their sum:
    c[k] = logsum_j ( C(k,j) a[j] b[k-j] ).
    """
    kmax = len(a) - 1
    idx = np.subtract.outer(np.arange(kmax + 1), np.arange(kmax + 1))
    valid = idx >= 0
    b_shift = np.where(valid, b[np.clip(idx, 0, kmax)], NEG_INF)
    m = log_binom + a[np.newaxis, :] + b_shift
    shift = m.max(axis=1)
    out = np.full(kmax + 1, NEG_INF)
    ok = shift > NEG_INF
    if ok.any():
        rows = np.exp(m[ok] - shift[ok, np.newaxis]).sum(axis=1)
        out[ok] = shift[ok] + np.log(rows)
    return out


def log_binom_table(kmax: int) -> np.ndarray:
    """log C(k, j) as a (kmax+1, kmax+1) array, -inf where j > k."""
    lg = np.array([math.lgamma(i + 1) for i in range(kmax + 1)])
    k = np.arange(kmax + 1)[:, np.newaxis]
    j = np.arange(kmax + 1)[np.newaxis, :]
    with np.errstate(invalid="ignore"):
        t = lg[k] - lg[j] - lg[np.clip(k - j, 0, kmax)]
    return np.where(j <= k, t, NEG_INF)
