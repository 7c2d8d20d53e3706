"""Spike priors and exact moments of the replica overlap.

A spike prior draws the planted vector x with i.i.d. entries, normalized to
mean 0 and second moment 1.  Everything downstream consumes the moments of
the replica overlap S = <x1, x2> between two independent draws; those are
computed here, exactly in big rationals when possible and in sign-aware
log space otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from .rng import make_rng
from .signedlog import (
    NEG_INF,
    log_binom_table,
    nonneg_log_convolve,
    slog_from_fraction,
)

KINDS = ("rademacher", "sparse_rademacher", "gaussian_iid", "discrete_custom")

# largest n * kmax for which overlap moments default to exact rationals
EXACT_TERM_OPS_CAP = 10**6

# largest |support|^n that enumerate_support will expand
SUPPORT_CAP = 2**20


class PriorError(ValueError):
    """A prior specification violates one of its invariants."""


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise PriorError(f"expected a rational (int, Fraction or 'p/q' string), got {x!r}")


@dataclass(frozen=True)
class PriorSpec:
    """Declarative description of a spike prior.

    kind:  one of KINDS
    rho:   nonzero density, sparse_rademacher only, rational in (0, 1]
    atoms: ((value, probability), ...) rationals, discrete_custom only
    """

    kind: str
    rho: Optional[Fraction] = None
    atoms: Optional[tuple[tuple[Fraction, Fraction], ...]] = None

    @staticmethod
    def rademacher() -> "PriorSpec":
        return PriorSpec("rademacher")

    @staticmethod
    def sparse_rademacher(rho) -> "PriorSpec":
        return PriorSpec("sparse_rademacher", rho=_as_fraction(rho))

    @staticmethod
    def gaussian_iid() -> "PriorSpec":
        return PriorSpec("gaussian_iid")

    @staticmethod
    def discrete_custom(atoms) -> "PriorSpec":
        atoms = tuple((_as_fraction(v), _as_fraction(p)) for v, p in atoms)
        return PriorSpec("discrete_custom", atoms=atoms)


def _sqrt_fraction(fr: Fraction) -> Optional[Fraction]:
    """Exact square root of a nonnegative rational, or None if irrational."""
    if fr < 0:
        return None
    pn, pd = math.isqrt(fr.numerator), math.isqrt(fr.denominator)
    if pn * pn == fr.numerator and pd * pd == fr.denominator:
        return Fraction(pn, pd)
    return None


class Prior:
    """Validated prior handle exposing exact entrywise moments.

    For discrete kinds the atom values may be irrational (sparse Rademacher
    entries are +-1/sqrt(rho)), but every entrywise moment E[pi^k] and every
    product of two independent entries is an exact rational, which is all
    the overlap machinery needs.
    """

    def __init__(self, spec: PriorSpec):
        self.spec = spec
        self.kind = spec.kind
        # discrete kinds: exact squared values, float values, probabilities
        self._value_sq: Optional[tuple[Fraction, ...]] = None
        self._signs: Optional[tuple[int, ...]] = None
        self._probs: Optional[tuple[Fraction, ...]] = None
        if spec.kind == "rademacher":
            self._value_sq = (Fraction(1), Fraction(1))
            self._signs = (1, -1)
            self._probs = (Fraction(1, 2), Fraction(1, 2))
        elif spec.kind == "sparse_rademacher":
            rho = spec.rho
            if rho is None or not (0 < rho <= 1):
                raise PriorError("sparse_rademacher needs density rho with 0 < rho <= 1")
            self._value_sq = (Fraction(0), 1 / rho, 1 / rho)
            self._signs = (0, 1, -1)
            self._probs = (1 - rho, rho / 2, rho / 2)
        elif spec.kind == "discrete_custom":
            if not spec.atoms:
                raise PriorError("discrete_custom needs a nonempty atom list")
            vals = tuple(v for v, _ in spec.atoms)
            probs = tuple(p for _, p in spec.atoms)
            if any(p < 0 for p in probs):
                raise PriorError("atom probabilities must be nonnegative")
            total = sum(probs)
            if total != 1:
                raise PriorError(f"atom probabilities sum to {total}, not exactly 1")
            mean = sum(v * p for v, p in spec.atoms)
            if mean != 0:
                raise PriorError(f"entrywise mean is {mean}, not 0 (unnormalized prior)")
            second = sum(v * v * p for v, p in spec.atoms)
            if second != 1:
                raise PriorError(f"entrywise second moment is {second}, not 1")
            self._value_sq = tuple(v * v for v in vals)
            self._signs = tuple(0 if v == 0 else (1 if v > 0 else -1) for v in vals)
            self._probs = probs
        elif spec.kind == "gaussian_iid":
            pass
        else:
            raise PriorError(f"unknown prior kind {spec.kind!r} (expected one of {KINDS})")

    # -- structure ---------------------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return self.kind != "gaussian_iid"

    @property
    def sign_symmetric(self) -> bool:
        """True when the entry law is symmetric, so odd moments vanish."""
        if self.kind in ("rademacher", "sparse_rademacher", "gaussian_iid"):
            return True
        # a finite law is symmetric iff nonzero atoms pair up with matching mass
        mass: dict[tuple[int, Fraction], Fraction] = {}
        for s, v2, p in zip(self._signs, self._value_sq, self._probs):
            if s:
                mass[(s, v2)] = mass.get((s, v2), Fraction(0)) + p
        return all(mass.get((-s, v2), Fraction(0)) == p for (s, v2), p in mass.items())

    def atom_values(self) -> np.ndarray:
        """Atom values as floats (discrete kinds only)."""
        if not self.is_discrete:
            raise PriorError("gaussian_iid has continuous support")
        return np.array(
            [s * math.sqrt(float(v2)) for s, v2 in zip(self._signs, self._value_sq)]
        )

    def atom_probs(self) -> tuple[Fraction, ...]:
        if not self.is_discrete:
            raise PriorError("gaussian_iid has continuous support")
        return self._probs

    def atom_values_exact(self) -> Optional[tuple[Fraction, ...]]:
        """Atom values as exact rationals, or None when any is irrational."""
        if not self.is_discrete:
            return None
        out = []
        for s, v2 in zip(self._signs, self._value_sq):
            r = _sqrt_fraction(v2)
            if r is None:
                return None
            out.append(s * r)
        return tuple(out)

    # -- moments -----------------------------------------------------------

    def entrywise_moment(self, k: int) -> Fraction:
        """E[pi^k] as an exact rational; Gaussian gives (k-1)!! for even k."""
        if k < 0:
            raise PriorError("moment order must be nonnegative")
        if k == 0:
            return Fraction(1)
        if self.kind == "gaussian_iid":
            if k % 2 == 1:
                return Fraction(0)
            return Fraction(math.prod(range(1, k, 2)))
        if k % 2 == 1 and self.sign_symmetric:
            return Fraction(0)
        total = Fraction(0)
        for s, v2, p in zip(self._signs, self._value_sq, self._probs):
            if s == 0:
                continue
            if k % 2 == 0:
                total += v2 ** (k // 2) * p
            else:
                root = _sqrt_fraction(v2)
                if root is None:
                    raise PriorError("odd moments of an asymmetric prior need rational atoms")
                total += (s * root) ** k * p
        return total

    def overlap_atoms(self) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
        """Exact law of Pi = pi * pi' for independent entries (values, probs).

        Products of two atoms of the same prior are always rational, even
        when the atoms themselves are not.
        """
        if not self.is_discrete:
            raise PriorError("gaussian_iid has continuous support")
        law: dict[Fraction, Fraction] = {}
        atoms = list(zip(self._signs, self._value_sq, self._probs))
        for s1, v1, p1 in atoms:
            for s2, v2, p2 in atoms:
                if s1 == 0 or s2 == 0:
                    val = Fraction(0)
                else:
                    prod_sq = v1 * v2
                    root = _sqrt_fraction(prod_sq)
                    if root is None:
                        raise PriorError("overlap atoms are irrational; unsupported prior")
                    val = s1 * s2 * root
                law[val] = law.get(val, Fraction(0)) + p1 * p2
        vals = tuple(sorted(law))
        return vals, tuple(law[v] for v in vals)


def make_prior(spec: PriorSpec) -> Prior:
    """Validate a PriorSpec and return the prior handle."""
    return Prior(spec)


def entrywise_overlap_moments(prior: Prior, kmax: int) -> list[Fraction]:
    """mu_k = E[Pi^k] for Pi = pi * pi', k = 0..kmax.

    By independence mu_k = (E[pi^k])^2, so every mu_k is a nonnegative
    rational for all supported kinds.
    """
    if kmax < 0:
        raise PriorError("kmax must be nonnegative")
    return [prior.entrywise_moment(k) ** 2 for k in range(kmax + 1)]


@dataclass(frozen=True)
class MomentTable:
    """Moments m_k = E[S^k] of the overlap S = sum_i pi_i pi'_i, k = 0..kmax."""

    n: int
    kmax: int
    mode: str  # "exact" | "log_space"
    exact: Optional[tuple[Fraction, ...]]
    signs: np.ndarray  # int8, 0 where the moment vanishes
    logs: np.ndarray  # float64 log|m_k|, -inf where it vanishes

    def value(self, k: int):
        if self.mode == "exact":
            return self.exact[k]
        return float(self.signs[k]) * math.exp(self.logs[k]) if self.signs[k] else 0.0

    def log_value(self, k: int) -> tuple[int, float]:
        return int(self.signs[k]), float(self.logs[k])


def _convolve_exact(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    kmax = len(a) - 1
    return [
        sum(math.comb(k, j) * a[j] * b[k - j] for j in range(k + 1))
        for k in range(kmax + 1)
    ]


def _binary_convolve(base, combine, n: int):
    """Moments of a sum of n i.i.d. copies via doubling on the bits of n."""
    acc = None
    power = base
    bits = n
    while bits:
        if bits & 1:
            acc = power if acc is None else combine(acc, power)
        bits >>= 1
        if bits:
            power = combine(power, power)
    return acc


def overlap_moments(prior: Prior, n: int, kmax: int, mode: Optional[str] = None) -> MomentTable:
    """Moments of S = <x1, x2> by binomial convolution with doubling on n.

    Cost O(log n * kmax^2).  Exact big-rational arithmetic when the prior is
    discrete and n*kmax is below EXACT_TERM_OPS_CAP (every discrete kind has
    rational overlap moments, including sparse Rademacher at any rational
    rho); sign-aware log space otherwise.  `mode` overrides the choice.
    """
    if n < 1:
        raise PriorError("n must be >= 1")
    if kmax < 0:
        raise PriorError("kmax must be nonnegative")
    if mode is None:
        exact_ok = prior.is_discrete and n * max(kmax, 1) <= EXACT_TERM_OPS_CAP
        mode = "exact" if exact_ok else "log_space"
    if mode not in ("exact", "log_space"):
        raise PriorError(f"unknown arithmetic mode {mode!r}")
    if mode == "exact" and not prior.is_discrete:
        raise PriorError("exact mode needs a discrete prior")

    mu = entrywise_overlap_moments(prior, kmax)
    if prior.sign_symmetric:
        # odd moments vanish identically; zero them rather than trusting
        # floating-point cancellation in log mode
        mu = [m if k % 2 == 0 else Fraction(0) for k, m in enumerate(mu)]

    if mode == "exact":
        moments = _binary_convolve(mu, _convolve_exact, n)
        signs = np.array([0 if m == 0 else 1 for m in moments], dtype=np.int8)
        logs = np.array([slog_from_fraction(m)[1] for m in moments])
        return MomentTable(n, kmax, "exact", tuple(moments), signs, logs)

    base = np.array([slog_from_fraction(m)[1] for m in mu])
    lb = log_binom_table(kmax)
    logs = _binary_convolve(base, lambda a, b: nonneg_log_convolve(a, b, lb), n)
    if prior.sign_symmetric:
        logs[1::2] = NEG_INF
    signs = np.where(np.isfinite(logs), 1, 0).astype(np.int8)
    return MomentTable(n, kmax, "log_space", None, signs, logs)


@lru_cache(maxsize=128)
def _cached_table(spec: PriorSpec, n: int, kmax: int, mode: Optional[str]) -> MomentTable:
    return overlap_moments(make_prior(spec), n, kmax, mode)


def overlap_moments_cached(spec: PriorSpec, n: int, kmax: int, mode: Optional[str] = None) -> MomentTable:
    """Memoized overlap_moments; kmax is bucketed up so nearby degrees share."""
    bucket = 16 if kmax <= 16 else 64 * math.ceil(kmax / 64)
    return _cached_table(spec, n, bucket, mode)


def sample_spike(prior: Prior, n: int, seed: int) -> np.ndarray:
    """One spike vector with i.i.d. entries; deterministic per seed."""
    return sample_spikes(prior, n, 1, make_rng(seed, "spike"))[0]


def sample_spikes(prior: Prior, n: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """(trials, n) array of independent spikes from an explicit generator."""
    if n < 1:
        raise PriorError("n must be >= 1")
    shape = (trials, n)
    if prior.kind == "rademacher":
        return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
    if prior.kind == "gaussian_iid":
        return rng.standard_normal(shape)
    values = prior.atom_values()
    probs = np.array([float(p) for p in prior.atom_probs()])
    probs /= probs.sum()
    idx = rng.choice(len(values), size=shape, p=probs)
    return values[idx]


def enumerate_support(prior: Prior, n: int, cap: int = SUPPORT_CAP) -> list[tuple[np.ndarray, Fraction]]:
    """Exhaustive list of spike vectors with exact probabilities.

    Brute-force oracle substrate; probabilities sum to exactly 1.
    """
    if not prior.is_discrete:
        raise PriorError("cannot enumerate a continuous support (gaussian_iid)")
    values = prior.atom_values()
    probs = prior.atom_probs()
    a = len(values)
    count = a**n
    if count > cap:
        raise PriorError(f"support size {count} exceeds cap {cap}")
    out = []
    for code in range(count):
        digits = []
        c = code
        for _ in range(n):
            digits.append(c % a)
            c //= a
        prob = math.prod((probs[d] for d in digits), start=Fraction(1))
        if prob == 0:
            continue
        out.append((values[np.array(digits, dtype=int)], prob))
    return out
