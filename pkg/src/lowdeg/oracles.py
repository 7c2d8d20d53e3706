"""Independent brute-force oracles for the main computational paths.

Each oracle recomputes a quantity by a route that shares no code with the
path it checks: overlap moments by direct pair enumeration and by naive
one-at-a-time convolution, the full second moment by enumerating the exact
law of the overlap, the LDLR norm by summing squared Hermite coefficients
over multi-indices, and one-dimensional LDLR values by symbolic expansion
over the signal atoms.  The oracle-verify CLI subcommand runs all of them.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Optional

import numpy as np

from . import hermite, priors
from .ldlr import ModelSpec
from .priors import Prior
from .signedlog import NEG_INF, slog_from_fraction


def overlap_moments_pair_bruteforce(prior: Prior, n: int, kmax: int) -> list[Fraction]:
    """E[S^k] by exhaustive expectation over pairs from enumerate_support.

    Exact: needs rational atom values.  Cost |support|^2 pairs, so keep n
    small for priors with more than two atoms.
    """
    exact_atoms = prior.atom_values_exact()
    if exact_atoms is None:
        raise priors.PriorError("pair brute force needs rational atom values")
    support = priors.enumerate_support(prior, n)
    vectors = []
    for x, prob in support:
        exact = tuple(min(exact_atoms, key=lambda a: abs(float(a) - xi)) for xi in x)
        vectors.append((exact, prob))
    out = [Fraction(0)] * (kmax + 1)
    for x1, p1 in vectors:
        for x2, p2 in vectors:
            s = sum(a * b for a, b in zip(x1, x2))
            w = p1 * p2
            acc = Fraction(1)
            for k in range(kmax + 1):
                out[k] += w * acc
                acc *= s
    return out


def overlap_moments_naive(prior: Prior, n: int, kmax: int) -> list[Fraction]:
    """E[S^k] by one-at-a-time binomial convolution (no doubling)."""
    mu = priors.entrywise_overlap_moments(prior, kmax)
    if prior.sign_symmetric:
        mu = [m if k % 2 == 0 else Fraction(0) for k, m in enumerate(mu)]
    acc = list(mu)
    for _ in range(n - 1):
        acc = [
            sum(math.comb(k, j) * acc[j] * mu[k - j] for j in range(k + 1))
            for k in range(kmax + 1)
        ]
    return acc


def overlap_law(prior: Prior, n: int) -> dict[Fraction, Fraction]:
    """Exact law of S = <x1, x2> by convolving the entrywise product law."""
    vals, probs = prior.overlap_atoms()
    law = {Fraction(0): Fraction(1)}
    for _ in range(n):
        nxt: dict[Fraction, Fraction] = {}
        for s, ps in law.items():
            for v, pv in zip(vals, probs):
                key = s + v
                nxt[key] = nxt.get(key, Fraction(0)) + ps * pv
        law = nxt
    return law


def overlap_moments_from_law(prior: Prior, n: int, kmax: int) -> list[Fraction]:
    law = overlap_law(prior, n)
    return [
        sum(p * s**k for s, p in law.items())
        for k in range(kmax + 1)
    ]


def lr_norm_sq_from_overlap_law(model: ModelSpec) -> float:
    """log ||L||^2 = log E exp(lambda^2 S^p) over the exact law of S."""
    law = overlap_law(model.prior_handle, model.n)
    terms = np.array(
        [slog_from_fraction(p)[1] + model.lam_sq * float(s) ** model.p for s, p in law.items()]
    )
    shift = terms.max()
    return float(shift + math.log(np.exp(terms - shift).sum()))


def log_moments_rademacher_binomial(n: int, kmax: int) -> np.ndarray:
    """log E[S^k] for Rademacher overlaps via S = 2 Binom(n, 1/2) - n.

    Direct n+1 term sum, independent of any convolution; odd moments are
    exactly -inf.
    """
    m = np.arange(n + 1)
    vals = 2 * m - n
    log_w = np.array(
        [math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1) for i in m]
    ) - n * math.log(2)
    out = np.full(kmax + 1, NEG_INF)
    out[0] = 0.0
    nz = vals != 0
    la = np.log(np.abs(vals[nz]).astype(float))
    lw = log_w[nz]
    for k in range(2, kmax + 1, 2):
        terms = lw + k * la
        shift = terms.max()
        out[k] = shift + math.log(np.exp(terms - shift).sum())
    return out


def hermite_norm_sq_coeffs(p: int, n: int, prior: Prior, dmax: int, cap: Optional[int] = None) -> list[Fraction]:
    """c_d with ||L^{<=D}||^2 = sum_{d<=D} lambda^{2d} c_d, via the expansion.

    c_d collects (E prod x^e)^2 / prod alpha_c! over all multi-indices of
    total degree d; the lambda powers factor out of the squared Hermite
    coefficients exactly.
    """
    N = n**p
    coeffs = [Fraction(0)] * (dmax + 1)
    axes = [np.unravel_index(c, (n,) * p) for c in range(N)]
    moment_cache: dict[int, Fraction] = {}

    def moment(e: int) -> Fraction:
        if e not in moment_cache:
            moment_cache[e] = prior.entrywise_moment(e)
        return moment_cache[e]

    kwargs = {} if cap is None else {"cap": cap}
    for alpha in hermite.enumerate_multi_indices(N, dmax, **kwargs):
        d = 0
        expo: dict[int, int] = {}
        for c, a in alpha:
            d += a
            idx = axes[c]
            for t in range(p):
                j = int(idx[t])
                expo[j] = expo.get(j, 0) + a
        m = Fraction(1)
        for e in expo.values():
            me = moment(e)
            if me == 0:
                m = Fraction(0)
                break
            m *= me
        if m == 0:
            continue
        denom = math.prod(math.factorial(a) for _, a in alpha)
        coeffs[d] += m * m / denom
    return coeffs


def hermite_norm_sq(model: ModelSpec, D: int, cap: Optional[int] = None) -> Fraction:
    """||L^{<=D}||^2 by the squared-coefficient sum, exact in rationals."""
    if model.lam_sq_exact is None:
        raise ValueError("the exact Hermite oracle needs a rational signal strength")
    c = hermite_norm_sq_coeffs(model.p, model.n, model.prior_handle, D, cap)
    return sum(model.lam_sq_exact**d * c[d] for d in range(D + 1))


def signal_atoms_n1(model: ModelSpec) -> list[tuple[float, Fraction]]:
    """The law of the scalar signal X = lambda x^p for an n = 1 model."""
    if model.n != 1:
        raise ValueError("needs n = 1")
    prior = model.prior_handle
    vals = prior.atom_values()
    probs = prior.atom_probs()
    return [(model.lam * float(v) ** model.p, pr) for v, pr in zip(vals, probs)]


def ldlr_evaluate_n1_symbolic(model: ModelSpec, D: int, y: float) -> float:
    """L^{<=D}(y) for n = 1 by expanding each exp(ay - a^2/2) atomwise.

    The generating-function expansion gives the Hermite coefficient of
    degree k as E[X^k]/k!, evaluated here with exact integer Hermite
    coefficients.
    """
    atoms = signal_atoms_n1(model)
    total = 0.0
    for k in range(D + 1):
        ex_k = sum(float(pr) * a**k for a, pr in atoms)
        hk = hermite.hermite_coeffs(k)
        total += ex_k / hk.factorial * hk(y)
    return total


# -- oracle-verify drivers -----------------------------------------------------


def _close(a: float, b: float, rel: float = 1e-10) -> bool:
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def run_oracle_checks(seed: int = 0) -> list[dict]:
    """Every shipped oracle against its main code path; the CLI prints these."""
    from . import ldlr as ldlr_mod
    from .priors import PriorSpec, make_prior, overlap_moments

    checks = []

    def record(name: str, passed: bool, detail: str = ""):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    rad = PriorSpec.rademacher()
    sparse = PriorSpec.sparse_rademacher(Fraction(1, 4))
    skewed = PriorSpec.discrete_custom(
        [(Fraction(2), Fraction(1, 5)), (Fraction(-1, 2), Fraction(4, 5))]
    )

    # overlap moments: doubling vs pair enumeration and naive convolution
    for spec, n in [(rad, 4), (rad, 6), (sparse, 4), (skewed, 4)]:
        prior = make_prior(spec)
        table = overlap_moments(prior, n, 8, mode="exact")
        pair = overlap_moments_pair_bruteforce(prior, n, 8)
        law = overlap_moments_from_law(prior, n, 8)
        record(
            f"overlap-moments-pairs[{spec.kind}, n={n}]",
            list(table.exact) == pair,
        )
        record(
            f"overlap-moments-law[{spec.kind}, n={n}]",
            list(table.exact) == law,
        )
    for n in (2, 3, 5, 8):
        prior = make_prior(rad)
        table = overlap_moments(prior, n, 8, mode="exact")
        naive = overlap_moments_naive(prior, n, 8)
        record(f"overlap-moments-naive[n={n}]", list(table.exact) == naive)

    # lr_norm_sq: pair enumeration vs overlap-law enumeration, n <= 10
    for n in (1, 4, 10):
        model = ModelSpec.with_lambda_hat(n, rad, Fraction(1, 2))
        main = ldlr_mod.lr_norm_sq(model)
        ora = lr_norm_sq_from_overlap_law(model)
        record(
            f"lr-norm-pairs-vs-law[n={n}]",
            _close(main.log_value, ora, 1e-12),
            f"main={main.log_value!r} oracle={ora!r}",
        )
    model = ModelSpec.with_lambda(3, 1, rad, 1)
    record(
        "lr-norm-cosh",
        _close(ldlr_mod.lr_norm_sq(model).value, math.cosh(1.0), 1e-12),
    )

    # ldlr_norm_sq vs the Hermite expansion, exact rationals
    for n in (1, 2, 3):
        for lam in (Fraction(1, 2), Fraction(1)):
            model = ModelSpec.with_lambda(2, n, rad, lam)
            main = ldlr_mod.ldlr_norm_sq(model, 4)
            ora = hermite_norm_sq(model, 4)
            record(
                f"ldlr-norm-hermite[n={n}, lam={lam}]",
                main.exact_norm_sq == ora,
                f"main={main.exact_norm_sq} oracle={ora}",
            )

    # ldlr_evaluate vs the n=1 symbolic expansion
    rng = np.random.Generator(np.random.Philox(key=seed))
    for p, D in [(2, 4), (3, 5)]:
        model = ModelSpec.with_lambda(p, 1, rad, Fraction(3, 4))
        ys = rng.standard_normal(5)
        ok = all(
            _close(hermite.ldlr_evaluate(model, D, np.array([y])),
                   ldlr_evaluate_n1_symbolic(model, D, float(y)))
            for y in ys
        )
        record(f"ldlr-evaluate-n1[p={p}, D={D}]", ok)

    # log-space convolution vs the direct binomial formula at large n
    prior = make_prior(rad)
    for n in (2000, 10000):
        table = overlap_moments(prior, n, 40, mode="log_space")
        direct = log_moments_rademacher_binomial(n, 40)
        even = slice(0, 41, 2)
        ok = np.allclose(table.logs[even], direct[even], rtol=0, atol=1e-10)
        record(f"log-moments-binomial[n={n}]", bool(ok))

    return checks
