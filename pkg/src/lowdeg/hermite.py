"""Hermite polynomial algebra and the Hermite-basis expansion of the LDLR.

Uses the probabilists' Hermite polynomials h_k, defined by h_0 = 1 and
h_{k+1}(x) = x h_k(x) - h_k'(x), orthogonal under N(0,1) with
E[h_j h_k] = k! delta_{jk}.  Coefficients are exact integers; evaluation
switches to the three-term value recurrence beyond degree 30 because the
monomial coefficients grow factorially and cancel catastrophically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import TYPE_CHECKING, Iterator, Union

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .ldlr import ModelSpec

# switch from exact-coefficient Horner to the value recurrence
VALUE_RECURRENCE_DEGREE = 30

# default number of Gauss-Hermite nodes; exact for polynomial integrands
# up to degree 127
QUADRATURE_NODES = 64

# default ceiling on the number of multi-indices C(N+D, D)
MULTI_INDEX_CAP = 10**6

# a sparse multi-index: ((coordinate, exponent), ...) with exponents >= 1
MultiIndex = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class HermitePoly:
    """h_k in the monomial basis with exact integer coefficients."""

    degree: int
    coeffs: tuple[int, ...]  # coeffs[i] multiplies x^i
    factorial: int  # degree!, squared normalization constant

    def __call__(self, y: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * y + c
        return acc


@lru_cache(maxsize=None)
def hermite_coeffs(k: int) -> HermitePoly:
    """Exact coefficients of h_k via h_{k+1} = x h_k - h_k'."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    if k == 0:
        return HermitePoly(0, (1,), 1)
    prev = hermite_coeffs(k - 1)
    c = prev.coeffs
    shifted = (0,) + c  # x * h_{k-1}
    deriv = tuple(i * c[i] for i in range(1, len(c))) + (0, 0)
    coeffs = tuple(shifted[i] - deriv[i] for i in range(k + 1))
    return HermitePoly(k, coeffs, prev.factorial * k)


def hermite_eval(k: int, y: float, normalized: bool = False) -> float:
    """h_k(y), or the normalized variant h_k(y)/sqrt(k!)."""
    if normalized:
        # scaled recurrence: hn_{k+1} = (y hn_k - sqrt(k) hn_{k-1}) / sqrt(k+1)
        prev, cur = 0.0, 1.0
        for i in range(k):
            prev, cur = cur, (y * cur - math.sqrt(i) * prev) / math.sqrt(i + 1)
        return cur
    if k <= VALUE_RECURRENCE_DEGREE:
        return hermite_coeffs(k)(y)
    prev, cur = 0.0, 1.0
    for i in range(k):
        prev, cur = cur, y * cur - i * prev
    return cur


def hermite_values(kmax: int, y: np.ndarray) -> np.ndarray:
    """h_k(y) for k = 0..kmax over an array, shape (kmax+1,) + y.shape."""
    y = np.asarray(y, dtype=float)
    out = np.empty((kmax + 1,) + y.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = y
    for k in range(1, kmax):
        out[k + 1] = y * out[k] - k * out[k - 1]
    return out


@lru_cache(maxsize=8)
def gauss_hermite_rule(points: int = QUADRATURE_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against the N(0,1) density."""
    x, w = np.polynomial.hermite_e.hermegauss(points)
    return x, w / w.sum()


def check_translation_identity(k: int, mu: float, quadrature_points: int = QUADRATURE_NODES) -> float:
    """Residual of E_{y~N(mu,1)} h_k(y) = mu^k under Gauss-Hermite quadrature."""
    x, w = gauss_hermite_rule(quadrature_points)
    est = float(w @ hermite_values(k, x + mu)[k])
    return abs(est - mu**k)


_IBP_FAMILY = {}


def _register_ibp(tag):
    def wrap(fn):
        _IBP_FAMILY[tag] = fn
        return fn

    return wrap


@_register_ibp("poly")
def _ibp_poly(param: float):
    m = int(param)

    def f(y):
        return y**m

    def dk(k, y):
        if k > m:
            return np.zeros_like(y)
        return math.perm(m, k) * y ** (m - k)

    return f, dk


@_register_ibp("exp")
def _ibp_exp(param: float):
    t = float(param)

    def f(y):
        return np.exp(t * y)

    def dk(k, y):
        return t**k * np.exp(t * y)

    return f, dk


@_register_ibp("cos")
def _ibp_cos(param: float):
    cycle = [np.cos, lambda y: -np.sin(y), lambda y: -np.cos(y), np.sin]

    def f(y):
        return np.cos(y)

    def dk(k, y):
        return cycle[k % 4](y)

    return f, dk


def check_ibp_identity(k: int, f: str, quadrature_points: int = QUADRATURE_NODES) -> float:
    """Residual of E[h_k(y) f(y)] = E[f^(k)(y)] under N(0,1).

    `f` is a tag from a built-in family with known k-th derivatives:
    "poly:m" for y^m, "exp:t" for exp(t y), "cos" for cos(y).
    """
    name, _, param = f.partition(":")
    if name not in _IBP_FAMILY:
        raise ValueError(f"unknown test function {f!r}; use poly:m, exp:t or cos")
    fn, dk = _IBP_FAMILY[name](float(param) if param else 0.0)
    x, w = gauss_hermite_rule(quadrature_points)
    lhs = float(w @ (hermite_values(k, x)[k] * fn(x)))
    rhs = float(w @ dk(k, x))
    return abs(lhs - rhs)


def check_generating_function(x: float, y: float, K: int) -> float:
    """Residual of exp(xy - x^2/2) = sum_{k<=K} x^k h_k(y) / k!.

    The partial sum is accumulated as (x^k / sqrt(k!)) * hhat_k(y) so that
    neither factor overflows for |x| <= 2 and K up to 60.
    """
    partial = 0.0
    scale = 1.0  # x^k / sqrt(k!)
    prev, cur = 0.0, 1.0  # normalized Hermite values
    for k in range(K + 1):
        if k > 0:
            scale *= x / math.sqrt(k)
            prev, cur = cur, (y * cur - math.sqrt(k - 1) * prev) / math.sqrt(k)
        partial += scale * cur
    return abs(math.exp(x * y - 0.5 * x * x) - partial)


# -- multivariate expansion of the low-degree likelihood ratio --------------


def multi_index_count(N: int, D: int) -> int:
    return math.comb(N + D, D)


def multi_index_degree(alpha: MultiIndex) -> int:
    return sum(e for _, e in alpha)


def enumerate_multi_indices(N: int, D: int, cap: int = MULTI_INDEX_CAP) -> Iterator[MultiIndex]:
    """All sparse alpha with |alpha| <= D, graded lexicographic, each once."""
    count = multi_index_count(N, D)
    if count > cap:
        raise ValueError(f"{count} multi-indices exceed the cap {cap}")

    def compositions(start: int, remaining: int):
        if remaining == 0:
            yield ()
            return
        for c in range(start, N):
            for e in range(remaining, 0, -1):
                for rest in compositions(c + 1, remaining - e):
                    yield ((c, e),) + rest

    for d in range(D + 1):
        yield from compositions(0, d)


def _spike_exponents(model: "ModelSpec", alpha: MultiIndex) -> np.ndarray:
    """Exponent e_j of each spike entry x_j in prod_c X_c^{alpha_c}."""
    n, p = model.n, model.p
    e = np.zeros(n, dtype=int)
    for c, a in alpha:
        idx = np.unravel_index(c, (n,) * p)
        for t in range(p):
            e[idx[t]] += a
    return e


def ldlr_coefficient(model: "ModelSpec", alpha: MultiIndex) -> Union[Fraction, float]:
    """<L, H_alpha> = E_P prod_c X_c^{alpha_c} for X = lambda x^(tensor p).

    Reduces to lambda^|alpha| times a mixed prior moment of x, computed by
    per-coordinate exponent accounting.  Exact Fraction when the model
    carries a rational lambda, float otherwise.
    """
    prior = model.prior_handle
    d = multi_index_degree(alpha)
    moment = Fraction(1)
    for e in _spike_exponents(model, alpha):
        if e:
            m = prior.entrywise_moment(int(e))
            if m == 0:
                return Fraction(0) if model.lam_exact is not None else 0.0
            moment *= m
    if model.lam_exact is not None:
        return model.lam_exact**d * moment
    return model.lam**d * float(moment)


def ldlr_evaluate(model: "ModelSpec", D: int, Y: np.ndarray, cap: int = MULTI_INDEX_CAP) -> float:
    """Value of the degree-D projected likelihood ratio at one observation."""
    return float(ldlr_evaluate_batch(model, D, np.asarray(Y, dtype=float).reshape(1, -1), cap)[0])


def ldlr_evaluate_batch(
    model: "ModelSpec", D: int, Ys: np.ndarray, cap: int = MULTI_INDEX_CAP
) -> np.ndarray:
    """L^{<=D}(Y) for a batch of observations, shape (trials, n^p).

    Expands over normalized Hermite products: the coefficient of H_alpha is
    <L, H_alpha> / prod alpha_c!, with <L, H_alpha> a prior moment.
    """
    n, p = model.n, model.p
    N = n**p
    Ys = np.asarray(Ys, dtype=float).reshape(len(Ys), N)
    out = np.zeros(len(Ys))
    hv = hermite_values(D, Ys)  # (D+1, trials, N)
    for alpha in enumerate_multi_indices(N, D, cap):
        coeff = ldlr_coefficient(model, alpha)
        if coeff == 0:
            continue
        w = float(coeff) / math.prod(math.factorial(a) for _, a in alpha)
        term = np.full(len(Ys), w)
        for c, a in alpha:
            term = term * hv[a][:, c]
        out += term
    return out
