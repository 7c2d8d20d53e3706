"""The LDLR engine: norms, exact likelihood ratios, and threshold scans.

The squared norm of the degree-D projected likelihood ratio for an additive
Gaussian noise model is

    ||L^{<=D}||^2 = sum_{d=0}^{D} T_d,    T_d = (lambda^{2d} / d!) E<x1,x2>^{pd},

so everything reduces to the overlap moment tables from the priors module.
Terms are carried in sign-aware log space (all are nonnegative here) with an
exact big-rational side path when both the moment table and lambda^2 are
rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import priors
from .priors import Prior, PriorSpec, make_prior, overlap_moments_cached
from .rng import make_rng
from .signedlog import LOG_FLOAT_MAX, NEG_INF, slog_from_fraction, slog_sum

Rational = Union[Fraction, int, str]


def _maybe_fraction(x) -> Optional[Fraction]:
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return None


@dataclass(frozen=True)
class ModelSpec:
    """A planted-vs-null testing problem: Y = lambda x^(tensor p) + Z vs Y = Z.

    The signal strength is stored canonically as lambda; for p = 2 the
    normalized lambda_hat = lambda * sqrt(2n) is accepted at construction
    and exposed as a property (critical value 1).  lambda_sq_exact keeps
    lambda^2 as an exact rational whenever it is one (a rational lambda_hat
    gives irrational lambda but rational lambda^2).
    """

    p: int
    n: int
    prior: PriorSpec
    lam: float
    lam_exact: Optional[Fraction] = None
    lam_sq_exact: Optional[Fraction] = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("tensor order p must be >= 2")
        if self.n < 1:
            raise ValueError("dimension n must be >= 1")
        if self.lam < 0:
            raise ValueError("signal strength must be nonnegative")

    @staticmethod
    def with_lambda(p: int, n: int, prior: PriorSpec, lam: Union[float, Rational]) -> "ModelSpec":
        fr = _maybe_fraction(lam)
        if fr is not None:
            return ModelSpec(p, n, prior, float(fr), lam_exact=fr, lam_sq_exact=fr * fr)
        return ModelSpec(p, n, prior, float(lam))

    @staticmethod
    def with_lambda_hat(n: int, prior: PriorSpec, lam_hat: Union[float, Rational], p: int = 2) -> "ModelSpec":
        if p != 2:
            raise ValueError("lambda_hat is defined only for p = 2")
        fr = _maybe_fraction(lam_hat)
        if fr is not None:
            lam_sq = fr * fr / (2 * n)
            return ModelSpec(p, n, prior, math.sqrt(float(lam_sq)), lam_sq_exact=lam_sq)
        return ModelSpec(p, n, prior, float(lam_hat) / math.sqrt(2 * n))

    @property
    def lambda_hat(self) -> float:
        if self.p != 2:
            raise ValueError("lambda_hat is defined only for p = 2")
        return self.lam * math.sqrt(2 * self.n)

    @property
    def N(self) -> int:
        return self.n**self.p

    @property
    def prior_handle(self) -> Prior:
        return _prior_cached(self.prior)

    @property
    def lam_sq(self) -> float:
        return float(self.lam_sq_exact) if self.lam_sq_exact is not None else self.lam**2


@lru_cache(maxsize=64)
def _prior_cached(spec: PriorSpec) -> Prior:
    return make_prior(spec)


@dataclass
class LdlrResult:
    """Per-degree terms and cumulative squared LDLR norm, in log space."""

    p: int
    n: int
    D: int
    mode: str
    term_signs: np.ndarray  # int8; 0 marks a vanishing term
    term_logs: np.ndarray  # log T_d, d = 0..D
    log_norm_sq: float
    skipped: tuple[int, ...] = ()  # degrees skipped rather than computed
    exact_terms: Optional[tuple[Fraction, ...]] = None
    exact_norm_sq: Optional[Fraction] = None

    @property
    def terms(self) -> np.ndarray:
        """T_d as floats (inf where the log term overflows double)."""
        out = np.zeros(self.D + 1)
        live = self.term_signs != 0
        with np.errstate(over="ignore"):
            out[live] = np.exp(self.term_logs[live])
        return out

    @property
    def norm_sq(self) -> float:
        if self.log_norm_sq > LOG_FLOAT_MAX:
            return math.inf
        return math.exp(self.log_norm_sq)

    @property
    def present(self) -> list[int]:
        """Degrees with a nonvanishing term."""
        return [d for d in range(self.D + 1) if self.term_signs[d] != 0]

    @property
    def ratios(self) -> list[float]:
        """Successive-term ratios r_d = T_{d+1}/T_d; see term_ratios for flags."""
        return term_ratios(self).ratios


def ldlr_norm_sq(model: ModelSpec, D: int, mode: Optional[str] = None) -> LdlrResult:
    """||L^{<=D}||^2 from the overlap moment table.

    Terms with pd odd vanish for sign-symmetric priors and are skipped
    rather than computed.  The log-space cumulative sum uses compensated
    accumulation; the exact-rational path runs whenever the table is exact
    and lambda^2 is rational.
    """
    if D < 0:
        raise ValueError("D must be nonnegative")
    prior = model.prior_handle
    table = overlap_moments_cached(model.prior, model.n, model.p * D, mode)

    skipped = []
    term_signs = np.zeros(D + 1, dtype=np.int8)
    term_logs = np.full(D + 1, NEG_INF)
    exact_terms = None
    exact_norm = None

    symmetric_skip = prior.sign_symmetric and model.p % 2 == 1

    if table.mode == "exact" and model.lam_sq_exact is not None:
        exact_terms = []
        exact_norm = Fraction(0)
        for d in range(D + 1):
            if symmetric_skip and (model.p * d) % 2 == 1:
                skipped.append(d)
                exact_terms.append(Fraction(0))
                continue
            t = model.lam_sq_exact**d * table.exact[model.p * d] / math.factorial(d)
            exact_terms.append(t)
            exact_norm += t
            if t != 0:
                s, l = slog_from_fraction(t)
                term_signs[d] = s
                term_logs[d] = l
        exact_terms = tuple(exact_terms)
        log_norm = slog_from_fraction(exact_norm)[1]
        return LdlrResult(
            model.p, model.n, D, "exact", term_signs, term_logs, log_norm,
            tuple(skipped), exact_terms, exact_norm,
        )

    if model.lam == 0.0:
        term_signs[0] = 1
        term_logs[0] = 0.0
        return LdlrResult(model.p, model.n, D, table.mode, term_signs, term_logs, 0.0,
                          tuple(range(1, D + 1)))

    log_lam_sq = (
        slog_from_fraction(model.lam_sq_exact)[1]
        if model.lam_sq_exact is not None
        else 2 * math.log(model.lam)
    )
    for d in range(D + 1):
        if symmetric_skip and (model.p * d) % 2 == 1:
            skipped.append(d)
            continue
        sign, lm = table.log_value(model.p * d)
        if sign == 0:
            skipped.append(d)
            continue
        term_signs[d] = 1
        term_logs[d] = d * log_lam_sq - math.lgamma(d + 1) + lm
    log_norm = slog_sum((int(s), float(l)) for s, l in zip(term_signs, term_logs))[1]
    return LdlrResult(model.p, model.n, D, table.mode, term_signs, term_logs,
                      log_norm, tuple(skipped))


@dataclass(frozen=True)
class RatioEntry:
    d_from: int
    d_to: int
    ratio: float  # T_{d_to} / T_{d_from}
    geometric: bool  # ratio <= (1/2)^(d_to - d_from)


@dataclass(frozen=True)
class TermRatios:
    """Successive-term ratios with geometric-domination flags.

    Ratios run over consecutive nonvanishing terms starting at the first
    nonzero degree >= 1; a gap of g degrees (parity skips) is flagged
    against (1/2)^g.  When every ratio is flagged the whole tail is
    dominated by a geometric sum and ||L^{<=D}||^2 <= 1 + 2 T_{d1}, where
    d1 is the first nonvanishing degree >= 1.
    """

    entries: tuple[RatioEntry, ...]
    all_geometric: bool
    first_term_degree: Optional[int]
    log_geometric_bound: Optional[float]  # log(1 + 2 T_{d1}) when all flagged
    bound_holds: Optional[bool]

    @property
    def ratios(self) -> list[float]:
        return [e.ratio for e in self.entries]


def term_ratios(result: LdlrResult, rel_tol: float = 1e-9) -> TermRatios:
    """Ratios r_d = T_{d+1}/T_d over the nonvanishing terms of a result."""
    present = [d for d in result.present if d >= 1]
    entries = []
    for a, b in zip(present, present[1:]):
        log_r = float(result.term_logs[b] - result.term_logs[a])
        gap = b - a
        ratio = math.exp(log_r) if log_r < LOG_FLOAT_MAX else math.inf
        entries.append(RatioEntry(a, b, ratio, bool(log_r <= gap * math.log(0.5) + rel_tol)))
    all_geo = all(e.geometric for e in entries)
    if not present:
        return TermRatios((), True, None, None, None)
    d1 = present[0]
    log_bound = None
    holds = None
    if all_geo:
        t1 = math.exp(min(result.term_logs[d1], LOG_FLOAT_MAX))
        log_bound = math.log1p(2 * t1)
        holds = result.log_norm_sq <= log_bound + rel_tol
    return TermRatios(tuple(entries), all_geo, d1, log_bound, holds)


# -- exact likelihood ratio (no degree truncation) ---------------------------


def _rank_one_contractions(Y: np.ndarray, spikes: np.ndarray, p: int, n: int) -> np.ndarray:
    """<x^(tensor p), Y> for each spike row, i.e. Y contracted p times."""
    acc = Y.reshape((n,) * p)
    acc = acc.reshape(-1, n) @ spikes.T  # (n^{p-1}, S)
    for _ in range(p - 1):
        s = acc.shape[-1]
        acc = acc.reshape(-1, n, s)
        acc = np.einsum("ajs,sj->as", acc, spikes)
    return acc.reshape(-1)


def lr_evaluate(model: ModelSpec, Y: np.ndarray, cap: int = priors.SUPPORT_CAP) -> float:
    """Exact likelihood ratio L(Y) = E_X exp(-||X||^2/2 + <X, Y>).

    Expectation over the enumerated spike support, in log space.
    """
    prior = model.prior_handle
    support = priors.enumerate_support(prior, model.n, cap)
    spikes = np.array([x for x, _ in support])
    log_probs = np.array([slog_from_fraction(pr)[1] for _, pr in support])
    norms_sq = (spikes**2).sum(axis=1)
    contractions = _rank_one_contractions(np.asarray(Y, float), spikes, model.p, model.n)
    exponents = -0.5 * model.lam_sq * norms_sq**model.p + model.lam * contractions
    terms = log_probs + exponents
    shift = terms.max()
    log_l = shift + math.log(np.exp(terms - shift).sum())
    return math.exp(log_l) if log_l <= LOG_FLOAT_MAX else math.inf


@dataclass(frozen=True)
class LrNormSq:
    """||L||^2 = E exp(<X1, X2>), exact or Monte Carlo.

    A diverging value is informative, so overflow is reported as value=inf
    with the finite log kept, never raised.
    """

    log_value: float
    mode: str  # "exact" | "monte_carlo"
    overflow: bool
    stderr: Optional[float] = None
    trials: Optional[int] = None

    @property
    def value(self) -> float:
        return math.exp(self.log_value) if self.log_value <= LOG_FLOAT_MAX else math.inf


def lr_norm_sq(
    model: ModelSpec,
    trials: Optional[int] = None,
    seed: Optional[int] = None,
    pair_cap: int = priors.SUPPORT_CAP,
) -> LrNormSq:
    """||L||^2 by exact pair enumeration, with a Monte Carlo fallback.

    The exact path enumerates all pairs of support vectors and sums
    prob1 * prob2 * exp(lambda^2 <x1,x2>^p) in log space.  The fallback
    averages exp(lambda^2 S^p) over sampled overlaps and reports the
    standard error of the estimator.
    """
    prior = model.prior_handle
    if prior.is_discrete and trials is None:
        size = len(prior.atom_probs()) ** model.n
        if size * size <= pair_cap:
            support = priors.enumerate_support(prior, model.n, pair_cap)
            spikes = np.array([x for x, _ in support])
            log_probs = np.array([slog_from_fraction(pr)[1] for _, pr in support])
            overlaps = spikes @ spikes.T
            terms = (
                log_probs[:, None]
                + log_probs[None, :]
                + model.lam_sq * overlaps**model.p
            ).ravel()
            shift = terms.max()
            log_v = shift + math.log(np.exp(terms - shift).sum())
            return LrNormSq(log_v, "exact", overflow=log_v > LOG_FLOAT_MAX)
    if trials is None:
        trials = 100_000
    if seed is None:
        raise ValueError("Monte Carlo lr_norm_sq needs a seed")
    rng = make_rng(seed, "lr-norm")
    x1 = priors.sample_spikes(prior, model.n, trials, rng)
    x2 = priors.sample_spikes(prior, model.n, trials, rng)
    exponents = model.lam_sq * np.einsum("ti,ti->t", x1, x2) ** model.p
    shift = exponents.max()
    weights = np.exp(exponents - shift)
    mean = weights.mean()
    log_v = shift + math.log(mean)
    # stderr of the linear-space estimator; inf when exp overflows
    with np.errstate(over="ignore"):
        se = float(np.exp(shift) * weights.std(ddof=1) / math.sqrt(trials))
    return LrNormSq(log_v, "monte_carlo", overflow=log_v > LOG_FLOAT_MAX,
                    stderr=se, trials=trials)


# -- thresholds and heuristics ----------------------------------------------


def tensor_threshold_constants(p: int) -> tuple[float, float]:
    """(A_p, B_p) with A_p = 2^{-1/2} p^{-p/4-1/2}, B_p = 2^{1/2} e^{p/2} p^{-p/4}."""
    if p < 2:
        raise ValueError("p must be >= 2")
    a = 2.0**-0.5 * p ** (-p / 4 - 0.5)
    b = 2.0**0.5 * math.exp(p / 2) * p ** (-p / 4)
    return a, b


def tensor_threshold_bounds(p: int, n: int, D: int) -> tuple[float, float]:
    """(lambda_low, lambda_high) = (A_p, B_p) * n^{-p/4} D^{(2-p)/4}.

    Below lambda_low the squared norm is geometrically dominated; above
    lambda_high (with D <= 2n/p and D growing) it diverges.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    a, b = tensor_threshold_constants(p)
    scale = n ** (-p / 4) * D ** ((2 - p) / 4)
    return a * scale, b * scale


@dataclass(frozen=True)
class GaussianHeuristic:
    """Terms of the norm under the N(0, n) overlap approximation."""

    lam_hat: float
    D: int
    log_terms: np.ndarray
    log_cumulative: float

    @property
    def terms(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_terms)

    @property
    def cumulative(self) -> float:
        return math.exp(self.log_cumulative) if self.log_cumulative <= LOG_FLOAT_MAX else math.inf

    @property
    def ratios(self) -> np.ndarray:
        """r_d = lam_hat^2 (2d+1) / (2(d+1)), increasing to lam_hat^2."""
        d = np.arange(self.D)
        return self.lam_hat**2 * (2 * d + 1) / (2 * (d + 1))


def gaussian_heuristic_norm_sq(lam_hat: float, D: int) -> GaussianHeuristic:
    """T_d = (lam_hat^2/2)^d (2d-1)!! / d! and their cumulative sum."""
    if D < 0:
        raise ValueError("D must be nonnegative")
    log_terms = np.full(D + 1, NEG_INF)
    log_terms[0] = 0.0
    if lam_hat > 0:
        d = np.arange(1, D + 1, dtype=float)
        # log (2d-1)!! = lgamma(2d+1) - d log 2 - lgamma(d+1)
        log_dfact = (
            np.array([math.lgamma(2 * x + 1) for x in d])
            - d * math.log(2)
            - np.array([math.lgamma(x + 1) for x in d])
        )
        log_terms[1:] = (
            d * math.log(lam_hat**2 / 2)
            + log_dfact
            - np.array([math.lgamma(x + 1) for x in d])
        )
    log_cum = slog_sum((1, float(l)) for l in log_terms if l > NEG_INF)[1]
    return GaussianHeuristic(lam_hat, D, log_terms, log_cum)


# -- grid scans --------------------------------------------------------------


@dataclass(frozen=True)
class DSchedule:
    """Degree schedule D(n): const:c, log, polylog:eps, or power:delta."""

    kind: str
    param: Optional[float] = None

    def __post_init__(self):
        if self.kind == "const":
            if self.param is None or self.param < 1:
                raise ValueError("const schedule needs c >= 1")
        elif self.kind == "polylog":
            if self.param is None or self.param <= 0:
                raise ValueError("polylog schedule needs eps > 0")
        elif self.kind == "power":
            if self.param is None or not (0 < self.param < 1):
                raise ValueError("power schedule needs 0 < delta < 1")
        elif self.kind != "log":
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def degree(self, n: int) -> int:
        if self.kind == "const":
            return int(self.param)
        if self.kind == "log":
            return max(1, math.ceil(math.log(n)))
        if self.kind == "polylog":
            return max(1, math.ceil(math.log(n) ** (1 + self.param)))
        return max(1, math.ceil(n**self.param))

    @staticmethod
    def parse(text: str) -> "DSchedule":
        kind, _, param = text.partition(":")
        return DSchedule(kind, float(param) if param else None)

    def __str__(self) -> str:
        return self.kind if self.param is None else f"{self.kind}:{self.param:g}"


@dataclass(frozen=True)
class ScanPoint:
    n: int
    D: int
    lam: float
    lam_hat: Optional[float]
    lam_input: float  # the grid value as given (lambda_hat when scanning it)
    log_norm_sq: Optional[float]
    mode: str
    error: Optional[str] = None


@dataclass(frozen=True)
class ScanResult:
    """Grid of log-norms with a per-lambda divergence classification.

    Classification rule (documented, conservative): "diverging" when the
    log-norm is strictly increasing over the top half of the n grid and the
    final value exceeds log(100); "bounded" when the sup over the whole grid
    is at most log(10) and the fitted slope of log||L||^2 against log n over
    the top half has magnitude below 0.05; otherwise "inconclusive".
    """

    p: int
    prior: PriorSpec
    schedule: DSchedule
    n_grid: tuple[int, ...]
    lam_grid: tuple[float, ...]
    points: tuple[ScanPoint, ...]
    classifications: dict[float, str]
    slopes: dict[float, float]
    has_failures: bool


def classify_series(
    log_norms: Sequence[float],
    diverge_final: float = math.log(100.0),
    bounded_sup: float = math.log(10.0),
    slope_tol: float = 0.05,
    slope: Optional[float] = None,
) -> str:
    if len(log_norms) < 2 or slope is None or any(v is None for v in log_norms):
        return "inconclusive"
    top = list(log_norms)[-max(2, math.ceil(len(log_norms) / 2)):]
    if all(b > a for a, b in zip(top, top[1:])) and log_norms[-1] > diverge_final:
        return "diverging"
    if max(log_norms) <= bounded_sup and abs(slope) < slope_tol:
        return "bounded"
    return "inconclusive"


def _fit_slope(ns: Sequence[int], values: Sequence[float]) -> Optional[float]:
    if len(ns) < 2:
        return None
    x = np.log(np.asarray(ns, float))
    y = np.asarray(values, float)
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0:
        return None
    return float(x @ (y - y.mean())) / denom


def scan_point(p: int, prior: PriorSpec, n: int, D: int, lam_value, use_lam_hat: bool,
               mode: Optional[str] = None) -> ScanPoint:
    """One grid evaluation; failures are captured, not raised."""
    lam = float(lam_value) if not use_lam_hat else float(lam_value) / math.sqrt(2 * n)
    lam_hat = float(lam_value) if use_lam_hat else (lam * math.sqrt(2 * n) if p == 2 else None)
    try:
        if use_lam_hat:
            model = ModelSpec.with_lambda_hat(n, prior, lam_value, p=p)
        else:
            model = ModelSpec.with_lambda(p, n, prior, lam_value)
        res = ldlr_norm_sq(model, D, mode)
        return ScanPoint(n, D, lam, lam_hat, float(lam_value), res.log_norm_sq, res.mode)
    except Exception as exc:  # per-point failure: record and continue
        return ScanPoint(n, D, lam, lam_hat, float(lam_value), None, mode or "", error=str(exc))


def scan(
    p: int,
    prior: PriorSpec,
    lam_grid: Sequence,
    n_grid: Sequence[int],
    schedule: DSchedule,
    use_lam_hat: bool = False,
    mode: Optional[str] = None,
    map_fn: Callable = map,
    diverge_final: float = math.log(100.0),
    bounded_sup: float = math.log(10.0),
    slope_tol: float = 0.05,
) -> ScanResult:
    """Sweep (n, lambda) and classify each lambda by the documented rule.

    The slope reported per lambda is the least-squares slope of log||L||^2
    against log n over the top half of the n grid.  `map_fn` may be a
    worker pool's map; points are keyed by grid position so the reduction
    order (and the output file) is independent of scheduling.
    """
    if not len(n_grid) or not len(lam_grid):
        raise ValueError("scan grids must be nonempty")
    n_grid = tuple(sorted(int(n) for n in n_grid))
    jobs = []
    for n in n_grid:
        D = schedule.degree(n)
        for lam in lam_grid:
            jobs.append((p, prior, n, D, lam, use_lam_hat, mode))
    points = list(map_fn(_scan_point_star, jobs))
    lam_floats = tuple(float(l) for l in lam_grid)

    classifications = {}
    slopes = {}
    for i, lam in enumerate(lam_floats):
        series = points[i :: len(lam_grid)]
        values = [pt.log_norm_sq for pt in series]
        if any(v is None for v in values):
            classifications[lam] = "inconclusive"
            slopes[lam] = math.nan
            continue
        half = max(2, math.ceil(len(n_grid) / 2))
        slope = _fit_slope(n_grid[-half:], values[-half:])
        slopes[lam] = slope if slope is not None else math.nan
        classifications[lam] = classify_series(
            values, diverge_final, bounded_sup, slope_tol, slope
        )
    return ScanResult(
        p, prior, schedule, n_grid, lam_floats, tuple(points),
        classifications, slopes, any(pt.error for pt in points),
    )


def _scan_point_star(args) -> ScanPoint:
    return scan_point(*args)


def scan_csv_rows(result: ScanResult) -> list[dict]:
    """CSV rows in deterministic order: n-major, then D, then lambda."""
    rows = []
    for pt in result.points:  # points are generated n-major, then lambda
        rows.append(
            {
                "p": result.p,
                "n": pt.n,
                "D": pt.D,
                "lambda": repr(pt.lam),
                "lambda_hat": "" if pt.lam_hat is None else repr(pt.lam_hat),
                "log_norm_sq": "" if pt.log_norm_sq is None else repr(pt.log_norm_sq),
                "mode": pt.mode,
                "classification": result.classifications.get(pt.lam_input, "inconclusive"),
            }
        )
    return rows
