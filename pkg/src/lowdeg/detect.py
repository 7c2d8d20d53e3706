"""Executable statistical tests and their error-rate estimation.

Verdicts are the literals "p" (reject the null) and "q".  The PCA test
thresholds the top eigenvalue of the symmetrized observation; the
low-degree test thresholds the projected likelihood ratio; the exact
likelihood-ratio test is the Neyman-Pearson optimum at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .hermite import ldlr_evaluate, ldlr_evaluate_batch
from .ldlr import ModelSpec, lr_evaluate
from .models import Observation, sample_null, sample_planted, symmetrize
from .priors import PriorSpec
from .rng import derive_seed, make_rng

Verdict = str  # "p" | "q"

LANCZOS_TOL = 1e-8
Z95 = 1.959963984540054  # two-sided 95% normal quantile


class ConvergenceError(RuntimeError):
    """Eigensolver ran out of iterations; carries the best iterate."""

    def __init__(self, msg, best_value, best_vector, residual):
        super().__init__(msg)
        self.best_value = best_value
        self.best_vector = best_vector
        self.residual = residual


def top_eigpair(
    M: np.ndarray,
    tol: float = LANCZOS_TOL,
    maxiter: Optional[int] = None,
) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and unit eigenvector of a symmetric matrix.

    Lanczos with full reorthogonalization and a deterministic start vector;
    stops when the Ritz residual ||Mv - theta v|| drops below tol.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if not np.isfinite(M).all():
        raise ValueError("matrix has non-finite entries")
    if not np.allclose(M, M.T, atol=1e-10):
        raise ValueError("matrix is not symmetric")
    n = M.shape[0]
    if n == 1:
        return float(M[0, 0]), np.ones(1)
    if maxiter is None:
        maxiter = 10 * n

    q = make_rng(0x1DCE11A, "lanczos-start", n).standard_normal(n)
    q /= np.linalg.norm(q)
    basis = [q]
    alphas: list[float] = []
    betas: list[float] = []
    beta = 0.0
    q_prev = np.zeros(n)
    best = (None, None, math.inf)
    for _ in range(min(maxiter, n)):  # Krylov space is exhausted after n steps
        u = M @ q
        alpha = float(q @ u)
        alphas.append(alpha)
        r = u - alpha * q - beta * q_prev
        Q = np.asarray(basis)
        r -= Q.T @ (Q @ r)  # full reorthogonalization
        beta = float(np.linalg.norm(r))

        T = np.diag(alphas)
        if betas:
            off = np.array(betas)
            T += np.diag(off, 1) + np.diag(off, -1)
        w, V = np.linalg.eigh(T)
        theta = float(w[-1])
        s = V[:, -1]
        residual = abs(beta * s[-1])
        if residual < best[2]:
            v = Q.T @ s
            v /= np.linalg.norm(v)
            best = (theta, v, residual)
        if residual <= tol or beta == 0.0 or len(alphas) == n:
            theta, v, _ = best
            return theta, v
        betas.append(beta)
        q_prev = q
        q = r / beta
        basis.append(q)
    raise ConvergenceError(
        f"Lanczos did not reach tol={tol} in {maxiter} iterations "
        f"(best residual {best[2]:.3e})",
        best[0], best[1], best[2],
    )


def pca_threshold(lam_hat: float) -> float:
    """t(lam_hat) = 2 + (lam_hat + 1/lam_hat - 2)/2; minimum 2 at lam_hat = 1."""
    if lam_hat <= 0:
        raise ValueError("lambda_hat must be positive")
    return 2.0 + (lam_hat + 1.0 / lam_hat - 2.0) / 2.0


def pca_test(Y: Union[Observation, np.ndarray], lam_hat: float) -> Verdict:
    """Reject the null when lambda_max of the symmetrized matrix beats t(lam_hat).

    Calibrated for lam_hat > 1 (the spectral transition); accepted for any
    positive lam_hat, where it simply has little power.
    """
    lam_max, _ = top_eigpair(symmetrize(Y))
    return "p" if lam_max > pca_threshold(lam_hat) else "q"


@dataclass(frozen=True)
class BbpEstimate:
    lam_hat: float
    n: int
    trials: int
    seed: int
    mean_lambda_max: float
    se_lambda_max: float
    mean_overlap_sq: float
    se_overlap_sq: float


def bbp_estimate(lam_hat: float, n: int, trials: int, prior: PriorSpec, seed: int) -> BbpEstimate:
    """Monte Carlo means of lambda_max(Ybar) and <v_max, x/sqrt(n)>^2.

    Above lam_hat = 1 these approach lam_hat + 1/lam_hat and 1 - lam_hat^-2;
    below, 2 and 0.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    model = ModelSpec.with_lambda_hat(n, prior, lam_hat)
    tops = np.empty(trials)
    overlaps = np.empty(trials)
    for t in range(trials):
        obs, spike = sample_planted(model, derive_seed(seed, "bbp", t))
        lam_max, v = top_eigpair(symmetrize(obs))
        tops[t] = lam_max
        overlaps[t] = float(v @ spike) ** 2 / n
    return BbpEstimate(
        lam_hat, n, trials, seed,
        float(tops.mean()), float(tops.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan,
        float(overlaps.mean()), float(overlaps.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan,
    )


def poly_threshold_test(model: ModelSpec, D: int, Y: Union[Observation, np.ndarray], eta: float,
                        cap: Optional[int] = None) -> Verdict:
    """Reject the null when L^{<=D}(Y) > eta."""
    y = Y.flat if isinstance(Y, Observation) else np.asarray(Y, float).reshape(-1)
    kwargs = {} if cap is None else {"cap": cap}
    return "p" if ldlr_evaluate(model, D, y, **kwargs) > eta else "q"


def calibrate_eta(model: ModelSpec, D: int, alpha: float = 0.05, trials: int = 2000,
                  seed: int = 0) -> float:
    """Empirical 1-alpha null quantile of the degree-D statistic."""
    rng = make_rng(seed, "eta-calibration")
    ys = rng.standard_normal((trials, model.N))
    stats = ldlr_evaluate_batch(model, D, ys)
    return float(np.quantile(stats, 1.0 - alpha))


def lr_test(model: ModelSpec, Y: Union[Observation, np.ndarray], eta: float,
            cap: Optional[int] = None) -> Verdict:
    """Thresholded likelihood ratio test; maximizes power at its own alpha."""
    y = Y.flat if isinstance(Y, Observation) else np.asarray(Y, float).reshape(-1)
    kwargs = {} if cap is None else {"cap": cap}
    return "p" if lr_evaluate(model, y, **kwargs) > eta else "q"


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval; well behaved as the rate approaches 0 or 1."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class TestReport:
    """Estimated type I/II error probabilities with Wilson 95% intervals."""

    __test__ = False  # not a pytest class, despite the name

    test_id: str
    trials: int
    seed: int
    alpha_hat: float
    beta_hat: float
    alpha_interval: tuple[float, float]
    beta_interval: tuple[float, float]
    interval_method: str = "wilson-95"

    @property
    def alpha_half_width(self) -> float:
        lo, hi = self.alpha_interval
        return (hi - lo) / 2

    @property
    def beta_half_width(self) -> float:
        lo, hi = self.beta_interval
        return (hi - lo) / 2

    def to_json_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "trials": self.trials,
            "seed": self.seed,
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "alpha_interval": list(self.alpha_interval),
            "beta_interval": list(self.beta_interval),
            "alpha_half_width": self.alpha_half_width,
            "beta_half_width": self.beta_half_width,
            "interval_method": self.interval_method,
        }


def error_rates(
    test: Callable[[Observation], Verdict],
    model: ModelSpec,
    trials: int,
    seed: int,
    test_id: str = "test",
) -> TestReport:
    """alpha from null trials, beta from planted trials, with intervals.

    Each trial derives its own seed from (seed, side, index), so results do
    not depend on evaluation order.
    """
    if trials < 30:
        raise ValueError("need at least 30 trials per hypothesis")
    false_p = 0
    for t in range(trials):
        obs = sample_null(model.p, model.n, derive_seed(seed, "null", t))
        if test(obs) == "p":
            false_p += 1
    false_q = 0
    for t in range(trials):
        obs, _ = sample_planted(model, derive_seed(seed, "planted", t))
        if test(obs) == "q":
            false_q += 1
    return TestReport(
        test_id, trials, seed,
        false_p / trials, false_q / trials,
        wilson_interval(false_p, trials), wilson_interval(false_q, trials),
    )
