"""Bayesian posterior-odds change statistic for compressed observations.

The running statistic lives in log domain: after a change it grows
exponentially fast and would overflow float64 within a few dozen samples
otherwise.  The O(1)-per-sample recursion is the production path; the
explicit sum over candidate change times is kept as an independent
cross-check that any refactor of the recursion must keep agreeing with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .sensing import MatchedFilter

# exp() overflows float64 just above this; callers get inf, not an exception.
_MAX_EXP_ARG = 709.0


@dataclass(frozen=True)
class DetectorConfig:
    """Parameters of the Bayesian stopping rule.

    rho        geometric change-time parameter in (0, 1)
    sigma2     per-component noise variance
    threshold  stopping level for the posterior-odds statistic
    pi0        prior mass on the change having happened before sample one
    """

    rho: float
    sigma2: float
    threshold: float
    pi0: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if not self.sigma2 > 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.threshold > 0.0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if not 0.0 <= self.pi0 < 1.0:
            raise ValueError(f"pi0 must be in [0, 1), got {self.pi0}")


@dataclass(frozen=True)
class ShiryaevState:
    """Log posterior odds of a change having occurred, plus the sample count."""

    log_odds: float
    n: int = 0


def threshold_from_alpha(alpha: float) -> float:
    """Stopping level (1 - alpha) / alpha matching a false-alarm budget alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return (1.0 - alpha) / alpha


def prior_log_odds(pi0: float) -> float:
    if not 0.0 <= pi0 < 1.0:
        raise ValueError(f"pi0 must be in [0, 1), got {pi0}")
    return math.log(pi0 / (1.0 - pi0)) if pi0 > 0.0 else -math.inf


def init_state(config: DetectorConfig) -> ShiryaevState:
    return ShiryaevState(log_odds=prior_log_odds(config.pi0), n=0)


def llr_increment(y: np.ndarray, mf: MatchedFilter, sigma2: float) -> float:
    """Log-likelihood ratio of one compressed observation, post vs pre change.

    Depends on the observation only through its matched-filter projection,
    which is why trials can be simulated at scalar level.
    """
    if not sigma2 > 0.0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    y = np.asarray(y, dtype=float)
    if y.shape != mf.weights.shape:
        raise ValueError(
            f"observation shape {y.shape} does not match filter shape {mf.weights.shape}"
        )
    return (float(y @ mf.weights) - mf.offset) / sigma2


def _log_add(a: float, b: float) -> float:
    # logaddexp on plain floats, tolerant of -inf on either side
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def advance_log_odds(
    log_odds: float, log_rho: float, log_one_minus_rho: float, z: float
) -> float:
    """One recursion step in log domain.

    Factored out so the stand-alone update and the Monte Carlo trial loop
    share the exact same floating-point path.
    """
    return _log_add(log_odds, log_rho) - log_one_minus_rho + z


def update(state: ShiryaevState, z: float, rho: float) -> ShiryaevState:
    """Fold one log-likelihood increment into the running statistic."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    if not math.isfinite(z):
        raise ValueError(f"log-likelihood increment must be finite, got {z!r}")
    log_odds = advance_log_odds(state.log_odds, math.log(rho), math.log1p(-rho), z)
    return ShiryaevState(log_odds=log_odds, n=state.n + 1)


def has_stopped(state: ShiryaevState, threshold: float) -> bool:
    """Inclusive boundary: stopping fires the first time the odds reach the level."""
    if not threshold > 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    return state.n >= 1 and state.log_odds >= math.log(threshold)


def direct_log_statistic(increments, rho: float, pi0: float = 0.0) -> float:
    """Log statistic from the explicit sum over candidate change times.

    Computes log of

        pi0/(1-pi0) * exp(Z_1) / (1-rho)^n
        + sum_{k=1}^{n} rho (1-rho)^{k-1} exp(Z_k) / (1-rho)^n

    where Z_k is the sum of increments k..n, via one logsumexp.  The pi0
    term carries the full likelihood product Z_1, which is what makes this
    agree with the recursion started from the prior odds.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    zs = np.asarray(increments, dtype=float)
    if zs.ndim != 1:
        raise ValueError("increments must be a one-dimensional sequence")
    if not np.all(np.isfinite(zs)):
        raise ValueError("increments must all be finite")
    log_prior = prior_log_odds(pi0)
    n = zs.size
    if n == 0:
        return log_prior
    log_rho = math.log(rho)
    log_one_minus_rho = math.log1p(-rho)
    prefix = np.cumsum(zs)
    total = prefix[-1]
    tail_sums = total - np.concatenate(([0.0], prefix[:-1]))
    terms = log_rho + np.arange(n) * log_one_minus_rho + tail_sums - n * log_one_minus_rho
    if pi0 > 0.0:
        terms = np.append(terms, log_prior + total - n * log_one_minus_rho)
    return float(logsumexp(terms))


def direct_statistic(increments, config: DetectorConfig) -> float:
    """Linear-scale version of direct_log_statistic; inf when it overflows."""
    log_value = direct_log_statistic(increments, config.rho, config.pi0)
    if log_value > _MAX_EXP_ARG:
        return math.inf
    return math.exp(log_value)
