"""Closed-form detection-delay bounds, ratio brackets, and the planner.

Everything here is the leading-order expression with the vanishing
finite-threshold correction dropped, so Monte Carlo comparisons wrap these
numbers in a configurable slack factor instead of treating them as exact.
SNR is linear throughout; decibel values are converted at the interface
with db_to_linear and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .sensing import SensingMatrix, Signal, projection_energy


@dataclass(frozen=True)
class ConcentrationConstants:
    """Positive constants left unspecified by the concentration statements.

    c is the sub-Gaussian tail exponent coefficient (default 1/4, the
    conservative Johnson-Lindenstrauss choice); c1, c2, delta1, delta2
    parameterize the Toeplitz guarantees.  These are configuration, not
    physics: every quantitative claim routed through them is conditional
    on the chosen values.
    """

    c: float = 0.25
    c1: float = 1.0
    c2: float = 1.0
    delta1: float = 1.0
    delta2: float = 1.0

    def __post_init__(self) -> None:
        for name in ("c", "c1", "c2", "delta1", "delta2"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"constant {name} must be positive, got {getattr(self, name)}")


DEFAULT_CONSTANTS = ConcentrationConstants()


@dataclass(frozen=True)
class DelayBounds:
    """Two-sided bracket for the average detection delay."""

    add_lower: float
    add_upper: float

    def __post_init__(self) -> None:
        if not self.add_lower <= self.add_upper:
            raise ValueError(
                f"lower bound {self.add_lower} exceeds upper bound {self.add_upper}"
            )


@dataclass(frozen=True)
class RatioBounds:
    """Two-sided bracket for the compressed/uncompressed delay ratio."""

    r_lower: float
    r_upper: float

    def __post_init__(self) -> None:
        if not self.r_lower <= self.r_upper:
            raise ValueError(f"lower bound {self.r_lower} exceeds upper bound {self.r_upper}")


@dataclass(frozen=True)
class MeasurementPlan:
    """Planner output: the two requirement curves and their combined count.

    m1 enforces the energy-capture guarantee at confidence 1 - beta, m2 the
    target delay ratio; m is the integer count actually planned.  feasible
    records whether m fits within the ambient dimension.
    """

    m1: float
    m2: float
    m: int
    feasible: bool


class ToeplitzBound(NamedTuple):
    bound: float
    prob_floor: float
    m_min: float


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    if not value > 0.0:
        raise ValueError(f"linear value must be positive, got {value}")
    return 10.0 * math.log10(value)


def _check_unit_open(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must be in (0, 1), got {value}")


def _check_positive(name: str, value: float) -> None:
    if not value > 0.0:
        raise ValueError(f"{name} must be positive, got {value}")


def _check_slack(name: str, value: float) -> None:
    # delta = 0 is the degenerate no-slack case used for exact collapses
    if not 0.0 <= value < 1.0:
        raise ValueError(f"{name} must be in [0, 1), got {value}")


def _abs_log_survival(rho: float) -> float:
    """|log(1 - rho)|, the prior's contribution to the delay denominator."""
    return abs(math.log1p(-rho))


@dataclass(frozen=True)
class BoundInputs:
    """Validated parameter bundle for the delay-bound calculators."""

    alpha: float
    rho: float
    snr: float
    gamma: float = 1.0
    delta: float = 0.0

    def __post_init__(self) -> None:
        _check_unit_open("alpha", self.alpha)
        _check_unit_open("rho", self.rho)
        _check_positive("snr", self.snr)
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        _check_slack("delta", self.delta)


def add_asymptotic(alpha: float, rho: float, kl: float) -> float:
    """First-order average detection delay |log alpha| / (kl + |log(1 - rho)|)."""
    _check_unit_open("alpha", alpha)
    _check_unit_open("rho", rho)
    if kl < 0.0:
        raise ValueError(f"kl must be nonnegative, got {kl}")
    denominator = kl + _abs_log_survival(rho)
    if denominator == 0.0:
        raise ValueError("kl + |log(1 - rho)| must be positive")
    return abs(math.log(alpha)) / denominator


def kl_compressed(phi: SensingMatrix, signal: Signal, sigma2: float) -> float:
    """Per-sample KL divergence of the compressed post vs pre distributions.

    Equals the captured signal energy over twice the noise variance; this is
    the information rate the delay bounds are driven by.
    """
    _check_positive("sigma2", sigma2)
    return projection_energy(phi, signal) / (2.0 * sigma2)


def add_bounds_projection(
    alpha: float, rho: float, snr: float, gamma: float, delta: float
) -> DelayBounds:
    """Delay bracket when the captured energy concentrates near gamma * snr.

    Valid on the event that the captured fraction is within (1 +- delta) of
    gamma; both edges collapse to the asymptotic value at delta = 0.
    """
    inputs = BoundInputs(alpha=alpha, rho=rho, snr=snr, gamma=gamma, delta=delta)
    kl_high = (1.0 + inputs.delta) * inputs.gamma * inputs.snr / 2.0
    kl_low = (1.0 - inputs.delta) * inputs.gamma * inputs.snr / 2.0
    return DelayBounds(
        add_lower=add_asymptotic(inputs.alpha, inputs.rho, kl_high),
        add_upper=add_asymptotic(inputs.alpha, inputs.rho, kl_low),
    )


def delay_ratio_bounds(snr: float, rho: float, gamma: float, delta: float) -> RatioBounds:
    """Bracket for ADD(compressed) / ADD(uncompressed), threshold-free.

    The |log alpha| factors cancel, so the bracket depends only on the SNR,
    the prior, and the compression geometry.
    """
    _check_unit_open("rho", rho)
    _check_positive("snr", snr)
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    _check_slack("delta", delta)
    prior_term = 2.0 * _abs_log_survival(rho)
    numerator = snr + prior_term
    return RatioBounds(
        r_lower=numerator / (gamma * (1.0 + delta) * snr + prior_term),
        r_upper=numerator / (gamma * (1.0 - delta) * snr + prior_term),
    )


def plan_measurements(
    n_dim: int,
    sparsity: int,
    delta: float,
    beta: float,
    r0: float,
    rho: float,
    snr: float,
    constants: ConcentrationConstants = DEFAULT_CONSTANTS,
) -> MeasurementPlan:
    """Smallest measurement count meeting both planner requirements.

    m1 makes the energy-capture event hold with probability at least
    1 - beta for sparsity-limited signals; m2 keeps the delay ratio at or
    below the target r0.  The plan takes the larger of the two, at least 1.
    """
    if n_dim < 1:
        raise ValueError(f"n_dim must be positive, got {n_dim}")
    if not 1 <= sparsity <= n_dim:
        raise ValueError(f"sparsity must be in [1, {n_dim}], got {sparsity}")
    _check_unit_open("delta", delta)
    _check_unit_open("beta", beta)
    if not r0 > 1.0:
        raise ValueError(
            f"target ratio r0 must exceed 1, got {r0}: compression cannot push the "
            "delay below the uncompressed baseline"
        )
    _check_unit_open("rho", rho)
    _check_positive("snr", snr)
    m1 = 2.0 * (sparsity * math.log(42.0 / delta) + math.log(2.0 / beta)) / (
        constants.c * delta * delta
    )
    prior_term = 2.0 * (r0 - 1.0) / snr * _abs_log_survival(rho)
    m2 = max(0.0, n_dim / (r0 * (1.0 - delta)) * (1.0 - prior_term))
    m = math.ceil(max(m1, m2, 1.0))
    return MeasurementPlan(m1=m1, m2=m2, m=int(m), feasible=m <= n_dim)


def add_bounds_rip(
    alpha: float,
    rho: float,
    snr: float,
    delta: float,
    lambda_min: float,
    lambda_max: float,
) -> DelayBounds:
    """Delay bracket from two-sided column-Gram eigenvalue control.

    lambda_min and lambda_max bound the restricted Gram spectrum on the
    signal's support; delta is the isometry slack of the measurement image.
    """
    _check_unit_open("alpha", alpha)
    _check_unit_open("rho", rho)
    _check_positive("snr", snr)
    _check_slack("delta", delta)
    _check_positive("lambda_min", lambda_min)
    if not lambda_max >= lambda_min:
        raise ValueError(f"lambda_max {lambda_max} is below lambda_min {lambda_min}")
    kl_high = snr / (2.0 * lambda_min) * (1.0 + delta)
    kl_low = snr / (2.0 * lambda_max) * (1.0 - delta)
    return DelayBounds(
        add_lower=add_asymptotic(alpha, rho, kl_high),
        add_upper=add_asymptotic(alpha, rho, kl_low),
    )


def add_upper_toeplitz(
    alpha: float,
    rho: float,
    snr: float,
    delta: float,
    n_dim: int,
    sparsity: int,
    constants: ConcentrationConstants = DEFAULT_CONSTANTS,
    m: float | None = None,
) -> ToeplitzBound:
    """Delay upper bound for the Toeplitz family via the disc eigenvalue bound.

    Returns the bound itself, the probability floor at measurement count m
    (default: the minimum count m_min at which the guarantee activates), and
    m_min.  The KL floor divides the SNR by the disc bound 1 + delta*n/k.
    """
    _check_unit_open("alpha", alpha)
    _check_unit_open("rho", rho)
    _check_positive("snr", snr)
    _check_slack("delta", delta)
    if n_dim < 1:
        raise ValueError(f"n_dim must be positive, got {n_dim}")
    if not 1 <= sparsity <= n_dim:
        raise ValueError(f"sparsity must be in [1, {n_dim}], got {sparsity}")
    kl_floor = (snr / 2.0) * (1.0 - delta) / (1.0 + delta * n_dim / sparsity)
    m_min = constants.c2 * sparsity * sparsity * math.log(n_dim)
    if m is None:
        m = m_min
    elif not m > 0.0:
        raise ValueError(f"m must be positive, got {m}")
    prob_floor = max(0.0, 1.0 - math.exp(-constants.c1 * m / (sparsity * sparsity)))
    return ToeplitzBound(
        bound=add_asymptotic(alpha, rho, kl_floor), prob_floor=prob_floor, m_min=m_min
    )


def toeplitz_entry_tail_bounds(
    m: float, n_dim: int, sparsity: int, constants: ConcentrationConstants = DEFAULT_CONSTANTS
) -> tuple[float, float]:
    """Tail probabilities for the Toeplitz column-Gram entries, clipped to 1.

    First value bounds the chance any diagonal entry strays from 1, second
    the chance any off-diagonal entry is large; both decay in m / sparsity^2.
    """
    _check_positive("m", m)
    if n_dim < 1:
        raise ValueError(f"n_dim must be positive, got {n_dim}")
    if not 1 <= sparsity <= n_dim:
        raise ValueError(f"sparsity must be in [1, {n_dim}], got {sparsity}")
    k2 = sparsity * sparsity
    diag_tail = min(1.0, 2.0 * n_dim * math.exp(-constants.delta1 * m / k2))
    off_tail = min(1.0, 2.0 * n_dim * n_dim * math.exp(-constants.delta2 * m / k2))
    return diag_tail, off_tail


def concentration_probability(
    m: int, delta: float, c: float = DEFAULT_CONSTANTS.c
) -> float:
    """Lower bound on the chance the captured-energy fraction is within delta."""
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    _check_unit_open("delta", delta)
    _check_positive("c", c)
    return max(0.0, 1.0 - 2.0 * math.exp(-c * m * delta * delta))
