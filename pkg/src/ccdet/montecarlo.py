"""End-to-end Monte Carlo for the compressed change-detection pipeline.

A trial draws a geometric change time, generates observations, and runs the
stopping rule to the horizon; batches of trials aggregate into delay and
false-alarm estimates with normal-approximation confidence intervals.

Every trial owns an RNG stream derived from (master_seed, trial_index), so
results are reproducible and invariant to how trials are scheduled across
workers.  By default a trial simulates only the scalar matched-filter
projection of each observation: the statistic depends on the observation
through that inner product alone, and the scalar's pre/post-change law is
known in closed form.  Full-vector generation stays available behind a flag
as the slow cross-check path.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .detector import DetectorConfig, advance_log_odds, prior_log_odds
from .sensing import (
    Construction,
    MatchedFilter,
    SensingMatrix,
    Signal,
    build_matrix,
    matched_filter,
    projection_energy,
)

# Trials per parallel task; fixed so the schedule cannot affect results.
_CHUNK = 1024

# Acceptable fraction of censored trials before a run is flagged invalid.
CENSOR_LIMIT = 1e-3

OUTCOME_CSV_COLUMNS = ("trial_index", "lambda", "tau", "delay", "false_alarm", "censored")


@dataclass(frozen=True)
class TrialSpec:
    """Everything needed to reproduce a batch of trials."""

    matrix: SensingMatrix
    signal: Signal
    config: DetectorConfig
    horizon: int
    master_seed: int

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        if self.master_seed < 0:
            raise ValueError(f"master_seed must be nonnegative, got {self.master_seed}")
        if self.matrix.cols != self.signal.dimension:
            raise ValueError(
                f"signal dimension {self.signal.dimension} does not match "
                f"matrix columns {self.matrix.cols}"
            )


@dataclass(frozen=True)
class TrialOutcome:
    """One simulated trial.

    change_time is the drawn change point; tau is None when the rule never
    fired before the horizon (censored).  delay is set only for detections
    at or after the change.
    """

    trial_index: int
    change_time: int
    tau: int | None
    delay: int | None
    false_alarm: bool
    censored: bool


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Aggregated delay/false-alarm estimates over a batch of trials.

    add_hat is None when no trial detected at or after its change point.
    CI half-widths are NaN when too few trials resolve to support them.
    pfa_hat is taken over resolved (non-censored) trials.
    """

    add_hat: float | None
    add_ci_half: float
    pfa_hat: float
    pfa_ci_half: float
    n_trials: int
    n_detections: int
    n_false_alarms: int
    n_censored: int

    @property
    def censor_rate(self) -> float:
        return self.n_censored / self.n_trials


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent stream for one trial, stable across worker schedules."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, trial_index]))


def derive_seed(master_seed: int, tag: int) -> int:
    """64-bit sub-seed for a named component (signal draw, matrix draw, ...)."""
    return int(np.random.SeedSequence([master_seed, tag]).generate_state(1, np.uint64)[0])


def draw_change_time(rho: float, rng: np.random.Generator) -> int:
    """Sample the change time: P(k) = rho * (1 - rho)^(k - 1) for k >= 1."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    return int(rng.geometric(rho))


def run_trial(
    spec: TrialSpec,
    trial_index: int,
    mf: MatchedFilter | None = None,
    full_vectors: bool = False,
) -> TrialOutcome:
    """Simulate one trial, deterministic in (spec.master_seed, trial_index).

    Passing a precomputed matched filter skips re-factorizing the row Gram
    in tight loops; it must belong to (spec.matrix, spec.signal).
    """
    cfg = spec.config
    if mf is None:
        mf = matched_filter(spec.matrix, spec.signal)
    rng = trial_rng(spec.master_seed, trial_index)
    change_time = draw_change_time(cfg.rho, rng)

    log_rho = math.log(cfg.rho)
    log_one_minus_rho = math.log1p(-cfg.rho)
    log_threshold = math.log(cfg.threshold)
    log_odds = prior_log_odds(cfg.pi0)
    sigma2 = cfg.sigma2
    offset = mf.offset
    tau = None

    if full_vectors:
        entries = spec.matrix.entries
        weights = mf.weights
        signal_values = spec.signal.values
        noise_scale = math.sqrt(sigma2)
        for n in range(1, spec.horizon + 1):
            source = rng.standard_normal(spec.matrix.cols) * noise_scale
            if n >= change_time:
                source = source + signal_values
            projected = float((entries @ source) @ weights)
            log_odds = advance_log_odds(
                log_odds, log_rho, log_one_minus_rho, (projected - offset) / sigma2
            )
            if log_odds >= log_threshold:
                tau = n
                break
    else:
        energy = mf.projected_energy
        scalar_sd = math.sqrt(sigma2 * energy)
        for n in range(1, spec.horizon + 1):
            projected = scalar_sd * rng.standard_normal()
            if n >= change_time:
                projected += energy
            log_odds = advance_log_odds(
                log_odds, log_rho, log_one_minus_rho, (projected - offset) / sigma2
            )
            if log_odds >= log_threshold:
                tau = n
                break

    if tau is None:
        return TrialOutcome(trial_index, change_time, None, None, False, True)
    if tau < change_time:
        return TrialOutcome(trial_index, change_time, tau, None, True, False)
    return TrialOutcome(trial_index, change_time, tau, tau - change_time, False, False)


def replay_projections(projections, offset: float, config: DetectorConfig) -> int | None:
    """Stopping time recomputed from stored scalar projections.

    Feeds recorded matched-filter outputs through the same statistic path as
    run_trial; returns None when the rule never fires.
    """
    log_rho = math.log(config.rho)
    log_one_minus_rho = math.log1p(-config.rho)
    log_threshold = math.log(config.threshold)
    log_odds = prior_log_odds(config.pi0)
    for n, projected in enumerate(projections, start=1):
        log_odds = advance_log_odds(
            log_odds, log_rho, log_one_minus_rho, (projected - offset) / config.sigma2
        )
        if log_odds >= log_threshold:
            return n
    return None


def _run_range(spec: TrialSpec, lo: int, hi: int, full_vectors: bool) -> list[TrialOutcome]:
    mf = matched_filter(spec.matrix, spec.signal)
    return [run_trial(spec, i, mf=mf, full_vectors=full_vectors) for i in range(lo, hi)]


def simulate_outcomes(
    spec: TrialSpec, n_trials: int, n_jobs: int = 1, full_vectors: bool = False
) -> list[TrialOutcome]:
    """Run trials 0..n_trials-1; the outcome list is identical for any n_jobs."""
    if n_trials < 1:
        raise ValueError(f"n_trials must be at least 1, got {n_trials}")
    if n_jobs == 1:
        return _run_range(spec, 0, n_trials, full_vectors)
    chunks = Parallel(n_jobs=n_jobs)(
        delayed(_run_range)(spec, lo, min(lo + _CHUNK, n_trials), full_vectors)
        for lo in range(0, n_trials, _CHUNK)
    )
    return [outcome for chunk in chunks for outcome in chunk]


def aggregate(outcomes: list[TrialOutcome]) -> MonteCarloEstimate:
    """Fold trial outcomes into point estimates and 95% half-widths."""
    n_trials = len(outcomes)
    if n_trials == 0:
        raise ValueError("cannot aggregate zero outcomes")
    delays = np.array([o.delay for o in outcomes if o.delay is not None], dtype=float)
    n_censored = sum(o.censored for o in outcomes)
    n_false_alarms = sum(o.false_alarm for o in outcomes)
    n_resolved = n_trials - n_censored
    n_detections = int(delays.size)

    add_hat = float(delays.mean()) if n_detections > 0 else None
    if n_detections >= 2:
        add_ci_half = 1.96 * float(delays.std(ddof=1)) / math.sqrt(n_detections)
    else:
        add_ci_half = math.nan

    if n_resolved > 0:
        pfa_hat = n_false_alarms / n_resolved
    else:
        pfa_hat = math.nan
    if n_resolved >= 2:
        pfa_ci_half = 1.96 * math.sqrt(max(pfa_hat * (1.0 - pfa_hat), 0.0) / n_resolved)
    else:
        pfa_ci_half = math.nan

    return MonteCarloEstimate(
        add_hat=add_hat,
        add_ci_half=add_ci_half,
        pfa_hat=pfa_hat,
        pfa_ci_half=pfa_ci_half,
        n_trials=n_trials,
        n_detections=n_detections,
        n_false_alarms=n_false_alarms,
        n_censored=n_censored,
    )


def estimate(
    spec: TrialSpec, n_trials: int, n_jobs: int = 1, full_vectors: bool = False
) -> MonteCarloEstimate:
    return aggregate(simulate_outcomes(spec, n_trials, n_jobs=n_jobs, full_vectors=full_vectors))


def clopper_pearson_interval(successes: int, trials: int, confidence: float = 0.95):
    """Exact binomial interval; preferable to the normal one at small counts."""
    from scipy.stats import beta as beta_dist

    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must be in [0, {trials}], got {successes}")
    tail = (1.0 - confidence) / 2.0
    lower = 0.0 if successes == 0 else float(beta_dist.ppf(tail, successes, trials - successes + 1))
    upper = (
        1.0
        if successes == trials
        else float(beta_dist.ppf(1.0 - tail, successes + 1, trials - successes))
    )
    return lower, upper


def _check_shared_parameters(spec_a: TrialSpec, spec_b: TrialSpec) -> None:
    if spec_a.config != spec_b.config:
        raise ValueError("delay-ratio specs must share the detector configuration")
    if not np.array_equal(spec_a.signal.values, spec_b.signal.values):
        raise ValueError("delay-ratio specs must share the signal")


def estimate_delay_ratio(
    spec_compressed: TrialSpec,
    spec_uncompressed: TrialSpec,
    n_trials: int,
    n_jobs: int = 1,
) -> tuple[float, float]:
    """Ratio of compressed to uncompressed mean delays, with a delta-method CI.

    The uncompressed side is conventionally an identity-matrix spec of the
    same dimension.  Raises when either mean delay is undefined.
    """
    _check_shared_parameters(spec_compressed, spec_uncompressed)
    est_c = estimate(spec_compressed, n_trials, n_jobs=n_jobs)
    est_u = estimate(spec_uncompressed, n_trials, n_jobs=n_jobs)
    if est_c.add_hat is None or est_u.add_hat is None or est_u.add_hat == 0.0:
        raise RuntimeError(
            "delay ratio undefined: at least one side has no usable detections"
        )
    ratio = est_c.add_hat / est_u.add_hat
    if est_c.add_hat == 0.0 or math.isnan(est_c.add_ci_half) or math.isnan(est_u.add_ci_half):
        return ratio, math.nan
    ci_half = abs(ratio) * math.hypot(
        est_c.add_ci_half / est_c.add_hat, est_u.add_ci_half / est_u.add_hat
    )
    return ratio, ci_half


def _concentration_bracket(
    signal_values: np.ndarray, m: int, n: int, delta: float, mode: str
) -> tuple[float, float]:
    total_energy = float(signal_values @ signal_values)
    center = total_energy * (m / n) if mode == "projection" else total_energy
    return (1.0 - delta) * center, (1.0 + delta) * center


def _concentration_hits(
    construction: Construction,
    m: int,
    n: int,
    signal_values: np.ndarray,
    lower: float,
    upper: float,
    mode: str,
    master_seed: int,
    lo: int,
    hi: int,
) -> int:
    hits = 0
    for draw in range(lo, hi):
        phi = build_matrix(construction, m, n, derive_seed(master_seed, draw))
        if mode == "projection":
            value = projection_energy(phi, signal_values)
        else:
            image = phi.entries @ signal_values
            value = float(image @ image)
        if lower <= value <= upper:
            hits += 1
    return hits


def concentration_experiment(
    construction: Construction | str,
    m: int,
    n: int,
    delta: float,
    n_draws: int,
    signal: Signal | np.ndarray,
    master_seed: int = 0,
    mode: str = "projection",
    n_jobs: int = 1,
) -> float:
    """Fraction of fresh matrix draws whose captured energy lands in bracket.

    mode "projection" tests the row-space energy against (1 +- delta) times
    the m/n fraction of the signal energy; mode "image" tests the norm of
    the measurement image against (1 +- delta) times the signal energy.
    delta may exceed 1, which puts the lower edge below zero.
    """
    if n_draws < 1:
        raise ValueError(f"n_draws must be at least 1, got {n_draws}")
    if mode not in ("projection", "image"):
        raise ValueError(f"mode must be 'projection' or 'image', got {mode!r}")
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    construction = Construction(construction)
    values = signal.values if isinstance(signal, Signal) else np.asarray(signal, dtype=float)
    if values.size != n:
        raise ValueError(f"signal length {values.size} does not match n = {n}")
    lower, upper = _concentration_bracket(values, m, n, delta, mode)
    if n_jobs == 1:
        hits = _concentration_hits(
            construction, m, n, values, lower, upper, mode, master_seed, 0, n_draws
        )
    else:
        counts = Parallel(n_jobs=n_jobs)(
            delayed(_concentration_hits)(
                construction, m, n, values, lower, upper, mode, master_seed,
                lo, min(lo + _CHUNK, n_draws),
            )
            for lo in range(0, n_draws, _CHUNK)
        )
        hits = sum(counts)
    return hits / n_draws


def find_concentration_matrix(
    construction: Construction | str,
    m: int,
    n: int,
    delta: float,
    signal: Signal | np.ndarray,
    master_seed: int = 0,
    max_draws: int = 10_000,
) -> tuple[SensingMatrix, int, float]:
    """First matrix draw whose row-space energy passes the concentration event.

    Returns (matrix, draw_index, captured_energy).  Conditioning experiments
    on this event is what the projection-based delay brackets assume.
    """
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    construction = Construction(construction)
    values = signal.values if isinstance(signal, Signal) else np.asarray(signal, dtype=float)
    if values.size != n:
        raise ValueError(f"signal length {values.size} does not match n = {n}")
    lower, upper = _concentration_bracket(values, m, n, delta, "projection")
    for draw in range(max_draws):
        phi = build_matrix(construction, m, n, derive_seed(master_seed, draw))
        energy = projection_energy(phi, values)
        if lower <= energy <= upper:
            return phi, draw, energy
    raise RuntimeError(
        f"no concentration-passing draw within {max_draws} attempts; "
        "the bracket may be unreachable at these dimensions"
    )


def default_horizon(add_upper: float, factor: float = 50.0) -> int:
    """Censoring horizon comfortably above the theoretical delay upper bound."""
    if not (math.isfinite(add_upper) and add_upper > 0.0):
        raise ValueError(f"add_upper must be positive and finite, got {add_upper}")
    if not factor > 0.0:
        raise ValueError(f"factor must be positive, got {factor}")
    return max(1, math.ceil(factor * add_upper))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_outcomes_csv(outcomes: list[TrialOutcome], path) -> None:
    """Per-trial log with one fixed row layout; blanks mark undefined fields."""
    rows = [
        (
            o.trial_index,
            o.change_time,
            o.tau,
            o.delay,
            o.false_alarm,
            o.censored,
        )
        for o in outcomes
    ]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(OUTCOME_CSV_COLUMNS)
    for row in rows:
        writer.writerow([_format_cell(cell) for cell in row])
    Path(path).write_text(buffer.getvalue())


def estimate_record(spec: TrialSpec, est: MonteCarloEstimate) -> dict:
    """JSON-ready record of an estimate plus everything needed to rerun it."""
    return {
        "matrix": {
            "construction": spec.matrix.construction.value,
            "rows": spec.matrix.rows,
            "cols": spec.matrix.cols,
            "seed": spec.matrix.seed,
            "orthonormalized": spec.matrix.orthonormalized,
        },
        "signal": {
            "dimension": spec.signal.dimension,
            "sparsity": spec.signal.sparsity,
            "energy": spec.signal.energy,
        },
        "config": {
            "rho": spec.config.rho,
            "sigma2": spec.config.sigma2,
            "threshold": spec.config.threshold,
            "pi0": spec.config.pi0,
        },
        "horizon": spec.horizon,
        "master_seed": spec.master_seed,
        "estimate": {
            "add_hat": est.add_hat,
            "add_ci_half": est.add_ci_half,
            "pfa_hat": est.pfa_hat,
            "pfa_ci_half": est.pfa_ci_half,
            "n_trials": est.n_trials,
            "n_detections": est.n_detections,
            "n_false_alarms": est.n_false_alarms,
            "n_censored": est.n_censored,
        },
    }


def write_estimate_json(spec: TrialSpec, est: MonteCarloEstimate, path) -> None:
    record = estimate_record(spec, est)
    Path(path).write_text(json.dumps(record, indent=2, allow_nan=True) + "\n")
