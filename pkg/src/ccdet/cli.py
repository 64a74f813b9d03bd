"""Figure-ready command-line front end for the detection toolkit.

Subcommands: plan | bounds | ratio | simulate | sweep-alpha | sweep-gamma |
concentration.  Parameters come from flags, optionally seeded by an INI
config file (sections [common] and [<subcommand>]); flags win over the
file.  Every output embeds the resolved experiment configuration, so a run
can be reproduced from its own header.  Keys that cannot change the
numbers (output path, format, worker count) are deliberately left out of
the header: rerunning the same experiment must produce identical bytes.

Exit codes: 0 success, 2 configuration errors, 3 invalid runs (censoring
above the limit, an infeasible single-point plan, or no concentration-
passing matrix draw).
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .detector import DetectorConfig, threshold_from_alpha
from .montecarlo import (
    CENSOR_LIMIT,
    TrialSpec,
    aggregate,
    concentration_experiment,
    default_horizon,
    derive_seed,
    find_concentration_matrix,
    simulate_outcomes,
    write_outcomes_csv,
)
from .sensing import (
    Construction,
    Signal,
    build_matrix,
    generate_sparse_signal,
    projection_energy,
)
from .theory import (
    ConcentrationConstants,
    add_bounds_projection,
    add_bounds_rip,
    add_upper_toeplitz,
    concentration_probability,
    db_to_linear,
    delay_ratio_bounds,
    plan_measurements,
    toeplitz_entry_tail_bounds,
)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INVALID_RUN = 3

# Sub-seed tags for the independent components of one experiment.
_SIGNAL_TAG = 1
_MATRIX_TAG = 2
_TRIALS_TAG = 3

# Resolved keys that cannot affect results and stay out of the provenance.
_PROVENANCE_EXCLUDE = {"config", "output", "format", "workers"}


class ConfigError(Exception):
    """Bad flag, bad config-file content, or an unusable parameter combination."""


class InvalidRunError(Exception):
    """The run executed but its outcome is unusable as configured."""


def _parse_float(text: str) -> float:
    return float(text)


def _parse_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(piece) for piece in text.split(",") if piece.strip())


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


@dataclass(frozen=True)
class Param:
    name: str
    parse: Callable[[str], object]
    default: object
    help: str
    switch: bool = False


_COMMON_PARAMS = (
    Param("config", str, None, "INI config file seeding the parameters"),
    Param("output", str, "-", "output path, or - for stdout"),
    Param("format", _parse_choice("csv", "json"), "csv", "output format"),
    Param("seed", _parse_int, 0, "master seed for every random component"),
    Param("workers", _parse_int, 1, "parallel worker count (results do not depend on it)"),
)

_SIM_SHARED = (
    Param("rho", _parse_float, 0.1, "geometric change-time parameter"),
    Param("snr_db", _parse_float, 5.0, "signal-to-noise ratio in dB"),
    Param("sigma2", _parse_float, 1.0, "per-component noise variance"),
    Param("pi0", _parse_float, 0.0, "prior mass on a pre-existing change"),
    Param("n", _parse_int, 100, "ambient signal dimension"),
    Param("k", _parse_int, None, "signal sparsity (default: dense)"),
    Param("delta", _parse_float, 0.5, "concentration slack for brackets and events"),
    Param(
        "construction",
        str,
        "gaussian_ensemble",
        "sensing family: identity, gaussian_ensemble, unit_norm_rows, "
        "random_ortho_projection, gaussian_toeplitz",
    ),
    Param("n_trials", _parse_int, 10_000, "Monte Carlo trials per grid point"),
    Param("horizon", _parse_int, None, "censoring horizon (default: scaled upper bound)"),
    Param("horizon_factor", _parse_float, 50.0, "multiple of the delay upper bound"),
    Param(
        "concentration_pass",
        _parse_bool,
        False,
        "use the first matrix draw passing the concentration event",
        switch=True,
    ),
    Param("slack", _parse_float, 1.15, "multiplicative slack on theory upper bounds"),
)

_COMMAND_PARAMS: dict[str, tuple[Param, ...]] = {
    "plan": (
        Param("r0", _parse_float, 4.0, "target compressed/uncompressed delay ratio"),
        Param("rho", _parse_float, 0.1, "geometric change-time parameter"),
        Param("snr_db", _parse_float, 25.0, "signal-to-noise ratio in dB"),
        Param("beta", _parse_float, 0.1, "energy-capture failure budget"),
        Param("delta", _parse_float, 0.5, "concentration slack"),
        Param("k", _parse_int, None, "sparsity override (default: k_log_coeff * log n)"),
        Param("k_log_coeff", _parse_float, 2.0, "sparsity growth coefficient"),
        Param("n", _parse_int, None, "single dimension instead of a grid"),
        Param("n_min", _parse_int, 100, "grid start"),
        Param("n_max", _parse_int, 1_000_000, "grid end"),
        Param("n_points", _parse_int, 41, "log-spaced grid size"),
        Param("c", _parse_float, 0.25, "concentration exponent constant"),
        Param("c1", _parse_float, 1.0, "Toeplitz probability constant"),
        Param("c2", _parse_float, 1.0, "Toeplitz measurement constant"),
    ),
    "bounds": (
        Param("family", _parse_choice("projection", "rip", "toeplitz"), "projection",
              "which bound family to evaluate"),
        Param("alpha", _parse_float, 0.01, "false-alarm budget"),
        Param("rho", _parse_float, 0.1, "geometric change-time parameter"),
        Param("snr_db", _parse_float, 5.0, "signal-to-noise ratio in dB"),
        Param("gamma", _parse_float, 1.0, "compression ratio m/n (projection family)"),
        Param("delta", _parse_float, 0.0, "concentration or isometry slack"),
        Param("lambda_min", _parse_float, None, "restricted Gram eigenvalue floor (rip)"),
        Param("lambda_max", _parse_float, None, "restricted Gram eigenvalue ceiling (rip)"),
        Param("n", _parse_int, None, "ambient dimension (toeplitz)"),
        Param("k", _parse_int, None, "sparsity (toeplitz)"),
        Param("m", _parse_float, None, "measurement count for the probability floor (toeplitz)"),
        Param("c1", _parse_float, 1.0, "Toeplitz probability constant"),
        Param("c2", _parse_float, 1.0, "Toeplitz measurement constant"),
        Param("delta1", _parse_float, 1.0, "Toeplitz diagonal-entry constant"),
        Param("delta2", _parse_float, 1.0, "Toeplitz off-diagonal-entry constant"),
    ),
    "ratio": (
        Param("snr_db", _parse_float, 5.0, "signal-to-noise ratio in dB"),
        Param("rho", _parse_float, 0.1, "geometric change-time parameter"),
        Param("gamma", _parse_float, 0.25, "compression ratio m/n"),
        Param("delta", _parse_float, 0.5, "concentration slack"),
    ),
    "simulate": (
        Param("alpha", _parse_float, 0.01, "false-alarm budget"),
        Param("m", _parse_int, None, "measurement count"),
        Param("gamma", _parse_float, None, "compression ratio (alternative to m)"),
        Param("full_vectors", _parse_bool, False,
              "simulate full observation vectors instead of matched-filter scalars",
              switch=True),
        Param("trials_csv", str, None, "also write the per-trial log to this path"),
    ) + _SIM_SHARED,
    "sweep-alpha": (
        Param("alphas", _parse_float_list, (0.01, 0.001, 0.0001),
              "comma-separated false-alarm budgets"),
        Param("m", _parse_int, None, "measurement count (default: from the planner)"),
        Param("gamma", _parse_float, None, "compression ratio (alternative to m)"),
        Param("beta", _parse_float, 0.1, "planner energy-capture failure budget"),
        Param("r0", _parse_float, 4.0, "planner target delay ratio"),
        Param("c", _parse_float, 0.25, "planner concentration constant"),
    ) + _SIM_SHARED,
    "sweep-gamma": (
        Param("gammas", _parse_float_list, (0.1, 0.2, 0.3, 0.5, 1.0),
              "comma-separated compression ratios"),
        Param("alpha", _parse_float, 0.001, "false-alarm budget"),
    ) + _SIM_SHARED,
    "concentration": (
        Param("construction", str, "gaussian_ensemble", "sensing family to draw"),
        Param("m", _parse_int, 100, "measurement count"),
        Param("n", _parse_int, 1000, "ambient dimension"),
        Param("delta", _parse_float, 0.5, "bracket half-width (may exceed 1)"),
        Param("n_draws", _parse_int, 10_000, "independent matrix draws"),
        Param("mode", _parse_choice("projection", "image"), "projection",
              "which energy the bracket tests"),
        Param("k", _parse_int, None, "signal sparsity (default: dense)"),
        Param("c", _parse_float, 0.25, "concentration exponent constant"),
    ),
}

_COMMAND_HELP = {
    "plan": "measurement counts meeting the capture and delay-ratio requirements",
    "bounds": "closed-form delay brackets for one parameter point",
    "ratio": "closed-form delay-ratio bracket for one parameter point",
    "simulate": "Monte Carlo delay/false-alarm estimate at one parameter point",
    "sweep-alpha": "simulated delay against theory across false-alarm budgets",
    "sweep-gamma": "simulated delay against theory across compression ratios",
    "concentration": "empirical energy-capture frequency against the theory floor",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccdet",
        description="Bayesian quickest change detection from compressive measurements.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for command, params in _COMMAND_PARAMS.items():
        sub = subparsers.add_parser(
            command, help=_COMMAND_HELP[command], description=_COMMAND_HELP[command]
        )
        for param in _COMMON_PARAMS + params:
            flag = "--" + param.name.replace("_", "-")
            if param.switch:
                sub.add_argument(
                    flag, dest=param.name, action=argparse.BooleanOptionalAction,
                    default=None, help=param.help,
                )
            else:
                sub.add_argument(
                    flag, dest=param.name, type=param.parse, default=None, help=param.help,
                )
    return parser


def _load_config_values(path: str, command: str) -> dict[str, str]:
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(config_path.read_text(), source=path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc

    known_sections = {"common", *_COMMAND_PARAMS}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown config section [{section}] in {path}")
        allowed = {"mode"} | {p.name for p in _COMMON_PARAMS}
        if section != "common":
            allowed |= {p.name for p in _COMMAND_PARAMS[section]}
        for key in parser[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' in section [{section}] of {path}")

    values: dict[str, str] = {}
    for section in ("common", command):
        if parser.has_section(section):
            values.update(parser[section])
    declared_mode = values.pop("mode", None)
    if declared_mode is not None and declared_mode != command:
        raise ConfigError(
            f"config file declares mode '{declared_mode}' but the '{command}' "
            "subcommand was invoked"
        )
    return values


def _resolve(args: argparse.Namespace) -> dict:
    command = args.command
    table = _COMMON_PARAMS + _COMMAND_PARAMS[command]
    by_name = {param.name: param for param in table}
    resolved = {param.name: param.default for param in table}
    if args.config is not None:
        for key, raw in _load_config_values(args.config, command).items():
            param = by_name[key]
            parse = _parse_bool if param.switch else param.parse
            try:
                resolved[key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"config key '{key}': {exc}") from exc
        resolved["config"] = args.config
    for param in table:
        value = getattr(args, param.name)
        if value is not None:
            resolved[param.name] = value
    return resolved


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(item) for item in value)
    return str(value)


def _render_csv(command: str, provenance: dict, columns: tuple[str, ...], records) -> str:
    lines = [f"# command = {command}"]
    for key in sorted(provenance):
        lines.append(f"# {key} = {_format_value(provenance[key])}")
    lines.append(",".join(columns))
    for record in records:
        lines.append(",".join(_format_value(record[column]) for column in columns))
    return "\n".join(lines) + "\n"


def _render_json(command: str, provenance: dict, columns: tuple[str, ...], records) -> str:
    payload = {
        "command": command,
        "config": {key: provenance[key] for key in sorted(provenance)},
        "columns": list(columns),
        "records": [dict(record) for record in records],
    }
    return json.dumps(payload, indent=2) + "\n"


def _emit(command: str, params: dict, derived: dict, columns: tuple[str, ...], records) -> None:
    provenance = {
        key: value for key, value in params.items() if key not in _PROVENANCE_EXCLUDE
    }
    provenance.update(derived)
    if params["format"] == "csv":
        text = _render_csv(command, provenance, columns, records)
    else:
        text = _render_json(command, provenance, columns, records)
    if params["output"] == "-":
        sys.stdout.write(text)
    else:
        Path(params["output"]).write_text(text)


def _log_grid(n_min: int, n_max: int, n_points: int) -> list[int]:
    if n_min < 1 or n_max < n_min:
        raise ConfigError(f"bad dimension grid [{n_min}, {n_max}]")
    if n_points < 1:
        raise ConfigError(f"n_points must be at least 1, got {n_points}")
    raw = np.logspace(math.log10(n_min), math.log10(n_max), n_points)
    grid: list[int] = []
    for value in raw:
        n = int(round(float(value)))
        if not grid or n > grid[-1]:
            grid.append(n)
    return grid


def _run_plan(params: dict) -> bool:
    constants = ConcentrationConstants(c=params["c"], c1=params["c1"], c2=params["c2"])
    snr = db_to_linear(params["snr_db"])
    single_point = params["n"] is not None
    n_values = [params["n"]] if single_point else _log_grid(
        params["n_min"], params["n_max"], params["n_points"]
    )
    records = []
    for n in n_values:
        if params["k"] is not None:
            k = params["k"]
        else:
            k = min(n, max(1, math.ceil(params["k_log_coeff"] * math.log(n))))
        plan = plan_measurements(
            n, k, params["delta"], params["beta"], params["r0"], params["rho"], snr, constants
        )
        records.append({
            "n": n,
            "k": k,
            "m1": plan.m1,
            "m2": plan.m2,
            "m": plan.m,
            "gamma1": plan.m1 / n,
            "gamma2": plan.m2 / n,
            "gamma": plan.m / n,
            "feasible": plan.feasible,
        })
    crossover = next((r["n"] for r in records if r["m1"] <= r["m2"]), None)
    columns = ("n", "k", "m1", "m2", "m", "gamma1", "gamma2", "gamma", "feasible")
    _emit("plan", params, {"crossover_n": crossover}, columns, records)
    return single_point and not records[0]["feasible"]


def _run_bounds(params: dict) -> bool:
    family = params["family"]
    snr = db_to_linear(params["snr_db"])
    if family == "projection":
        bounds = add_bounds_projection(
            params["alpha"], params["rho"], snr, params["gamma"], params["delta"]
        )
        columns = ("family", "alpha", "rho", "snr", "gamma", "delta", "add_lower", "add_upper")
        record = {
            "family": family,
            "alpha": params["alpha"],
            "rho": params["rho"],
            "snr": snr,
            "gamma": params["gamma"],
            "delta": params["delta"],
            "add_lower": bounds.add_lower,
            "add_upper": bounds.add_upper,
        }
    elif family == "rip":
        if params["lambda_min"] is None or params["lambda_max"] is None:
            raise ConfigError("the rip family needs --lambda-min and --lambda-max")
        bounds = add_bounds_rip(
            params["alpha"], params["rho"], snr, params["delta"],
            params["lambda_min"], params["lambda_max"],
        )
        columns = (
            "family", "alpha", "rho", "snr", "delta", "lambda_min", "lambda_max",
            "add_lower", "add_upper",
        )
        record = {
            "family": family,
            "alpha": params["alpha"],
            "rho": params["rho"],
            "snr": snr,
            "delta": params["delta"],
            "lambda_min": params["lambda_min"],
            "lambda_max": params["lambda_max"],
            "add_lower": bounds.add_lower,
            "add_upper": bounds.add_upper,
        }
    else:
        if params["n"] is None or params["k"] is None:
            raise ConfigError("the toeplitz family needs --n and --k")
        constants = ConcentrationConstants(
            c1=params["c1"], c2=params["c2"],
            delta1=params["delta1"], delta2=params["delta2"],
        )
        toeplitz = add_upper_toeplitz(
            params["alpha"], params["rho"], snr, params["delta"],
            params["n"], params["k"], constants, m=params["m"],
        )
        m_used = params["m"] if params["m"] is not None else toeplitz.m_min
        diag_tail, off_tail = toeplitz_entry_tail_bounds(
            max(m_used, 1e-12), params["n"], params["k"], constants
        )
        columns = (
            "family", "alpha", "rho", "snr", "delta", "n", "k", "m",
            "add_upper", "prob_floor", "m_min", "diag_tail", "offdiag_tail",
        )
        record = {
            "family": family,
            "alpha": params["alpha"],
            "rho": params["rho"],
            "snr": snr,
            "delta": params["delta"],
            "n": params["n"],
            "k": params["k"],
            "m": m_used,
            "add_upper": toeplitz.bound,
            "prob_floor": toeplitz.prob_floor,
            "m_min": toeplitz.m_min,
            "diag_tail": diag_tail,
            "offdiag_tail": off_tail,
        }
    _emit("bounds", params, {}, columns, [record])
    return False


def _run_ratio(params: dict) -> bool:
    snr = db_to_linear(params["snr_db"])
    bounds = delay_ratio_bounds(snr, params["rho"], params["gamma"], params["delta"])
    columns = ("snr", "rho", "gamma", "delta", "r_lower", "r_upper")
    record = {
        "snr": snr,
        "rho": params["rho"],
        "gamma": params["gamma"],
        "delta": params["delta"],
        "r_lower": bounds.r_lower,
        "r_upper": bounds.r_upper,
    }
    _emit("ratio", params, {}, columns, [record])
    return False


def _run_concentration(params: dict) -> bool:
    try:
        construction = Construction(params["construction"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    n = params["n"]
    sparsity = params["k"] if params["k"] is not None else n
    signal = generate_sparse_signal(n, sparsity, 1.0, derive_seed(params["seed"], _SIGNAL_TAG))
    empirical = concentration_experiment(
        construction, params["m"], n, params["delta"], params["n_draws"], signal,
        master_seed=derive_seed(params["seed"], _MATRIX_TAG),
        mode=params["mode"], n_jobs=params["workers"],
    )
    floor = (
        concentration_probability(params["m"], params["delta"], params["c"])
        if params["delta"] < 1.0
        else None
    )
    columns = (
        "construction", "mode", "m", "n", "k", "delta", "n_draws",
        "empirical_prob", "theory_floor",
    )
    record = {
        "construction": construction.value,
        "mode": params["mode"],
        "m": params["m"],
        "n": n,
        "k": sparsity,
        "delta": params["delta"],
        "n_draws": params["n_draws"],
        "empirical_prob": empirical,
        "theory_floor": floor,
    }
    _emit("concentration", params, {}, columns, [record])
    return False


def _experiment_signal(params: dict) -> Signal:
    snr = db_to_linear(params["snr_db"])
    norm = math.sqrt(snr * params["sigma2"])
    sparsity = params["k"] if params["k"] is not None else params["n"]
    return generate_sparse_signal(
        params["n"], sparsity, norm, derive_seed(params["seed"], _SIGNAL_TAG)
    )


def _experiment_matrix(params: dict, m: int, signal: Signal, matrix_master: int):
    """One matrix draw for an experiment, optionally conditioned on the
    concentration event; returns (matrix, draw_index, captured_energy)."""
    try:
        construction = Construction(params["construction"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if construction is Construction.IDENTITY and m != params["n"]:
        raise ConfigError(f"identity construction requires m == n, got m={m} n={params['n']}")
    if params["concentration_pass"]:
        try:
            return find_concentration_matrix(
                construction, m, params["n"], params["delta"], signal, matrix_master
            )
        except RuntimeError as exc:
            raise InvalidRunError(str(exc)) from exc
    phi = build_matrix(construction, m, params["n"], derive_seed(matrix_master, 0))
    return phi, 0, projection_energy(phi, signal)


def _estimate_point(
    params: dict, phi, signal: Signal, alpha: float, trial_master: int
) -> dict:
    """Run one Monte Carlo point and pair it with its projection bracket."""
    snr = db_to_linear(params["snr_db"])
    threshold = threshold_from_alpha(alpha)
    config = DetectorConfig(
        rho=params["rho"], sigma2=params["sigma2"], threshold=threshold, pi0=params["pi0"]
    )
    gamma_actual = phi.rows / phi.cols
    bounds = add_bounds_projection(alpha, params["rho"], snr, gamma_actual, params["delta"])
    if params["horizon"] is not None:
        horizon = params["horizon"]
    else:
        horizon = default_horizon(bounds.add_upper, params["horizon_factor"])
    spec = TrialSpec(phi, signal, config, horizon, trial_master)
    outcomes = simulate_outcomes(
        spec, params["n_trials"], n_jobs=params["workers"],
        full_vectors=bool(params.get("full_vectors", False)),
    )
    est = aggregate(outcomes)
    return {
        "alpha": alpha,
        "threshold": threshold,
        "horizon": horizon,
        "add_hat": est.add_hat,
        "add_ci_half": est.add_ci_half,
        "pfa_hat": est.pfa_hat,
        "pfa_ci_half": est.pfa_ci_half,
        "n_detections": est.n_detections,
        "n_false_alarms": est.n_false_alarms,
        "n_censored": est.n_censored,
        "add_lower": bounds.add_lower,
        "add_upper": bounds.add_upper,
        "add_upper_slack": params["slack"] * bounds.add_upper,
        "valid": est.censor_rate <= CENSOR_LIMIT,
        "outcomes": outcomes,
    }


def _check_slack(params: dict) -> None:
    if params["slack"] < 1.0:
        raise ConfigError(f"slack must be at least 1, got {params['slack']}")


def _run_simulate(params: dict) -> bool:
    _check_slack(params)
    if params["m"] is not None:
        m = params["m"]
    elif params["gamma"] is not None:
        m = round(params["gamma"] * params["n"])
        if m < 1:
            raise ConfigError(
                f"gamma {params['gamma']} yields no measurements at n = {params['n']}"
            )
    else:
        raise ConfigError("simulate needs --m or --gamma")
    signal = _experiment_signal(params)
    phi, draw, energy = _experiment_matrix(
        params, m, signal, derive_seed(params["seed"], _MATRIX_TAG)
    )
    point = _estimate_point(
        params, phi, signal, params["alpha"], derive_seed(params["seed"], _TRIALS_TAG)
    )
    outcomes = point.pop("outcomes")
    if params["trials_csv"] is not None:
        write_outcomes_csv(outcomes, params["trials_csv"])
    record = {"m": m, "gamma": phi.rows / phi.cols, **point}
    columns = (
        "alpha", "threshold", "m", "gamma", "horizon", "add_hat", "add_ci_half",
        "pfa_hat", "pfa_ci_half", "n_detections", "n_false_alarms", "n_censored",
        "kl_realized", "add_lower", "add_upper", "add_upper_slack", "valid",
    )
    record["kl_realized"] = energy / (2.0 * params["sigma2"])
    derived = {
        "matrix_draw": draw,
        "projected_energy": energy,
        "signal_energy": signal.energy,
        "snr_linear": db_to_linear(params["snr_db"]),
    }
    _emit("simulate", params, derived, columns, [record])
    return not record["valid"]


def _run_sweep_alpha(params: dict) -> bool:
    _check_slack(params)
    alphas = params["alphas"]
    if not alphas:
        raise ConfigError("sweep-alpha needs a nonempty --alphas list")
    if params["m"] is not None:
        m, m_source = params["m"], "explicit"
    elif params["gamma"] is not None:
        m = round(params["gamma"] * params["n"])
        if m < 1:
            raise ConfigError(
                f"gamma {params['gamma']} yields no measurements at n = {params['n']}"
            )
        m_source = "gamma"
    else:
        if params["k"] is None:
            raise ConfigError(
                "the planner default for m needs an explicit --k; "
                "otherwise pass --m or --gamma"
            )
        plan = plan_measurements(
            params["n"], params["k"], params["delta"], params["beta"], params["r0"],
            params["rho"], db_to_linear(params["snr_db"]),
            ConcentrationConstants(c=params["c"]),
        )
        if not plan.feasible:
            raise ConfigError(
                f"planner requires m = {plan.m} > n = {params['n']} at these settings; "
                "pass --m or --gamma explicitly"
            )
        m, m_source = plan.m, "planner"
    signal = _experiment_signal(params)
    phi, draw, energy = _experiment_matrix(
        params, m, signal, derive_seed(params["seed"], _MATRIX_TAG)
    )
    trial_base = derive_seed(params["seed"], _TRIALS_TAG)
    records = []
    for index, alpha in enumerate(alphas):
        point = _estimate_point(params, phi, signal, alpha, derive_seed(trial_base, index))
        point.pop("outcomes")
        records.append(point)
    columns = (
        "alpha", "threshold", "horizon", "add_hat", "add_ci_half", "pfa_hat",
        "pfa_ci_half", "n_detections", "n_false_alarms", "n_censored",
        "add_lower", "add_upper", "add_upper_slack", "valid",
    )
    derived = {
        "m": m,
        "m_source": m_source,
        "matrix_draw": draw,
        "projected_energy": energy,
        "kl_realized": energy / (2.0 * params["sigma2"]),
        "signal_energy": signal.energy,
    }
    _emit("sweep-alpha", params, derived, columns, records)
    return not all(record["valid"] for record in records)


def _run_sweep_gamma(params: dict) -> bool:
    _check_slack(params)
    gammas = params["gammas"]
    if not gammas:
        raise ConfigError("sweep-gamma needs a nonempty --gammas list")
    signal = _experiment_signal(params)
    matrix_base = derive_seed(params["seed"], _MATRIX_TAG)
    trial_base = derive_seed(params["seed"], _TRIALS_TAG)
    records = []
    rejected = []
    for index, gamma in enumerate(gammas):
        m = round(gamma * params["n"])
        if m < 1:
            rejected.append(gamma)
            continue
        phi, draw, energy = _experiment_matrix(
            params, m, signal, derive_seed(matrix_base, index)
        )
        point = _estimate_point(params, phi, signal, params["alpha"],
                                derive_seed(trial_base, index))
        point.pop("outcomes")
        point.pop("alpha")
        records.append({
            "gamma": gamma,
            "m": m,
            "matrix_draw": draw,
            "projected_energy": energy,
            "kl_realized": energy / (2.0 * params["sigma2"]),
            **point,
        })
    if not records:
        raise ConfigError("every requested gamma was rejected (m < 1); nothing to run")
    columns = (
        "gamma", "m", "matrix_draw", "projected_energy", "kl_realized", "threshold",
        "horizon", "add_hat", "add_ci_half", "pfa_hat", "pfa_ci_half", "n_detections",
        "n_false_alarms", "n_censored", "add_lower", "add_upper", "add_upper_slack",
        "valid",
    )
    derived = {"rejected_gammas": tuple(rejected), "signal_energy": signal.energy}
    _emit("sweep-gamma", params, derived, columns, records)
    return not all(record["valid"] for record in records)


_COMMAND_RUNNERS = {
    "plan": _run_plan,
    "bounds": _run_bounds,
    "ratio": _run_ratio,
    "simulate": _run_simulate,
    "sweep-alpha": _run_sweep_alpha,
    "sweep-gamma": _run_sweep_gamma,
    "concentration": _run_concentration,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        params = _resolve(args)
        invalid = _COMMAND_RUNNERS[args.command](params)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except InvalidRunError as exc:
        print(f"invalid run: {exc}", file=sys.stderr)
        return EXIT_INVALID_RUN
    if invalid:
        print("invalid run: see the 'valid' column in the output", file=sys.stderr)
        return EXIT_INVALID_RUN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
