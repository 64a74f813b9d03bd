"""Random sensing-matrix families and the linear algebra built on them.

Covers the four random constructions used for compressive measurements
(dense Gaussian ensemble, normalized Gaussian rows, random orthogonal
projection, Gaussian Toeplitz) plus the identity baseline, together with
row-space projections, matched filters, Gram-matrix eigenvalue utilities
and sparse test-signal generation.

A matrix is fully determined by (construction, rows, cols, seed), so it can
be stored as a tiny metadata record and regenerated bit for bit later.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.linalg

# Relative singular-value cutoff below which a matrix counts as rank deficient.
RANK_TOL = 1e-10

# Condition-number ceiling for the row-Gram solve inside matched_filter.
MAX_GRAM_CONDITION = 1e12


class ConstructionError(RuntimeError):
    """A generated or loaded matrix failed its family invariants."""


class Construction(str, Enum):
    """Supported sensing-matrix families."""

    IDENTITY = "identity"
    GAUSSIAN_ENSEMBLE = "gaussian_ensemble"
    UNIT_NORM_ROWS = "unit_norm_rows"
    RANDOM_ORTHO_PROJECTION = "random_ortho_projection"
    GAUSSIAN_TOEPLITZ = "gaussian_toeplitz"


@dataclass(frozen=True)
class SensingMatrix:
    """Dense sensing matrix plus the metadata needed to regenerate it.

    ``entries`` is marked read-only by the builders; treat instances as
    immutable values.  ``orthonormalized`` records whether the stored rows
    are an orthonormal basis of the original draw's row space rather than
    the raw draw itself; ``source_rows`` then remembers the raw draw's row
    count so the matrix can still be regenerated from metadata alone.
    """

    construction: Construction
    rows: int
    cols: int
    seed: int
    entries: np.ndarray
    orthonormalized: bool = False
    source_rows: int | None = None

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"matrix dimensions must be positive, got {self.rows}x{self.cols}")
        if self.entries.shape != (self.rows, self.cols):
            raise ValueError(
                f"entries shape {self.entries.shape} does not match declared {self.rows}x{self.cols}"
            )

    @property
    def compression_ratio(self) -> float:
        return self.rows / self.cols


@dataclass(frozen=True)
class Signal:
    """Known post-change signal, optionally with an explicit sparse support."""

    values: np.ndarray
    support: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ValueError("signal must be one-dimensional")
        if not np.linalg.norm(values) > 0.0:
            raise ValueError("signal must have positive norm")
        if self.support is not None:
            support = np.asarray(self.support, dtype=int)
            object.__setattr__(self, "support", support)
            if support.ndim != 1 or support.size == 0:
                raise ValueError("support must be a nonempty index vector")
            if support.min() < 0 or support.max() >= values.size:
                raise ValueError("support index out of range")
            if np.unique(support).size != support.size:
                raise ValueError("support contains repeated indices")
            mask = np.ones(values.size, dtype=bool)
            mask[support] = False
            if np.any(values[mask] != 0.0):
                raise ValueError("signal has nonzero entries outside the declared support")

    @property
    def dimension(self) -> int:
        return int(self.values.size)

    @property
    def sparsity(self) -> int:
        if self.support is not None:
            return int(self.support.size)
        return int(np.count_nonzero(self.values))

    @property
    def energy(self) -> float:
        return float(self.values @ self.values)


@dataclass(frozen=True)
class MatchedFilter:
    """Row-space matched filter for a fixed (matrix, signal) pair.

    ``weights`` solves (Phi Phi') w = Phi s, ``projected_energy`` is the
    energy of the signal component inside the row space, and ``offset`` is
    exactly half of it (the centering term of the log-likelihood ratio).
    """

    weights: np.ndarray
    offset: float
    projected_energy: float


def _signal_values(signal: Signal | np.ndarray, expected_dim: int) -> np.ndarray:
    values = signal.values if isinstance(signal, Signal) else np.asarray(signal, dtype=float)
    if values.ndim != 1 or values.size != expected_dim:
        raise ValueError(f"signal length {values.shape} does not match matrix columns {expected_dim}")
    return values


def _rank_extremes(entries: np.ndarray) -> tuple[float, float]:
    # Singular-value extremes via the smaller-side Gram; much cheaper than a
    # full SVD for the wide matrices drawn in concentration loops.
    m, n = entries.shape
    gram = entries @ entries.T if m <= n else entries.T @ entries
    eigs = scipy.linalg.eigh(gram, eigvals_only=True, check_finite=False)
    smallest = math.sqrt(max(float(eigs[0]), 0.0))
    largest = math.sqrt(max(float(eigs[-1]), 0.0))
    return smallest, largest


def _check_full_rank(entries: np.ndarray, construction: Construction) -> None:
    smallest, largest = _rank_extremes(entries)
    if smallest <= RANK_TOL * largest:
        cond = math.inf if smallest == 0.0 else largest / smallest
        raise ConstructionError(
            f"{construction.value} draw is numerically rank deficient "
            f"(smallest singular value {smallest:.3e}, condition {cond:.3e})"
        )


def build_matrix(
    construction: Construction | str, rows: int, cols: int, seed: int
) -> SensingMatrix:
    """Draw a sensing matrix of the requested family from a seeded stream.

    Gaussian-family entries have variance 1/rows so the column Gram is an
    identity in expectation.  The Toeplitz family may be tall (rows > cols);
    the other random families require rows <= cols.
    """
    construction = Construction(construction)
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
    if construction is Construction.IDENTITY and rows != cols:
        raise ValueError(f"identity construction requires rows == cols, got {rows}x{cols}")
    if construction in (
        Construction.GAUSSIAN_ENSEMBLE,
        Construction.UNIT_NORM_ROWS,
        Construction.RANDOM_ORTHO_PROJECTION,
    ) and rows > cols:
        raise ValueError(f"{construction.value} requires rows <= cols, got {rows}x{cols}")

    rng = np.random.default_rng(seed)
    if construction is Construction.IDENTITY:
        entries = np.eye(rows)
    elif construction is Construction.GAUSSIAN_ENSEMBLE:
        entries = rng.standard_normal((rows, cols)) / math.sqrt(rows)
    elif construction is Construction.UNIT_NORM_ROWS:
        entries = rng.standard_normal((rows, cols))
        entries /= np.linalg.norm(entries, axis=1, keepdims=True)
    elif construction is Construction.RANDOM_ORTHO_PROJECTION:
        # Row space is the column space of a cols x rows Gaussian draw; the
        # economic QR factor gives an orthonormal basis of it.
        gauss = rng.standard_normal((cols, rows))
        q, _ = scipy.linalg.qr(gauss, mode="economic", check_finite=False)
        entries = np.ascontiguousarray(q.T)
    else:
        # One long seeded vector supplies the rows + cols - 1 distinct
        # diagonal values of the Toeplitz draw.
        diag_values = rng.standard_normal(rows + cols - 1) / math.sqrt(rows)
        entries = scipy.linalg.toeplitz(
            diag_values[:rows], np.concatenate((diag_values[:1], diag_values[rows:]))
        )

    if construction not in (Construction.IDENTITY, Construction.RANDOM_ORTHO_PROJECTION):
        # Identity and QR output are orthonormal by construction; the random
        # dense draws get an explicit numerical-rank check.
        _check_full_rank(entries, construction)
    entries.setflags(write=False)
    return SensingMatrix(construction, rows, cols, int(seed), entries)


def orthonormalize(phi: SensingMatrix) -> SensingMatrix:
    """Orthonormal-row matrix spanning the same row space as ``phi``.

    Uses the reduced SVD right factor.  For a tall full-column-rank input the
    result has ``cols`` rows (the row space is the whole coordinate space).
    """
    _, singular_values, vt = np.linalg.svd(phi.entries, full_matrices=False)
    if singular_values[-1] <= RANK_TOL * singular_values[0]:
        raise ConstructionError(
            f"cannot orthonormalize a rank-deficient matrix "
            f"(smallest singular value {singular_values[-1]:.3e})"
        )
    basis = np.ascontiguousarray(vt)
    basis.setflags(write=False)
    source = phi.source_rows if phi.source_rows is not None else phi.rows
    return SensingMatrix(
        phi.construction,
        basis.shape[0],
        phi.cols,
        phi.seed,
        basis,
        orthonormalized=True,
        source_rows=source,
    )


def _row_gram_solve(phi: SensingMatrix, rhs: np.ndarray) -> np.ndarray:
    gram = phi.entries @ phi.entries.T
    try:
        factor = scipy.linalg.cho_factor(gram, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "row Gram is not positive definite; full row rank is required"
        ) from exc
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def projection_energy(phi: SensingMatrix, signal: Signal | np.ndarray) -> float:
    """Energy of the signal component inside the row space of ``phi``.

    Evaluates s' Phi' (Phi Phi')^{-1} Phi s through a Cholesky solve of the
    row Gram, never an explicit inverse.  Agrees with the squared norm of the
    orthonormalized-row image of the signal.
    """
    values = _signal_values(signal, phi.cols)
    image = phi.entries @ values
    return max(float(image @ _row_gram_solve(phi, image)), 0.0)


def project_onto_row_space(phi: SensingMatrix, signal: Signal | np.ndarray) -> np.ndarray:
    """Orthogonal projection of the signal onto the row space of ``phi``."""
    values = _signal_values(signal, phi.cols)
    image = phi.entries @ values
    return phi.entries.T @ _row_gram_solve(phi, image)


def matched_filter(phi: SensingMatrix, signal: Signal | np.ndarray) -> MatchedFilter:
    """Matched filter for scalar-detecting the signal in compressed noise.

    Raises a linear-algebra error when the row Gram's condition number
    exceeds MAX_GRAM_CONDITION; downstream likelihood ratios would be
    numerically meaningless in that regime.
    """
    values = _signal_values(signal, phi.cols)
    gram = phi.entries @ phi.entries.T
    cond = np.linalg.cond(gram)
    if not cond < MAX_GRAM_CONDITION:
        raise np.linalg.LinAlgError(
            f"row Gram condition number {cond:.3e} exceeds {MAX_GRAM_CONDITION:.1e}"
        )
    image = phi.entries @ values
    factor = scipy.linalg.cho_factor(gram, check_finite=False)
    weights = scipy.linalg.cho_solve(factor, image, check_finite=False)
    energy = max(float(image @ weights), 0.0)
    weights.setflags(write=False)
    return MatchedFilter(weights=weights, offset=energy / 2.0, projected_energy=energy)


def gram_extremes(
    phi: SensingMatrix, support: np.ndarray | None = None
) -> tuple[float, float]:
    """Extreme eigenvalues of the column Gram, optionally restricted.

    With ``support`` given, the Gram is formed from that column subset only,
    which is the quantity controlled by sparse isometry conditions.
    """
    if support is None:
        sub = phi.entries
    else:
        idx = np.asarray(support, dtype=int)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("support must be a nonempty index vector")
        if idx.min() < 0 or idx.max() >= phi.cols:
            raise ValueError("support index out of range")
        sub = phi.entries[:, idx]
    gram = sub.T @ sub
    eigs = scipy.linalg.eigh(gram, eigvals_only=True, check_finite=False)
    return max(float(eigs[0]), 0.0), float(eigs[-1])


def gershgorin_lambda_max_bound(phi: SensingMatrix) -> float:
    """Closed-form upper bound on the largest column-Gram eigenvalue.

    max_i G_ii + (cols - 1) * max_{i != j} |G_ij|, a disc bound that needs
    no eigensolver and is what the Toeplitz delay bound is built from.
    """
    gram = phi.entries.T @ phi.entries
    diag_max = float(np.max(np.diagonal(gram)))
    if phi.cols == 1:
        return diag_max
    off = np.abs(gram)
    np.fill_diagonal(off, 0.0)
    return diag_max + (phi.cols - 1) * float(np.max(off))


def generate_sparse_signal(dimension: int, sparsity: int, norm: float, seed: int) -> Signal:
    """Random signal with ``sparsity`` nonzero Gaussian spikes, rescaled to ``norm``."""
    if not 1 <= sparsity <= dimension:
        raise ValueError(f"sparsity must be in [1, {dimension}], got {sparsity}")
    if not norm > 0.0:
        raise ValueError(f"norm must be positive, got {norm}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(dimension, size=sparsity, replace=False))
    spikes = rng.standard_normal(sparsity)
    while np.any(spikes == 0.0):  # probability zero; keeps the sparsity exact
        spikes = rng.standard_normal(sparsity)
    spikes *= norm / np.linalg.norm(spikes)
    values = np.zeros(dimension)
    values[support] = spikes
    values.setflags(write=False)
    support.setflags(write=False)
    return Signal(values=values, support=support)


_MATRIX_FORMAT = "ccdet.sensing_matrix"
_MATRIX_FORMAT_VERSION = 1


def save_matrix(phi: SensingMatrix, path: str | Path) -> None:
    """Persist the regeneration record (construction, shape, seed) as JSON."""
    draw_rows = phi.source_rows if phi.source_rows is not None else phi.rows
    record = {
        "format": _MATRIX_FORMAT,
        "version": _MATRIX_FORMAT_VERSION,
        "construction": phi.construction.value,
        "rows": int(draw_rows),
        "cols": int(phi.cols),
        "seed": int(phi.seed),
        "orthonormalized": bool(phi.orthonormalized),
    }
    Path(path).write_text(json.dumps(record, indent=2) + "\n")


def load_matrix(path: str | Path) -> SensingMatrix:
    """Rebuild a matrix from its saved record; entries match the original draw."""
    try:
        record = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConstructionError(f"not a matrix record: {path}") from exc
    if not isinstance(record, dict) or record.get("format") != _MATRIX_FORMAT:
        raise ConstructionError(f"not a matrix record: {path}")
    if record.get("version") != _MATRIX_FORMAT_VERSION:
        raise ConstructionError(f"unsupported matrix record version {record.get('version')!r}")
    try:
        construction = Construction(record["construction"])
        rows, cols, seed = int(record["rows"]), int(record["cols"]), int(record["seed"])
        orthonormalized = bool(record["orthonormalized"])
    except (KeyError, ValueError) as exc:
        raise ConstructionError(f"malformed matrix record: {exc}") from exc
    # The record stores the raw draw's shape, so regenerating and then
    # re-orthonormalizing reproduces the saved entries exactly.
    phi = build_matrix(construction, rows, cols, seed)
    if orthonormalized:
        phi = orthonormalize(phi)
    return phi


def export_dense_csv(phi: SensingMatrix, path: str | Path) -> None:
    """Write the dense entries as CSV (one row per measurement row)."""
    np.savetxt(path, phi.entries, delimiter=",", fmt="%.18e")
