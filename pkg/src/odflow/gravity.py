"""Gravity-model OD baseline: flow proportional to mass product over distance^beta."""

import logging
from dataclasses import dataclass

import numpy as np

from .features import CityFeatures
from .grid import Grid, cell_centers, haversine_km_vec
from .matrix import ODMatrix

logger = logging.getLogger(__name__)

MASS_MODES = ("poi_total", "trip_endpoints")


@dataclass
class GravityParams:
    """Distance exponent plus the cell-mass definition.

    The proportionality constant is always calibrated so the raw matrix sums
    to the requested trip total, which also makes the result invariant to
    rescaling all masses.
    """

    beta: float = 2.0
    mass_mode: str = "poi_total"

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta}")
        if self.mass_mode not in MASS_MODES:
            raise ValueError(
                f"mass_mode must be one of {MASS_MODES}, got {self.mass_mode!r}"
            )


def cell_masses(features: CityFeatures, params: GravityParams, trips=None) -> np.ndarray:
    """Per-cell masses under the configured definition."""
    if params.mass_mode == "poi_total":
        return features.counts.sum(axis=1).astype(np.float64)
    counts = np.zeros(features.n_cells, dtype=np.float64)
    if trips is None:
        raise ValueError("mass_mode 'trip_endpoints' requires trips")
    for t in trips:
        counts[t.origin] += 1
        counts[t.destination] += 1
    return counts


def pairwise_costs(grid: Grid) -> np.ndarray:
    """(N, N) matrix of centre-to-centre travel costs in km."""
    centers = cell_centers(grid)
    n = grid.n_cells
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        out[i] = haversine_km_vec(
            centers[i, 0], centers[i, 1], centers[:, 0], centers[:, 1]
        )
    return out


def raw_gravity_flows(
    masses: np.ndarray, grid: Grid, params: GravityParams, total_trips: int
) -> np.ndarray:
    """Calibrated real-valued gravity flows (before integer rounding)."""
    masses = np.asarray(masses, dtype=np.float64)
    if masses.shape != (grid.n_cells,):
        raise ValueError(
            f"masses has shape {masses.shape}, expected ({grid.n_cells},)"
        )
    if not np.all(np.isfinite(masses)) or (masses < 0).any():
        raise ValueError("masses must be finite and non-negative")
    if total_trips < 0:
        raise ValueError(f"total_trips must be >= 0, got {total_trips}")
    if not masses.any():
        raise ValueError("degenerate input: all cell masses are zero")
    dists = pairwise_costs(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.outer(masses, masses) / dists**params.beta
    np.fill_diagonal(raw, 0.0)
    raw[~np.isfinite(raw)] = 0.0  # coincident centres guard
    raw_total = raw.sum()
    if raw_total <= 0:
        # e.g. a single nonzero mass: no off-diagonal pair has weight
        logger.warning("gravity model has no positive pair weights; emitting zeros")
        return np.zeros_like(raw)
    return raw * (float(total_trips) / raw_total)


def largest_remainder_round(raw: np.ndarray, target: int) -> np.ndarray:
    """Round non-negative reals to integers preserving their sum exactly.

    Floors everything, then hands out the remaining units in order of
    largest fractional part, ties broken by flat (row-major) index.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if (raw < 0).any():
        raise ValueError("largest_remainder_round expects non-negative input")
    floors = np.floor(raw)
    out = floors.astype(np.int64)
    deficit = int(target) - int(out.sum())
    if deficit < 0:
        # float dust pushed the floors above target; trim from the smallest
        # remainders (deterministically) — practically unreachable.
        order = np.lexsort((np.arange(raw.size), (raw - floors).ravel()))
        flat = out.ravel()
        for idx in order:
            if deficit == 0:
                break
            if flat[idx] > 0:
                flat[idx] -= 1
                deficit += 1
        return flat.reshape(raw.shape)
    if deficit > 0:
        remainders = (raw - floors).ravel()
        order = np.lexsort((np.arange(raw.size), -remainders))
        flat = out.ravel()
        flat[order[:deficit]] += 1
        out = flat.reshape(raw.shape)
    return out


def gravity_od_matrix(
    masses: np.ndarray, grid: Grid, params: GravityParams, total_trips: int
) -> ODMatrix:
    """Integer gravity OD matrix summing exactly to ``total_trips``.

    Diagonal is zero (distance-zero pairs are excluded). When no off-diagonal
    pair has positive weight (fewer than two nonzero masses) the matrix is
    all zeros.
    """
    raw = raw_gravity_flows(masses, grid, params, total_trips)
    if raw.sum() == 0:
        return ODMatrix(n_cells=grid.n_cells)
    rounded = largest_remainder_round(raw, int(total_trips))
    return ODMatrix.from_dense(rounded)


def calibrate_beta(
    masses: np.ndarray,
    grid: Grid,
    total_trips: int,
    reference: ODMatrix,
    candidates: tuple = (1.0, 1.5, 2.0, 2.5),
) -> float:
    """Pick the candidate exponent whose matrix best matches ``reference`` (RMSE)."""
    from .metrics import rmse  # local import to avoid a cycle

    if not candidates:
        raise ValueError("candidates must be non-empty")
    best_beta = None
    best_score = None
    for beta in candidates:
        params = GravityParams(beta=beta, mass_mode="poi_total")
        predicted = gravity_od_matrix(masses, grid, params, total_trips)
        score = rmse(reference, predicted)
        logger.info("beta calibration: beta=%.2f rmse=%.6f", beta, score)
        if best_score is None or score < best_score:
            best_beta, best_score = beta, score
    return float(best_beta)
