"""Destination cell matching under the travel-cost constraint.

Given a prediction (POI scores + cost), the matcher scans the cells whose
travel cost from the origin is within the (slack-adjusted) predicted cost and
returns the one whose normalized POI distribution has the lowest weighted
cross-entropy against the normalized prediction. The prediction is the
reference distribution (outside the log); candidates vary inside the log, so
a cell whose distribution equals the prediction is the unique minimizer.

Two scoring modes:

* ``match_poi_only=True`` (default): the cross-entropy runs over the K POI
  entries only; the predicted cost gates feasibility but does not enter the
  score.
* ``match_poi_only=False``: candidates are normalized as (u_i, c_i) with
  their own travel cost from the origin, compared against normalize(û, ĉ)
  over K+1 entries, with the cost entry weighted by alpha.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import OriginSet
from .features import CityFeatures
from .grid import Grid, travel_costs_from
from .loss import Q_FLOOR, LossWeights, normalize, softmax, softmax_rows
from .matrix import ODMatrix
from .predictors import Prediction

INFEASIBLE_FALLBACKS = ("nearest-cost-cell",)
TIE_BREAKS = ("lowest",)


@dataclass
class MatchPolicy:
    """Feasibility slack and scoring mode for destination matching."""

    cost_slack: float = 0.0
    match_poi_only: bool = True
    infeasible_fallback: str = "nearest-cost-cell"
    tie_break: str = "lowest"

    def __post_init__(self):
        if not (np.isfinite(self.cost_slack) and self.cost_slack >= 0):
            raise ValueError(f"cost_slack must be >= 0, got {self.cost_slack}")
        if self.infeasible_fallback not in INFEASIBLE_FALLBACKS:
            raise ValueError(
                f"unsupported infeasible_fallback {self.infeasible_fallback!r}"
            )
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")


class DestinationMatcher:
    """Reusable matcher: precomputes candidate distributions once per city."""

    def __init__(
        self,
        grid: Grid,
        features: CityFeatures,
        weights: LossWeights | None = None,
        policy: MatchPolicy | None = None,
    ):
        if features.n_cells != grid.n_cells:
            raise ValueError(
                f"features cover {features.n_cells} cells, grid has {grid.n_cells}"
            )
        self.grid = grid
        self.features = features
        self.weights = weights if weights is not None else LossWeights.unit(
            features.n_categories
        )
        if self.weights.w.shape[0] != features.n_categories:
            raise ValueError(
                f"weights cover {self.weights.w.shape[0]} categories, features have "
                f"{features.n_categories}"
            )
        self.policy = policy if policy is not None else MatchPolicy()
        self._counts = features.counts.astype(np.float64)
        self._cost_cache: dict = {}
        if self.policy.match_poi_only:
            q = softmax_rows(self._counts)
            # log(w_k * q_ik), floored, ready for a dot with (w * p)
            self._log_wq = np.log(self.weights.w * np.maximum(q, Q_FLOOR))
        else:
            self._log_wq = None

    def costs_from(self, origin: int) -> np.ndarray:
        dists = self._cost_cache.get(origin)
        if dists is None:
            dists = travel_costs_from(self.grid, origin)
            self._cost_cache[origin] = dists
        return dists

    def match(self, origin: int, pred: Prediction) -> int:
        if pred.poi_scores.shape[0] != self.features.n_categories:
            raise ValueError(
                f"prediction covers {pred.poi_scores.shape[0]} categories, features "
                f"have {self.features.n_categories}"
            )
        dists = self.costs_from(origin)
        limit = pred.cost_km * (1.0 + self.policy.cost_slack)
        feasible = np.flatnonzero(dists <= limit)
        if feasible.size == 0:
            # nearest-cost fallback; unreachable for valid predictions since
            # the origin itself has cost 0 <= limit
            return int(np.argmin(dists))
        if self.policy.match_poi_only:
            p = softmax(pred.poi_scores)
            scores = -(self._log_wq[feasible] @ (self.weights.w * p))
        else:
            p_full = normalize(pred.poi_scores, pred.cost_km)
            w_full = self.weights.full
            cand = np.column_stack([self._counts[feasible], dists[feasible]])
            q = softmax_rows(cand)
            scores = -(np.log(w_full * np.maximum(q, Q_FLOOR)) @ (w_full * p_full))
        # argmin returns the first (lowest-id) index on exact ties; feasible
        # ids are ascending, so the tie-break is lowest CellId
        return int(feasible[int(np.argmin(scores))])


def match_destination(
    grid: Grid,
    features: CityFeatures,
    origin: int,
    pred: Prediction,
    weights: LossWeights | None = None,
    policy: MatchPolicy | None = None,
) -> int:
    """One-shot destination match (see :class:`DestinationMatcher`)."""
    return DestinationMatcher(grid, features, weights, policy).match(origin, pred)


def assemble_od_matrix(origins: OriginSet, matched, n_cells: int) -> ODMatrix:
    """Count matched (origin, destination) pairs into an OD matrix."""
    matched = list(matched)
    if len(origins) != len(matched):
        raise ValueError(
            f"{len(origins)} origins but {len(matched)} matched destinations"
        )
    out = ODMatrix(n_cells=n_cells)
    for entry, dest in zip(origins, matched):
        out.add(entry.origin, int(dest))
    return out
