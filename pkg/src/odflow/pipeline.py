"""End-to-end OD flow estimation: predict per origin, match, count.

The :class:`OdFlowEstimator` wraps the whole transfer pipeline in a familiar
fit/predict shape: fit on the source city's trips and features, predict an OD
matrix for a target city's origin set. The functional core,
:func:`predict_od_matrix`, is usable on its own.
"""

import logging
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dataset import OriginSet, TripSet, build_od_poi_dataset
from .exceptions import PipelineAbortError, PredictorError
from .features import CityFeatures
from .gravity import GravityParams, cell_masses, gravity_od_matrix
from .grid import Grid
from .loss import LossWeights
from .matching import DestinationMatcher, MatchPolicy, assemble_od_matrix
from .matrix import ODMatrix
from .predictors import EndpointConfig, EndpointPredictor, FrequencyPredictor

logger = logging.getLogger(__name__)

PREDICTOR_KINDS = ("frequency", "gravity", "endpoint")


@dataclass
class PipelineReport:
    """Outcome bookkeeping for one predict-and-match run."""

    n_origins: int = 0
    n_predicted: int = 0
    n_failed: int = 0
    failures: list = field(default_factory=list)  # (index, message)


def predict_od_matrix(
    grid: Grid,
    features: CityFeatures,
    predictor,
    origins: OriginSet,
    weights: LossWeights | None = None,
    policy: MatchPolicy | None = None,
    error_budget: int = 0,
) -> tuple[ODMatrix, PipelineReport]:
    """Predict a destination for every origin entry and count the flows.

    Prediction failures consume the error budget; once more failures occur
    than the budget allows, the run aborts with :class:`PipelineAbortError`
    carrying the index of the offending entry. Entries that failed within
    budget are skipped, so the matrix total equals the number of successful
    entries.
    """
    if error_budget < 0:
        raise ValueError(f"error_budget must be >= 0, got {error_budget}")
    matcher = DestinationMatcher(grid, features, weights=weights, policy=policy)
    report = PipelineReport(n_origins=len(origins))
    entries = list(origins)
    queries = [(features.vector_of(e.origin), e.start_time) for e in entries]
    if hasattr(predictor, "predict_many"):
        outcomes = predictor.predict_many(queries)
    else:
        outcomes = []
        for features_vec, t in queries:
            try:
                outcomes.append(predictor.predict(features_vec, t))
            except PredictorError as exc:
                outcomes.append(exc)
    kept_origins = []
    matched = []
    for index, (entry, outcome) in enumerate(zip(entries, outcomes)):
        if isinstance(outcome, PredictorError):
            report.n_failed += 1
            report.failures.append((index, str(outcome)))
            logger.warning("prediction %d failed: %s", index, outcome)
            if report.n_failed > error_budget:
                raise PipelineAbortError(
                    f"error budget ({error_budget}) exceeded at entry {index}: {outcome}",
                    index=index,
                    cause=outcome,
                )
            continue
        kept_origins.append(entry)
        matched.append(matcher.match(entry.origin, outcome))
        report.n_predicted += 1
    matrix = assemble_od_matrix(OriginSet(entries=kept_origins), matched, grid.n_cells)
    return matrix, report


class OdFlowEstimator(BaseEstimator):
    """Cross-city OD flow estimator with a fit/predict interface.

    Parameters mirror the pipeline configuration: predictor kind, loss
    weights (alpha and optional per-category weights), match policy knobs,
    the gravity exponent, and the endpoint client settings. ``fit`` trains on
    the source city; ``predict`` produces an integer OD matrix for a target
    city's origin set. After ``predict``, ``report_`` holds the run's
    bookkeeping.
    """

    def __init__(
        self,
        predictor: str = "frequency",
        alpha: float = 1.0,
        weights=None,
        cost_slack: float = 0.0,
        match_poi_only: bool = True,
        beta: float = 2.0,
        error_budget: int = 0,
        endpoint_config: EndpointConfig | None = None,
        city_name: str = "the target city",
    ):
        self.predictor = predictor
        self.alpha = alpha
        self.weights = weights
        self.cost_slack = cost_slack
        self.match_poi_only = match_poi_only
        self.beta = beta
        self.error_budget = error_budget
        self.endpoint_config = endpoint_config
        self.city_name = city_name

    def _loss_weights(self, n_categories: int) -> LossWeights:
        if self.weights is None:
            return LossWeights.unit(n_categories, alpha=self.alpha)
        return LossWeights(w=self.weights, alpha=self.alpha)

    def fit(self, trips: TripSet, features: CityFeatures) -> "OdFlowEstimator":
        if self.predictor not in PREDICTOR_KINDS:
            raise ValueError(
                f"predictor must be one of {PREDICTOR_KINDS}, got {self.predictor!r}"
            )
        if self.predictor == "frequency":
            samples = build_od_poi_dataset(trips, features)
            self.predictor_ = FrequencyPredictor().fit(samples)
        elif self.predictor == "endpoint":
            if self.endpoint_config is None:
                raise ValueError("endpoint predictor requires endpoint_config")
            self.predictor_ = None  # built per-predict with the target vocabulary
        else:
            self.predictor_ = None
        self.n_categories_ = features.n_categories
        self.n_source_trips_ = len(trips)
        return self

    def predict(
        self, origins: OriginSet, grid: Grid, features: CityFeatures
    ) -> ODMatrix:
        if not hasattr(self, "n_categories_"):
            raise NotFittedError(
                "this OdFlowEstimator is not fitted yet; call fit() first"
            )
        if self.predictor == "gravity":
            params = GravityParams(beta=self.beta)
            masses = cell_masses(features, params)
            matrix = gravity_od_matrix(masses, grid, params, len(origins))
            self.report_ = PipelineReport(
                n_origins=len(origins), n_predicted=len(origins)
            )
            return matrix
        if self.predictor == "endpoint":
            predictor = EndpointPredictor(
                self.endpoint_config, self.city_name, features.vocabulary
            )
        else:
            predictor = self.predictor_
        matrix, report = predict_od_matrix(
            grid,
            features,
            predictor,
            origins,
            weights=self._loss_weights(features.n_categories),
            policy=MatchPolicy(
                cost_slack=self.cost_slack, match_poi_only=self.match_poi_only
            ),
            error_budget=self.error_budget,
        )
        self.report_ = report
        return matrix
