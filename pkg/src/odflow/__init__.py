"""odflow: cross-city origin-destination flow estimation from POI-described trips."""

from .dataset import (
    OdPoiSample,
    OriginEntry,
    OriginSet,
    Trip,
    TripSet,
    build_od_poi_dataset,
    build_origin_set,
    export_jsonl,
    ingest_origins,
    ingest_trips,
    render_instruction,
)
from .exceptions import (
    ConfigError,
    DatasetError,
    EmptyDatasetError,
    InvalidBoundsError,
    MetricError,
    OdflowError,
    OutOfBoundsError,
    PipelineAbortError,
    PredictorError,
    ResponseParseError,
    TransportError,
    VocabularyError,
)
from .config import CityConfig, PipelineConfig, load_config
from .features import AssignmentReport, CityFeatures, PoiRecord, assign_pois, load_poi_features
from .gravity import GravityParams, calibrate_beta, cell_masses, gravity_od_matrix
from .grid import (
    Bounds,
    EARTH_RADIUS_KM,
    Grid,
    build_grid,
    cell_center,
    cell_centers,
    cell_of,
    haversine_km,
    travel_cost_km,
    travel_costs_from,
)
from .loss import LossWeights, combined_cross_entropy, normalize, softmax, weighted_cross_entropy
from .matching import DestinationMatcher, MatchPolicy, assemble_od_matrix, match_destination
from .matrix import ODMatrix
from .metrics import (
    BinnedError,
    MetricReport,
    binned_errors,
    cpc,
    evaluate,
    export_arcs,
    flow_distributions,
    jsd,
    rmse,
    smape,
)
from .pipeline import OdFlowEstimator, PipelineReport, predict_od_matrix
from .predictors import (
    EndpointConfig,
    EndpointPredictor,
    FrequencyPredictor,
    Prediction,
    parse_llm_response,
)
from .synth import ScenarioArtifacts, ScenarioSpec, cell_support, generate_scenario
from .vocab import DEFAULT_CATEGORIES, Vocabulary

__version__ = "0.1.0"

__all__ = [
    "AssignmentReport",
    "BinnedError",
    "Bounds",
    "CityConfig",
    "CityFeatures",
    "ConfigError",
    "DEFAULT_CATEGORIES",
    "DatasetError",
    "DestinationMatcher",
    "EARTH_RADIUS_KM",
    "EmptyDatasetError",
    "EndpointConfig",
    "EndpointPredictor",
    "FrequencyPredictor",
    "GravityParams",
    "Grid",
    "InvalidBoundsError",
    "LossWeights",
    "MatchPolicy",
    "MetricError",
    "MetricReport",
    "ODMatrix",
    "OdFlowEstimator",
    "OdPoiSample",
    "OdflowError",
    "OriginEntry",
    "OriginSet",
    "OutOfBoundsError",
    "PipelineAbortError",
    "PipelineConfig",
    "PipelineReport",
    "PoiRecord",
    "Prediction",
    "PredictorError",
    "ResponseParseError",
    "ScenarioArtifacts",
    "ScenarioSpec",
    "TransportError",
    "Trip",
    "TripSet",
    "Vocabulary",
    "VocabularyError",
    "assemble_od_matrix",
    "assign_pois",
    "binned_errors",
    "build_grid",
    "build_od_poi_dataset",
    "build_origin_set",
    "calibrate_beta",
    "cell_center",
    "cell_centers",
    "cell_masses",
    "cell_of",
    "cell_support",
    "combined_cross_entropy",
    "cpc",
    "evaluate",
    "export_arcs",
    "export_jsonl",
    "flow_distributions",
    "generate_scenario",
    "gravity_od_matrix",
    "haversine_km",
    "ingest_origins",
    "ingest_trips",
    "jsd",
    "load_config",
    "load_poi_features",
    "match_destination",
    "normalize",
    "parse_llm_response",
    "predict_od_matrix",
    "render_instruction",
    "rmse",
    "smape",
    "softmax",
    "travel_cost_km",
    "travel_costs_from",
    "weighted_cross_entropy",
]
