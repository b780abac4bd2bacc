"""Declarative pipeline configuration (YAML) with validation and digests."""

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .exceptions import ConfigError
from .grid import Bounds
from .predictors import EndpointConfig
from .vocab import Vocabulary

ENDPOINT_URL_ENV = "ODFLOW_ENDPOINT_URL"

PREDICTOR_KINDS = ("frequency", "gravity", "endpoint")


@dataclass
class CityConfig:
    name: str
    bounds: Bounds
    cell_size_m: float
    pois: Path
    trips: Path | None = None
    origins: Path | None = None


@dataclass
class PipelineConfig:
    path: Path
    seed: int
    output_dir: Path
    vocabulary_path: Path | None
    source: CityConfig
    target: CityConfig
    predictor_kind: str
    gravity_beta: float
    gravity_calibrate: bool
    endpoint: EndpointConfig
    alpha: float
    weights: list | None
    alpha_sweep: list
    cost_slack: float
    poi_only: bool
    error_budget: int
    n_bins: int
    top_k_arcs: int

    def load_vocabulary(self) -> Vocabulary:
        if self.vocabulary_path is None:
            return Vocabulary.default()
        require_file(self.vocabulary_path, "vocabulary")
        return Vocabulary.from_file(self.vocabulary_path)


def require_file(path: Path, key: str) -> Path:
    if not Path(path).is_file():
        raise ConfigError(f"{key}: file not found: {path}")
    return Path(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _parse_bounds(raw, context: str) -> Bounds:
    if not isinstance(raw, dict):
        raise ConfigError(f"{context}bounds must be a mapping")
    try:
        return Bounds(
            min_lat=float(raw["min_lat"]),
            min_lon=float(raw["min_lon"]),
            max_lat=float(raw["max_lat"]),
            max_lon=float(raw["max_lon"]),
        )
    except KeyError as exc:
        raise ConfigError(f"{context}bounds missing {exc.args[0]}") from None
    except Exception as exc:
        raise ConfigError(f"{context}bounds invalid: {exc}") from exc


def _parse_city(raw, base: Path, context: str, needs_trips: bool) -> CityConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"missing or invalid config section: {context.rstrip('.')}")
    name = raw.get("name")
    if not name or not isinstance(name, str):
        raise ConfigError(f"{context}name must be a non-empty string")
    cell_size = raw.get("cell_size_m")
    if not isinstance(cell_size, (int, float)) or cell_size <= 0:
        raise ConfigError(f"{context}cell_size_m must be a positive number")
    pois = raw.get("pois")
    if not pois:
        raise ConfigError(f"{context}pois path is required")
    trips = raw.get("trips")
    origins = raw.get("origins")
    if needs_trips and not trips:
        raise ConfigError(f"{context}trips path is required for the source city")
    if not needs_trips and not origins:
        raise ConfigError(f"{context}origins path is required for the target city")
    return CityConfig(
        name=name,
        bounds=_parse_bounds(raw.get("bounds"), context),
        cell_size_m=float(cell_size),
        pois=base / pois,
        trips=(base / trips) if trips else None,
        origins=(base / origins) if origins else None,
    )


def load_config(path) -> PipelineConfig:
    """Load and validate a pipeline config; relative paths resolve against it.

    The ODFLOW_ENDPOINT_URL environment variable, when set, overrides the
    configured endpoint base URL.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    base = path.parent

    source = _parse_city(raw.get("source"), base, "source.", needs_trips=True)
    target = _parse_city(raw.get("target"), base, "target.", needs_trips=False)
    if source.cell_size_m != target.cell_size_m:
        raise ConfigError(
            "cell_size_m must be identical for both cities "
            f"({source.cell_size_m} vs {target.cell_size_m})"
        )

    predictor = raw.get("predictor") or {}
    kind = predictor.get("kind", "frequency")
    if kind not in PREDICTOR_KINDS:
        raise ConfigError(f"predictor.kind must be one of {PREDICTOR_KINDS}, got {kind!r}")
    gravity = predictor.get("gravity") or {}
    beta = gravity.get("beta", 2.0)
    if not isinstance(beta, (int, float)):
        raise ConfigError("predictor.gravity.beta must be a number")
    calibrate = bool(gravity.get("calibrate_beta", False))

    endpoint_raw = predictor.get("endpoint") or {}
    base_url = os.environ.get(ENDPOINT_URL_ENV) or endpoint_raw.get(
        "base_url", "http://127.0.0.1:8947"
    )
    try:
        endpoint = EndpointConfig(
            base_url=base_url,
            timeout_ms=int(endpoint_raw.get("timeout_ms", 10000)),
            max_in_flight=int(endpoint_raw.get("max_in_flight", 4)),
            retries=int(endpoint_raw.get("retries", 2)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"predictor.endpoint invalid: {exc}") from exc

    loss = raw.get("loss") or {}
    alpha = loss.get("alpha", 1.0)
    if not isinstance(alpha, (int, float)) or alpha <= 0:
        raise ConfigError("loss.alpha must be a positive number")
    weights = loss.get("weights")
    if weights is not None:
        if not isinstance(weights, list) or not all(
            isinstance(w, (int, float)) and w > 0 for w in weights
        ):
            raise ConfigError("loss.weights must be a list of positive numbers")
        weights = [float(w) for w in weights]
    sweep = loss.get("alpha_sweep", [0.25, 0.5, 1.0, 2.0, 4.0])
    if not isinstance(sweep, list) or not sweep or not all(
        isinstance(a, (int, float)) and a > 0 for a in sweep
    ):
        raise ConfigError("loss.alpha_sweep must be a non-empty list of positive numbers")

    match = raw.get("match") or {}
    cost_slack = match.get("cost_slack", 0.0)
    if not isinstance(cost_slack, (int, float)) or cost_slack < 0:
        raise ConfigError("match.cost_slack must be a number >= 0")
    poi_only = bool(match.get("poi_only", True))

    error_budget = raw.get("error_budget", 0)
    if not isinstance(error_budget, int) or error_budget < 0:
        raise ConfigError("error_budget must be an integer >= 0")

    eval_raw = raw.get("eval") or {}
    n_bins = eval_raw.get("n_bins", 4)
    if not isinstance(n_bins, int) or n_bins < 1:
        raise ConfigError("eval.n_bins must be an integer >= 1")
    top_k = eval_raw.get("top_k_arcs", 20)
    if not isinstance(top_k, int) or top_k < 0:
        raise ConfigError("eval.top_k_arcs must be an integer >= 0")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    vocab = raw.get("vocabulary")
    out_dir = raw.get("output_dir", "out")

    return PipelineConfig(
        path=path,
        seed=seed,
        output_dir=base / out_dir,
        vocabulary_path=(base / vocab) if vocab else None,
        source=source,
        target=target,
        predictor_kind=kind,
        gravity_beta=float(beta),
        gravity_calibrate=calibrate,
        endpoint=endpoint,
        alpha=float(alpha),
        weights=weights,
        alpha_sweep=[float(a) for a in sweep],
        cost_slack=float(cost_slack),
        poi_only=poi_only,
        error_budget=error_budget,
        n_bins=n_bins,
        top_k_arcs=top_k,
    )
