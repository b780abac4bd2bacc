"""Destination predictors: (u_hat, c_hat) = f(origin features, start time).

Three implementations share the same call shape:

* :class:`FrequencyPredictor` — an offline lookup table keyed by the origin's
  nonzero-category signature and the hour of day, with bucket-wide and global
  fallbacks. Deterministic, trains in one pass, persists as versioned JSON.
* :class:`EndpointPredictor` — renders the instruction/input prompt, posts it
  to an external inference endpoint over the wire protocol, and parses the
  textual response.
* the gravity baseline lives in :mod:`odflow.gravity` (it produces a whole
  matrix rather than per-origin predictions).
"""

import json
import logging
import re
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np
import requests
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dataset import OdPoiSample, render_input_text, render_instruction_text
from .exceptions import (
    EmptyDatasetError,
    PredictorError,
    ResponseParseError,
    TransportError,
    VocabularyError,
)
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

FREQUENCY_TABLE_FORMAT_VERSION = 1


@dataclass
class Prediction:
    """Predicted destination description: POI scores plus travel cost (km)."""

    poi_scores: np.ndarray
    cost_km: float

    def __post_init__(self):
        self.poi_scores = np.asarray(self.poi_scores, dtype=np.float64)
        if self.poi_scores.ndim != 1:
            raise ValueError("poi_scores must be a 1-D vector")
        if not np.all(np.isfinite(self.poi_scores)):
            raise ValueError("poi_scores must be finite")
        if (self.poi_scores < 0).any():
            raise ValueError("poi_scores must be non-negative")
        self.cost_km = float(self.cost_km)
        if not (np.isfinite(self.cost_km) and self.cost_km >= 0):
            raise ValueError(f"cost_km must be finite and >= 0, got {self.cost_km}")


def signature_of(features_vec: np.ndarray) -> tuple:
    """Origin signature: sorted indices of the nonzero categories."""
    return tuple(int(k) for k in np.flatnonzero(np.asarray(features_vec)))


def hour_bucket(t: datetime) -> int:
    return t.hour


class _MeanAccumulator:
    __slots__ = ("vec_sum", "cost_sum", "n")

    def __init__(self, n_categories: int):
        self.vec_sum = np.zeros(n_categories, dtype=np.float64)
        self.cost_sum = 0.0
        self.n = 0

    def add(self, vec: np.ndarray, cost: float):
        self.vec_sum += vec
        self.cost_sum += cost
        self.n += 1

    def mean(self) -> tuple:
        return self.vec_sum / self.n, self.cost_sum / self.n, self.n


class FrequencyPredictor(BaseEstimator):
    """Lookup-table predictor over (origin signature, hour-of-day) keys.

    For each key observed in training, stores the exact arithmetic mean of
    the destination feature vectors and of the travel costs. Unseen keys fall
    back to the hour bucket's mean, then to the global mean.
    """

    def fit(self, samples: Sequence[OdPoiSample]) -> "FrequencyPredictor":
        samples = list(samples)
        if not samples:
            raise EmptyDatasetError("cannot fit a frequency table on zero samples")
        n_categories = len(samples[0].origin_features)
        keyed: dict = {}
        buckets: dict = {}
        global_acc = _MeanAccumulator(n_categories)
        for s in samples:
            vec = np.asarray(s.dest_features, dtype=np.float64)
            if vec.shape != (n_categories,):
                raise ValueError(
                    f"inconsistent feature length {vec.shape} vs ({n_categories},)"
                )
            key = (signature_of(s.origin_features), hour_bucket(s.start_time))
            for table, k in ((keyed, key), (buckets, key[1])):
                if k not in table:
                    table[k] = _MeanAccumulator(n_categories)
                table[k].add(vec, s.cost_km)
            global_acc.add(vec, s.cost_km)
        self.n_categories_ = n_categories
        self.n_samples_ = len(samples)
        self.rows_ = {k: acc.mean() for k, acc in keyed.items()}
        self.bucket_rows_ = {b: acc.mean() for b, acc in buckets.items()}
        self.global_row_ = global_acc.mean()
        return self

    def _check_fitted(self):
        if not hasattr(self, "global_row_"):
            raise NotFittedError(
                "this FrequencyPredictor is not fitted yet; call fit() first"
            )

    def predict(self, origin_features: np.ndarray, start_time: datetime) -> Prediction:
        self._check_fitted()
        key = (signature_of(origin_features), hour_bucket(start_time))
        row = self.rows_.get(key)
        if row is None:
            row = self.bucket_rows_.get(key[1])
        if row is None:
            row = self.global_row_
        vec, cost, _ = row
        return Prediction(poi_scores=vec.copy(), cost_km=cost)

    def predict_many(self, queries: Iterable[tuple]) -> list:
        """Predict for (features, time) pairs; failures become exceptions in place."""
        out = []
        for features_vec, t in queries:
            try:
                out.append(self.predict(features_vec, t))
            except PredictorError as exc:
                out.append(exc)
        return out

    # -- persistence ---------------------------------------------------

    def to_payload(self) -> dict:
        self._check_fitted()
        rows = [
            {
                "signature": list(sig),
                "hour": hour,
                "mean_features": [float(v) for v in vec],
                "mean_cost_km": float(cost),
                "n": n,
            }
            for (sig, hour), (vec, cost, n) in sorted(self.rows_.items())
        ]
        bucket_rows = [
            {
                "hour": hour,
                "mean_features": [float(v) for v in vec],
                "mean_cost_km": float(cost),
                "n": n,
            }
            for hour, (vec, cost, n) in sorted(self.bucket_rows_.items())
        ]
        g_vec, g_cost, g_n = self.global_row_
        return {
            "format_version": FREQUENCY_TABLE_FORMAT_VERSION,
            "kind": "frequency_table",
            "n_categories": self.n_categories_,
            "n_samples": self.n_samples_,
            "rows": rows,
            "bucket_rows": bucket_rows,
            "global_row": {
                "mean_features": [float(v) for v in g_vec],
                "mean_cost_km": float(g_cost),
                "n": g_n,
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "FrequencyPredictor":
        if payload.get("kind") != "frequency_table":
            raise ValueError(f"not a frequency table payload: kind={payload.get('kind')!r}")
        if payload.get("format_version") != FREQUENCY_TABLE_FORMAT_VERSION:
            raise ValueError(
                f"unsupported frequency table version {payload.get('format_version')!r}"
            )
        model = cls()
        model.n_categories_ = int(payload["n_categories"])
        model.n_samples_ = int(payload["n_samples"])
        model.rows_ = {
            (tuple(r["signature"]), int(r["hour"])): (
                np.asarray(r["mean_features"], dtype=np.float64),
                float(r["mean_cost_km"]),
                int(r["n"]),
            )
            for r in payload["rows"]
        }
        model.bucket_rows_ = {
            int(r["hour"]): (
                np.asarray(r["mean_features"], dtype=np.float64),
                float(r["mean_cost_km"]),
                int(r["n"]),
            )
            for r in payload["bucket_rows"]
        }
        g = payload["global_row"]
        model.global_row_ = (
            np.asarray(g["mean_features"], dtype=np.float64),
            float(g["mean_cost_km"]),
            int(g["n"]),
        )
        return model

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_payload(), fh, sort_keys=True, separators=(",", ": "), indent=1)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "FrequencyPredictor":
        with open(path, encoding="utf-8") as fh:
            return cls.from_payload(json.load(fh))


# -- response parsing ------------------------------------------------------

_POIS_FIELD_RE = re.compile(r'"?POIs"?\s*:\s*\[(?P<body>[^\]]*)\]', re.IGNORECASE)
_COST_FIELD_RE = re.compile(r'"?traveling cost"?\s*:\s*\[(?P<body>[^\]]*)\]', re.IGNORECASE)
_COST_VALUE_RE = re.compile(
    r"^(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(?:kilometers|km)?$",
    re.IGNORECASE,
)


def _parse_cost_text(text: str, raw: str) -> float:
    m = _COST_VALUE_RE.match(text.strip().strip('"').strip())
    if not m:
        raise ResponseParseError(f"cannot parse travel cost from {text!r}", raw=raw)
    cost = float(m.group("num"))
    if not (np.isfinite(cost) and cost >= 0):
        raise ResponseParseError(f"travel cost must be >= 0, got {cost}", raw=raw)
    return cost


def _split_names(body: str) -> list:
    names = []
    for part in body.split(","):
        name = part.strip().strip('"').strip("'").strip()
        if name:
            names.append(name)
    return names


def _indicator(names: Iterable[str], vocabulary: Vocabulary, raw: str) -> np.ndarray:
    vec = np.zeros(vocabulary.size, dtype=np.float64)
    for name in names:
        try:
            vec[vocabulary.index_of(name)] = 1.0
        except VocabularyError:
            raise ResponseParseError(f"unknown POI name: {name!r}", raw=raw) from None
    return vec


def _from_json_document(doc, vocabulary: Vocabulary, raw: str) -> Prediction:
    if not isinstance(doc, dict):
        raise ResponseParseError("JSON response must be an object", raw=raw)
    by_key = {str(k).strip().casefold(): v for k, v in doc.items()}
    if "pois" not in by_key:
        raise ResponseParseError('missing "POIs" field', raw=raw)
    if "traveling cost" not in by_key:
        raise ResponseParseError('missing "traveling cost" field', raw=raw)
    pois_val = by_key["pois"]
    if isinstance(pois_val, str):
        names = _split_names(pois_val)
    elif isinstance(pois_val, list):
        if not all(isinstance(n, str) for n in pois_val):
            raise ResponseParseError('"POIs" list must contain strings', raw=raw)
        names = [n.strip() for n in pois_val if n.strip()]
    else:
        raise ResponseParseError('"POIs" must be a list of names', raw=raw)
    cost_val = by_key["traveling cost"]
    if isinstance(cost_val, list):
        if len(cost_val) != 1:
            raise ResponseParseError(
                '"traveling cost" list must hold exactly one value', raw=raw
            )
        cost_val = cost_val[0]
    if isinstance(cost_val, bool):
        raise ResponseParseError('"traveling cost" must be a number', raw=raw)
    if isinstance(cost_val, (int, float)):
        cost = float(cost_val)
        if not (np.isfinite(cost) and cost >= 0):
            raise ResponseParseError(f"travel cost must be >= 0, got {cost}", raw=raw)
    elif isinstance(cost_val, str):
        cost = _parse_cost_text(cost_val, raw)
    else:
        raise ResponseParseError('"traveling cost" must be a number', raw=raw)
    return Prediction(poi_scores=_indicator(names, vocabulary, raw), cost_km=cost)


def parse_llm_response(text: str, vocabulary: Vocabulary) -> Prediction:
    """Parse a model response into a Prediction.

    Accepts the plain bracketed template::

        "POIs": [Hotel, Shopping], "traveling cost": [1.3 kilometers]

    and strict-JSON equivalents (object with the same two fields). POI names
    are matched case-insensitively against the vocabulary and become an
    indicator vector; the cost is decimal kilometres. Anything else raises
    :class:`ResponseParseError` carrying the raw text.
    """
    if not isinstance(text, str):
        raise ResponseParseError(f"response must be text, got {type(text).__name__}", raw=str(text))
    try:
        doc = json.loads(text)
    except ValueError:
        doc = None
    if isinstance(doc, dict):
        return _from_json_document(doc, vocabulary, text)
    pois_m = _POIS_FIELD_RE.search(text)
    if not pois_m:
        raise ResponseParseError('missing "POIs" field', raw=text)
    cost_m = _COST_FIELD_RE.search(text)
    if not cost_m:
        raise ResponseParseError('missing "traveling cost" field', raw=text)
    names = _split_names(pois_m.group("body"))
    cost = _parse_cost_text(cost_m.group("body"), text)
    return Prediction(poi_scores=_indicator(names, vocabulary, text), cost_km=cost)


# -- endpoint client -------------------------------------------------------


@dataclass
class EndpointConfig:
    base_url: str
    timeout_ms: int = 10000
    max_in_flight: int = 4
    retries: int = 2

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url must be non-empty")
        if self.timeout_ms <= 0:
            raise ValueError(f"timeout_ms must be positive, got {self.timeout_ms}")
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")


class EndpointPredictor(BaseEstimator):
    """Client for an external inference endpoint speaking the wire protocol.

    Each query renders the instruction/input prompt, POSTs
    ``{"id", "instruction", "input"}`` to ``{base_url}/predict``, and parses
    the returned ``output`` text. Transport failures (connection errors,
    timeouts, non-200 statuses, malformed envelopes) are retried
    ``config.retries`` times and then raised as :class:`TransportError`;
    grammar violations in an otherwise well-delivered response raise
    :class:`ResponseParseError` immediately (retrying cannot fix those).
    """

    def __init__(self, config: EndpointConfig, city_name: str, vocabulary: Vocabulary):
        self.config = config
        self.city_name = city_name
        self.vocabulary = vocabulary

    @property
    def _url(self) -> str:
        return self.config.base_url.rstrip("/") + "/predict"

    def _post_once(self, body: dict) -> str:
        try:
            resp = requests.post(
                self._url, json=body, timeout=self.config.timeout_ms / 1000.0
            )
        except requests.RequestException as exc:
            raise TransportError(f"request to {self._url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(
                f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            payload = resp.json()
        except ValueError:
            raise TransportError("endpoint response is not valid JSON") from None
        if not isinstance(payload, dict) or "output" not in payload:
            raise TransportError('endpoint response missing "output" field')
        if payload.get("id") != body["id"]:
            raise TransportError(
                f"response id {payload.get('id')!r} does not match request id {body['id']!r}"
            )
        output = payload["output"]
        if not isinstance(output, str):
            raise TransportError('"output" field must be a string')
        return output

    def predict(self, origin_features: np.ndarray, start_time: datetime) -> Prediction:
        body = {
            "id": uuid.uuid4().hex,
            "instruction": render_instruction_text(self.city_name, self.vocabulary),
            "input": render_input_text(origin_features, start_time, self.vocabulary),
        }
        last_error: TransportError | None = None
        for attempt in range(self.config.retries + 1):
            try:
                output = self._post_once(body)
            except TransportError as exc:
                last_error = exc
                if attempt < self.config.retries:
                    logger.debug("retrying after transport error: %s", exc)
                continue
            return parse_llm_response(output, self.vocabulary)
        assert last_error is not None
        raise last_error

    def predict_many(self, queries: Sequence[tuple]) -> list:
        """Concurrent predictions, bounded by max_in_flight, results in order.

        Failed queries yield their exception object in place of a Prediction
        so the caller can apply its error budget positionally.
        """
        queries = list(queries)

        def run_one(query):
            features_vec, t = query
            try:
                return self.predict(features_vec, t)
            except PredictorError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            return list(pool.map(run_one, queries))
