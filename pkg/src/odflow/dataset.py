"""Trip ingestion and instruction-dataset construction.

Raw trips arrive as CSV rows ``o_lat,o_lon,d_lat,d_lon,start_time``; origin
sets as ``o_lat,o_lon,start_time``. Both endpoints are snapped to grid cells,
the travel cost is the haversine distance between the *raw* endpoints rounded
to 3 decimals, and rows that fall outside the grid or fail to parse are
skipped with per-row diagnostics.

Each trip becomes one instruction/input/output triple describing the start
cell's POIs and the time, with the destination cell's POIs and the cost as
the expected answer. The rendered strings are byte-stable: POI names appear
in vocabulary order, joined by ", ", presence only (counts don't repeat
names); times are 24-hour HH:MM; costs carry one decimal.
"""

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DatasetError, EmptyDatasetError, OutOfBoundsError
from .features import CityFeatures
from .grid import Grid, cell_of, haversine_km
from .vocab import Vocabulary

INSTRUCTION_TEMPLATE = (
    "Given the starting place and time of a taxi trajectory in {city}, "
    "predict the most likely destination and how far it is from the starting point.\n"
    'Please use the provided "Candidate POIs" list to describe the starting place '
    "and destination.\n"
    "Candidate POIs: [{pois}]"
)

INPUT_TEMPLATE = "Starting place: [{origin_pois}], Starting time: [{time}]"

OUTPUT_TEMPLATE = '"POIs": [{dest_pois}], "traveling cost": [{cost} kilometers]'

COST_DECIMALS = 3


@dataclass
class Trip:
    origin: int
    start_time: datetime
    destination: int
    cost_km: float


@dataclass
class TripSet:
    trips: list

    def __len__(self) -> int:
        return len(self.trips)

    def __iter__(self):
        return iter(self.trips)


@dataclass
class OriginEntry:
    origin: int
    start_time: datetime


@dataclass
class OriginSet:
    entries: list

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass
class IngestReport:
    n_rows: int = 0
    n_accepted: int = 0
    n_out_of_bounds: int = 0
    n_malformed: int = 0
    diagnostics: list = field(default_factory=list)

    def add(self, line_no: int, reason: str):
        self.diagnostics.append((line_no, reason))


@dataclass
class OdPoiSample:
    """One supervised example: origin description -> destination description."""

    origin_features: np.ndarray
    start_time: datetime
    dest_features: np.ndarray
    cost_km: float


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; a trailing 'Z' is read as UTC."""
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    return datetime.fromisoformat(cleaned)


def _read_rows(path, required: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        cols = {name.strip().casefold(): i for i, name in enumerate(header)}
        missing = [c for c in required if c not in cols]
        if missing:
            raise DatasetError(f"{path}: header missing columns {missing}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            yield line_no, row, cols


def ingest_trips(path, grid: Grid) -> tuple[TripSet, IngestReport]:
    """Read trips from ``o_lat,o_lon,d_lat,d_lon,start_time`` CSV.

    The travel cost is computed from the raw endpoints (not cell centres)
    and rounded to 3 decimals. Raises :class:`EmptyDatasetError` if no row
    survives.
    """
    trips = []
    report = IngestReport()
    for line_no, row, cols in _read_rows(
        path, ("o_lat", "o_lon", "d_lat", "d_lon", "start_time")
    ):
        report.n_rows += 1
        try:
            o_lat = float(row[cols["o_lat"]])
            o_lon = float(row[cols["o_lon"]])
            d_lat = float(row[cols["d_lat"]])
            d_lon = float(row[cols["d_lon"]])
            start = parse_timestamp(row[cols["start_time"]])
        except (ValueError, IndexError) as exc:
            report.n_malformed += 1
            report.add(line_no, f"malformed row: {exc}")
            continue
        try:
            origin = cell_of(grid, o_lat, o_lon)
            dest = cell_of(grid, d_lat, d_lon)
        except OutOfBoundsError:
            report.n_out_of_bounds += 1
            report.add(line_no, "endpoint outside grid bounds")
            continue
        cost = round(haversine_km(o_lat, o_lon, d_lat, d_lon), COST_DECIMALS)
        trips.append(Trip(origin=origin, start_time=start, destination=dest, cost_km=cost))
        report.n_accepted += 1
    if not trips:
        raise EmptyDatasetError(f"{path}: no usable trips (of {report.n_rows} rows)")
    return TripSet(trips=trips), report


def ingest_origins(path, grid: Grid) -> tuple[OriginSet, IngestReport]:
    """Read origin entries from ``o_lat,o_lon,start_time`` CSV."""
    entries = []
    report = IngestReport()
    for line_no, row, cols in _read_rows(path, ("o_lat", "o_lon", "start_time")):
        report.n_rows += 1
        try:
            o_lat = float(row[cols["o_lat"]])
            o_lon = float(row[cols["o_lon"]])
            start = parse_timestamp(row[cols["start_time"]])
        except (ValueError, IndexError) as exc:
            report.n_malformed += 1
            report.add(line_no, f"malformed row: {exc}")
            continue
        try:
            origin = cell_of(grid, o_lat, o_lon)
        except OutOfBoundsError:
            report.n_out_of_bounds += 1
            report.add(line_no, "origin outside grid bounds")
            continue
        entries.append(OriginEntry(origin=origin, start_time=start))
        report.n_accepted += 1
    if not entries:
        raise EmptyDatasetError(f"{path}: no usable origins (of {report.n_rows} rows)")
    return OriginSet(entries=entries), report


def build_origin_set(trips: TripSet) -> OriginSet:
    """Origin entries of every trip, in trip order."""
    return OriginSet(
        entries=[OriginEntry(origin=t.origin, start_time=t.start_time) for t in trips]
    )


def build_od_poi_dataset(trips: TripSet, features: CityFeatures) -> list:
    """Pair each trip with its origin/destination POI count vectors."""
    samples = []
    for t in trips:
        samples.append(
            OdPoiSample(
                origin_features=features.vector_of(t.origin),
                start_time=t.start_time,
                dest_features=features.vector_of(t.destination),
                cost_km=t.cost_km,
            )
        )
    return samples


def poi_list_text(features_vec: np.ndarray, vocabulary: Vocabulary) -> str:
    """Names of present categories, vocabulary order, joined by ', '."""
    vec = np.asarray(features_vec)
    if vec.shape != (vocabulary.size,):
        raise ValueError(
            f"feature vector has shape {vec.shape}, expected ({vocabulary.size},)"
        )
    return ", ".join(vocabulary.names[k] for k in np.flatnonzero(vec))


def format_time(t: datetime) -> str:
    return f"{t.hour:02d}:{t.minute:02d}"


def format_cost(cost_km: float) -> str:
    return f"{cost_km:.1f}"


def render_instruction_text(city: str, vocabulary: Vocabulary) -> str:
    return INSTRUCTION_TEMPLATE.format(city=city, pois=", ".join(vocabulary.names))


def render_input_text(
    origin_features: np.ndarray, start_time: datetime, vocabulary: Vocabulary
) -> str:
    return INPUT_TEMPLATE.format(
        origin_pois=poi_list_text(origin_features, vocabulary),
        time=format_time(start_time),
    )


def render_output_text(
    dest_features: np.ndarray, cost_km: float, vocabulary: Vocabulary
) -> str:
    return OUTPUT_TEMPLATE.format(
        dest_pois=poi_list_text(dest_features, vocabulary),
        cost=format_cost(cost_km),
    )


def render_instruction(
    sample: OdPoiSample, city: str, vocabulary: Vocabulary
) -> tuple[str, str, str]:
    """Render one sample to its (instruction, input, output) strings."""
    return (
        render_instruction_text(city, vocabulary),
        render_input_text(sample.origin_features, sample.start_time, vocabulary),
        render_output_text(sample.dest_features, sample.cost_km, vocabulary),
    )


def export_jsonl(
    samples: Iterable[OdPoiSample], city: str, vocabulary: Vocabulary, path
) -> int:
    """Write samples as JSON lines with keys instruction/input/output.

    Returns the number of lines written; zero samples is an error.
    """
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            instruction, input_text, output_text = render_instruction(
                sample, city, vocabulary
            )
            fh.write(
                json.dumps(
                    {
                        "instruction": instruction,
                        "input": input_text,
                        "output": output_text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            n += 1
    if n == 0:
        raise EmptyDatasetError("no samples to export")
    return n
