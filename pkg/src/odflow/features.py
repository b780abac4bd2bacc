"""Per-cell POI count features.

Each grid cell gets a length-K count vector over the POI vocabulary. Records
outside the grid or with unknown categories are skipped and reported, never
silently dropped.
"""

import csv
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .exceptions import DatasetError, OutOfBoundsError, VocabularyError
from .grid import Grid, cell_of
from .vocab import Vocabulary


@dataclass
class PoiRecord:
    lat: float
    lon: float
    category: str


@dataclass
class AssignmentReport:
    """Bookkeeping from a POI assignment pass."""

    n_records: int = 0
    n_assigned: int = 0
    n_out_of_bounds: int = 0
    n_unknown_category: int = 0
    n_malformed: int = 0
    diagnostics: list = field(default_factory=list)

    def add(self, index: int, reason: str):
        self.diagnostics.append((index, reason))


@dataclass
class CityFeatures:
    """POI count matrix for one city: shape (n_cells, n_categories)."""

    vocabulary: Vocabulary
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2:
            raise ValueError("counts must be a 2-D array of shape (n_cells, K)")
        if self.counts.shape[1] != self.vocabulary.size:
            raise ValueError(
                f"counts has {self.counts.shape[1]} columns, vocabulary has "
                f"{self.vocabulary.size} categories"
            )
        if not np.issubdtype(self.counts.dtype, np.integer):
            raise ValueError("counts must be integers")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")

    @property
    def n_cells(self) -> int:
        return self.counts.shape[0]

    @property
    def n_categories(self) -> int:
        return self.counts.shape[1]

    def vector_of(self, cell: int) -> np.ndarray:
        """Count vector of one cell (a copy, safe to mutate)."""
        if not 0 <= cell < self.n_cells:
            raise ValueError(f"cell id {cell} out of range [0, {self.n_cells})")
        return self.counts[cell].copy()

    def nonzero_names(self, cell: int) -> list:
        """Category names present in ``cell``, in vocabulary order."""
        vec = self.counts[cell]
        return [self.vocabulary.names[k] for k in np.flatnonzero(vec)]

    def to_payload(self) -> dict:
        nonzero_rows = [
            [int(i), [int(c) for c in self.counts[i]]]
            for i in range(self.n_cells)
            if self.counts[i].any()
        ]
        return {
            "n_cells": int(self.n_cells),
            "vocabulary": list(self.vocabulary.names),
            "cells": nonzero_rows,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "CityFeatures":
        vocab = Vocabulary(tuple(payload["vocabulary"]))
        counts = np.zeros((int(payload["n_cells"]), vocab.size), dtype=np.int64)
        for cell, row in payload["cells"]:
            counts[int(cell)] = row
        return cls(vocabulary=vocab, counts=counts)


def assign_pois(
    grid: Grid, records: Iterable[PoiRecord], vocabulary: Vocabulary
) -> tuple[CityFeatures, AssignmentReport]:
    """Count POIs per (cell, category).

    Every accepted record increments exactly one cell/category counter, so
    ``report.n_assigned == features.counts.sum()``.
    """
    counts = np.zeros((grid.n_cells, vocabulary.size), dtype=np.int64)
    report = AssignmentReport()
    for i, rec in enumerate(records):
        report.n_records += 1
        try:
            k = vocabulary.index_of(rec.category)
        except VocabularyError:
            report.n_unknown_category += 1
            report.add(i, f"unknown category {rec.category!r}")
            continue
        try:
            cell = cell_of(grid, rec.lat, rec.lon)
        except OutOfBoundsError:
            report.n_out_of_bounds += 1
            report.add(i, f"point ({rec.lat}, {rec.lon}) outside grid bounds")
            continue
        counts[cell, k] += 1
        report.n_assigned += 1
    return CityFeatures(vocabulary=vocabulary, counts=counts), report


_POI_COLUMNS = ("lat", "lon", "category")


def load_poi_csv(path) -> tuple[list, list]:
    """Read POI records from a CSV with header ``lat,lon,category``.

    Header matching is case-insensitive. Returns (records, diagnostics) where
    diagnostics lists (line_number, reason) for rows that could not be parsed.
    """
    records = []
    diagnostics = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty POI file") from None
        cols = {name.strip().casefold(): i for i, name in enumerate(header)}
        missing = [c for c in _POI_COLUMNS if c not in cols]
        if missing:
            raise DatasetError(f"{path}: POI header missing columns {missing}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            try:
                lat = float(row[cols["lat"]])
                lon = float(row[cols["lon"]])
                category = row[cols["category"]].strip()
            except (ValueError, IndexError):
                diagnostics.append((line_no, f"malformed row: {row!r}"))
                continue
            if not category:
                diagnostics.append((line_no, "blank category"))
                continue
            records.append(PoiRecord(lat=lat, lon=lon, category=category))
    return records, diagnostics


def load_poi_features(
    path, grid: Grid, vocabulary: Vocabulary
) -> tuple[CityFeatures, AssignmentReport]:
    """Read a POI CSV and assign it onto ``grid`` in one step."""
    records, malformed = load_poi_csv(path)
    features, report = assign_pois(grid, records, vocabulary)
    report.n_malformed = len(malformed)
    report.n_records += len(malformed)
    for line_no, reason in malformed:
        report.add(line_no, reason)
    return features, report
