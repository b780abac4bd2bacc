"""Sparse integer OD matrix with CSV + JSON-sidecar persistence."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DatasetError


@dataclass
class ODMatrix:
    """N x N matrix of non-negative integer flows, stored sparse.

    ``flows`` maps (origin_cell, dest_cell) to a positive count; absent keys
    are zero. Zero-valued entries are dropped on construction so equality is
    structural.
    """

    n_cells: int
    flows: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_cells < 0:
            raise ValueError(f"n_cells must be >= 0, got {self.n_cells}")
        cleaned = {}
        for (i, j), count in self.flows.items():
            i, j = int(i), int(j)
            count = int(count)
            if not (0 <= i < self.n_cells and 0 <= j < self.n_cells):
                raise ValueError(f"cell pair ({i}, {j}) outside [0, {self.n_cells})")
            if count < 0:
                raise ValueError(f"flow at ({i}, {j}) is negative: {count}")
            if count > 0:
                cleaned[(i, j)] = count
        self.flows = cleaned

    def add(self, origin: int, dest: int, count: int = 1):
        if not (0 <= origin < self.n_cells and 0 <= dest < self.n_cells):
            raise ValueError(f"cell pair ({origin}, {dest}) outside [0, {self.n_cells})")
        if count < 0:
            raise ValueError("count must be non-negative")
        if count:
            key = (origin, dest)
            self.flows[key] = self.flows.get(key, 0) + count

    def get(self, origin: int, dest: int) -> int:
        return self.flows.get((origin, dest), 0)

    def total(self) -> int:
        return sum(self.flows.values())

    def nonzero(self) -> list:
        """(origin, dest, count) triples sorted by (origin, dest)."""
        return [(i, j, c) for (i, j), c in sorted(self.flows.items())]

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_cells, self.n_cells), dtype=np.int64)
        for (i, j), c in self.flows.items():
            dense[i, j] = c
        return dense

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "ODMatrix":
        dense = np.asarray(dense)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {dense.shape}")
        flows = {
            (int(i), int(j)): int(dense[i, j])
            for i, j in zip(*np.nonzero(dense))
        }
        return cls(n_cells=dense.shape[0], flows=flows)

    def save_csv(self, path, meta: dict | None = None):
        """Write sorted ``origin_cell,dest_cell,flow`` triples.

        A JSON sidecar (same stem, ``.meta.json``) records n_cells plus any
        caller-supplied metadata, so the matrix round-trips without guessing N.
        """
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["origin_cell", "dest_cell", "flow"])
            for i, j, c in self.nonzero():
                writer.writerow([i, j, c])
        sidecar = {"format_version": 1, "n_cells": self.n_cells}
        if meta:
            sidecar.update(meta)
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, sort_keys=True, separators=(",", ": "), indent=1)
            fh.write("\n")

    @classmethod
    def load_csv(cls, path, n_cells: int | None = None) -> "ODMatrix":
        """Read triples written by :meth:`save_csv`.

        ``n_cells`` falls back to the sidecar when omitted.
        """
        path = Path(path)
        if n_cells is None:
            side = sidecar_path(path)
            if not side.exists():
                raise DatasetError(
                    f"{path}: no n_cells given and sidecar {side} not found"
                )
            with open(side, encoding="utf-8") as fh:
                n_cells = int(json.load(fh)["n_cells"])
        flows = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip().casefold() for h in header] != [
                "origin_cell",
                "dest_cell",
                "flow",
            ]:
                raise DatasetError(f"{path}: expected header origin_cell,dest_cell,flow")
            for line_no, row in enumerate(reader, start=2):
                if not row or all(not f.strip() for f in row):
                    continue
                try:
                    i, j, c = int(row[0]), int(row[1]), int(row[2])
                except (ValueError, IndexError):
                    raise DatasetError(f"{path}:{line_no}: malformed triple {row!r}") from None
                key = (i, j)
                flows[key] = flows.get(key, 0) + c
        return cls(n_cells=n_cells, flows=flows)


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta.json")
