"""Synthetic twin-city scenario generator.

Builds a pair of cities that share a hidden travel rule — origin POI
signature plus hour of day determines the destination's POI archetype — but
differ in layout (the target's columns are mirrored and the whole city sits
at a different longitude). Because the rule is known, the target city's
ground-truth OD matrix can be produced directly, giving the full pipeline a
scenario with a verifiable answer.

Construction notes, load-bearing for exactness:

* Every cell gets a unique POI support: the binary digits of (cell_index + 1)
  over the first ``ceil(log2(N + 1))`` vocabulary categories, one POI per
  present category. Distinct 0/1 count vectors never differ by a constant
  shift, so no two cells share a softmax distribution and signature lookups
  pin cells uniquely.
* Trip endpoints sit exactly at cell centres, so an ingested trip's cost
  equals the centre-to-centre travel cost up to 3-decimal rounding; the
  scenario config carries ``cost_slack: 0.01`` to absorb that rounding.
* The target grid spans the same latitudes as the source, so both grids have
  identical cell geometry and the mirrored layout preserves all pairwise
  travel costs up to float noise (far below the slack margin).
"""

import json
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml

from .grid import Bounds, Grid, METERS_PER_DEG_LAT, build_grid, cell_center, meters_per_deg_lon
from .matrix import ODMatrix
from .vocab import Vocabulary

TRIP_DATE = (2024, 5, 6)


@dataclass
class ScenarioSpec:
    """Knobs for one synthetic twin-city scenario."""

    n_rows: int = 6
    n_cols: int = 6
    cell_size_m: float = 1000.0
    hours: tuple = (7, 9, 12, 15, 18, 21)
    trips_per_key: int = 3
    n_target_origins: int = 400
    noise: float = 0.1
    seed: int = 7
    permute_target: bool = True
    source_name: str = "Avalon"
    target_name: str = "Brookfield"
    base_lat: float = 30.0
    source_min_lon: float = 104.0
    target_min_lon: float = 116.0

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid must have at least one row and column")
        if self.n_cells < 2:
            raise ValueError("scenario needs at least two cells")
        if not (math.isfinite(self.cell_size_m) and self.cell_size_m > 0):
            raise ValueError(f"cell_size_m must be positive, got {self.cell_size_m}")
        if not self.hours or len(set(self.hours)) != len(self.hours):
            raise ValueError("hours must be a non-empty set of distinct values")
        if any(not 0 <= h <= 23 for h in self.hours):
            raise ValueError("hours must lie in 0..23")
        if self.trips_per_key < 1:
            raise ValueError("trips_per_key must be >= 1")
        if self.n_target_origins < 1:
            raise ValueError("n_target_origins must be >= 1")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise must lie in [0, 1], got {self.noise}")
        vocab_size = Vocabulary.default().size
        if support_bits(self.n_cells) > vocab_size:
            raise ValueError(
                f"{self.n_cells} cells need {support_bits(self.n_cells)} categories, "
                f"vocabulary has {vocab_size}"
            )

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols


@dataclass
class ScenarioArtifacts:
    """Everything a caller needs to run and verify the scenario."""

    spec: ScenarioSpec
    out_dir: Path
    config_path: Path
    vocabulary_path: Path
    source_pois_path: Path
    source_trips_path: Path
    target_pois_path: Path
    target_origins_path: Path
    truth_path: Path
    grid_source: Grid
    grid_target: Grid
    rule: tuple
    permutation: list
    truth: ODMatrix

    def rule_destination(self, cell: int, hour: int) -> int:
        a, b, c0 = self.rule
        return (a * cell + b * hour + c0) % self.spec.n_cells


def support_bits(n_cells: int) -> int:
    """Number of vocabulary slots needed to encode every cell index."""
    return max(1, math.ceil(math.log2(n_cells + 1)))


def cell_support(cell: int, n_cells: int) -> tuple:
    """Category indices present in ``cell``: binary digits of cell+1."""
    code = cell + 1
    return tuple(k for k in range(support_bits(n_cells)) if (code >> k) & 1)


def _scenario_bounds(spec: ScenarioSpec, min_lon: float) -> Bounds:
    # extents of (n - 0.25) cells guarantee the ceil lands on exactly n
    lat_extent = (spec.n_rows - 0.25) * spec.cell_size_m / METERS_PER_DEG_LAT
    mid_lat = spec.base_lat + lat_extent / 2.0
    lon_extent = (spec.n_cols - 0.25) * spec.cell_size_m / meters_per_deg_lon(mid_lat)
    return Bounds(
        min_lat=spec.base_lat,
        min_lon=min_lon,
        max_lat=spec.base_lat + lat_extent,
        max_lon=min_lon + lon_extent,
    )


def _mirror_permutation(spec: ScenarioSpec) -> list:
    if not spec.permute_target:
        return list(range(spec.n_cells))
    perm = []
    for cell in range(spec.n_cells):
        row, col = divmod(cell, spec.n_cols)
        perm.append(row * spec.n_cols + (spec.n_cols - 1 - col))
    return perm


def _write_pois(path: Path, grid: Grid, placement, spec: ScenarioSpec, vocab: Vocabulary, rng):
    """One POI per (cell, support category), jittered inside the placed cell."""
    lines = ["lat,lon,category"]
    for cell in range(spec.n_cells):
        placed = placement[cell]
        row, col = divmod(placed, grid.n_cols)
        for k in cell_support(cell, spec.n_cells):
            u_lat = rng.uniform(0.2, 0.7)
            u_lon = rng.uniform(0.2, 0.7)
            lat = grid.bounds.min_lat + (row + u_lat) * grid.lat_step_deg
            lon = grid.bounds.min_lon + (col + u_lon) * grid.lon_step_deg
            lines.append(f"{lat!r},{lon!r},{vocab.names[k]}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _default_config(spec: ScenarioSpec, src_bounds: Bounds, tgt_bounds: Bounds) -> dict:
    def bounds_dict(b: Bounds) -> dict:
        return {
            "min_lat": b.min_lat,
            "min_lon": b.min_lon,
            "max_lat": b.max_lat,
            "max_lon": b.max_lon,
        }

    return {
        "seed": spec.seed,
        "output_dir": "out",
        "vocabulary": "vocabulary.txt",
        "source": {
            "name": spec.source_name,
            "bounds": bounds_dict(src_bounds),
            "cell_size_m": spec.cell_size_m,
            "pois": "source_pois.csv",
            "trips": "source_trips.csv",
        },
        "target": {
            "name": spec.target_name,
            "bounds": bounds_dict(tgt_bounds),
            "cell_size_m": spec.cell_size_m,
            "pois": "target_pois.csv",
            "origins": "target_origins.csv",
        },
        "predictor": {
            "kind": "frequency",
            "gravity": {"beta": 2.0, "calibrate_beta": False},
            "endpoint": {
                "base_url": "http://127.0.0.1:8947",
                "timeout_ms": 10000,
                "max_in_flight": 4,
                "retries": 2,
            },
        },
        "loss": {
            "alpha": 1.0,
            "weights": None,
            "alpha_sweep": [0.25, 0.5, 1.0, 2.0, 4.0],
        },
        "match": {"cost_slack": 0.01, "poi_only": True},
        "error_budget": 0,
        "eval": {"n_bins": 4, "top_k_arcs": 20},
    }


def generate_scenario(spec: ScenarioSpec, out_dir) -> ScenarioArtifacts:
    """Write a complete scenario (CSVs, vocabulary, config, ground truth).

    Deterministic: the same spec (seed included) produces byte-identical
    files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = Vocabulary.default()
    n = spec.n_cells

    rng_rule = np.random.default_rng([spec.seed, 0])
    a = int(rng_rule.integers(1, n))
    b = int(rng_rule.integers(0, n))
    c0 = int(rng_rule.integers(0, n))

    def rule(cell: int, hour: int) -> int:
        return (a * cell + b * hour + c0) % n

    src_bounds = _scenario_bounds(spec, spec.source_min_lon)
    tgt_bounds = _scenario_bounds(spec, spec.target_min_lon)
    grid_src = build_grid(src_bounds, spec.cell_size_m)
    grid_tgt = build_grid(tgt_bounds, spec.cell_size_m)
    if (grid_src.n_rows, grid_src.n_cols) != (spec.n_rows, spec.n_cols):
        raise AssertionError(
            f"scenario grid came out {grid_src.n_rows}x{grid_src.n_cols}, "
            f"expected {spec.n_rows}x{spec.n_cols}"
        )
    perm = _mirror_permutation(spec)

    vocabulary_path = out_dir / "vocabulary.txt"
    vocabulary_path.write_text(vocab.to_lines(), encoding="utf-8")

    source_pois_path = out_dir / "source_pois.csv"
    _write_pois(
        source_pois_path, grid_src, list(range(n)), spec, vocab,
        np.random.default_rng([spec.seed, 1]),
    )
    target_pois_path = out_dir / "target_pois.csv"
    _write_pois(
        target_pois_path, grid_tgt, perm, spec, vocab,
        np.random.default_rng([spec.seed, 2]),
    )

    year, month, day = TRIP_DATE
    rng_trips = np.random.default_rng([spec.seed, 3])
    trip_lines = ["o_lat,o_lon,d_lat,d_lon,start_time"]
    for cell in range(n):
        for hour in spec.hours:
            for _ in range(spec.trips_per_key):
                minute = int(rng_trips.integers(0, 60))
                dest = rule(cell, hour)
                if spec.noise > 0 and rng_trips.random() < spec.noise:
                    dest = int(rng_trips.integers(0, n))
                o_lat, o_lon = cell_center(grid_src, cell)
                d_lat, d_lon = cell_center(grid_src, dest)
                start = datetime(year, month, day, hour, minute)
                trip_lines.append(
                    f"{o_lat!r},{o_lon!r},{d_lat!r},{d_lon!r},{start.isoformat()}"
                )
    source_trips_path = out_dir / "source_trips.csv"
    source_trips_path.write_text("\n".join(trip_lines) + "\n", encoding="utf-8")

    rng_target = np.random.default_rng([spec.seed, 4])
    origin_lines = ["o_lat,o_lon,start_time"]
    truth = ODMatrix(n_cells=n)
    for _ in range(spec.n_target_origins):
        cell = int(rng_target.integers(0, n))
        hour = spec.hours[int(rng_target.integers(0, len(spec.hours)))]
        minute = int(rng_target.integers(0, 60))
        dest = rule(cell, hour)
        if spec.noise > 0 and rng_target.random() < spec.noise:
            dest = int(rng_target.integers(0, n))
        o_lat, o_lon = cell_center(grid_tgt, perm[cell])
        start = datetime(year, month, day, hour, minute)
        origin_lines.append(f"{o_lat!r},{o_lon!r},{start.isoformat()}")
        truth.add(perm[cell], perm[dest])
    target_origins_path = out_dir / "target_origins.csv"
    target_origins_path.write_text("\n".join(origin_lines) + "\n", encoding="utf-8")

    truth_path = out_dir / "truth_matrix.csv"
    truth.save_csv(truth_path, meta={"city": spec.target_name, "kind": "ground_truth"})

    config = _default_config(spec, src_bounds, tgt_bounds)
    config_path = out_dir / "scenario.yaml"
    with open(config_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config, fh, sort_keys=True)

    meta = {
        "rule": {"a": a, "b": b, "c0": c0},
        "permutation": perm,
        "n_cells": n,
        "hours": list(spec.hours),
        "noise": spec.noise,
        "seed": spec.seed,
    }
    with open(out_dir / "scenario_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, separators=(",", ": "), indent=1)
        fh.write("\n")

    return ScenarioArtifacts(
        spec=spec,
        out_dir=out_dir,
        config_path=config_path,
        vocabulary_path=vocabulary_path,
        source_pois_path=source_pois_path,
        source_trips_path=source_trips_path,
        target_pois_path=target_pois_path,
        target_origins_path=target_origins_path,
        truth_path=truth_path,
        grid_source=grid_src,
        grid_target=grid_tgt,
        rule=(a, b, c0),
        permutation=perm,
        truth=truth,
    )
