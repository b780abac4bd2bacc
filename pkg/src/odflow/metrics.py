"""Flow-matrix comparison metrics, binned error profiles, and arc export.

All matrix metrics average over the full N x N grid of entries (zeros
included), matching the matrices' definition rather than their sparse
encodings.
"""

import json
import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .exceptions import MetricError
from .grid import Grid, cell_center, travel_costs_from
from .matrix import ODMatrix

BIN_MODES = ("flow", "distance")


@dataclass
class MetricReport:
    rmse: float
    smape: float
    smape_percent: float
    cpc: float
    n_cells: int
    n_compared: int

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "smape": self.smape,
            "smape_percent": self.smape_percent,
            "cpc": self.cpc,
            "n_cells": self.n_cells,
            "n_compared": self.n_compared,
        }


@dataclass
class BinnedError:
    mode: str
    edges: list
    rmse: list
    counts: list

    def save_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "rmse", "count"])
            for b in range(len(self.counts)):
                writer.writerow(
                    [
                        f"{self.edges[b]:.6f}",
                        f"{self.edges[b + 1]:.6f}",
                        f"{self.rmse[b]:.9f}",
                        self.counts[b],
                    ]
                )


def _check_comparable(truth: ODMatrix, predicted: ODMatrix):
    if truth.n_cells != predicted.n_cells:
        raise MetricError(
            f"matrix sizes differ: {truth.n_cells} vs {predicted.n_cells}"
        )
    if truth.n_cells == 0:
        raise MetricError("metrics are undefined for empty (0-cell) matrices")


def _union_keys(truth: ODMatrix, predicted: ODMatrix):
    return set(truth.flows) | set(predicted.flows)


def rmse(truth: ODMatrix, predicted: ODMatrix) -> float:
    """Root mean squared error over all N^2 entries."""
    _check_comparable(truth, predicted)
    sq = 0.0
    for key in _union_keys(truth, predicted):
        diff = truth.flows.get(key, 0) - predicted.flows.get(key, 0)
        sq += float(diff) * float(diff)
    n_entries = truth.n_cells * truth.n_cells
    return float(np.sqrt(sq / n_entries))


def smape(truth: ODMatrix, predicted: ODMatrix) -> float:
    """Symmetric MAPE over all N^2 entries, as a fraction in [0, 2].

    The 0/0 case contributes 0, which is what keeps the all-zero majority of
    a sparse OD matrix from poisoning the mean.
    """
    _check_comparable(truth, predicted)
    acc = 0.0
    for key in _union_keys(truth, predicted):
        f = truth.flows.get(key, 0)
        f_hat = predicted.flows.get(key, 0)
        denom = (abs(f) + abs(f_hat)) / 2.0
        if denom > 0:
            acc += abs(f - f_hat) / denom
    n_entries = truth.n_cells * truth.n_cells
    return acc / n_entries


def cpc(truth: ODMatrix, predicted: ODMatrix) -> float:
    """Common part of commuters: 2 * sum(min) / (sum + sum), in [0, 1]."""
    _check_comparable(truth, predicted)
    total_truth = truth.total()
    total_pred = predicted.total()
    if total_truth == 0 and total_pred == 0:
        raise MetricError("CPC is undefined when both matrices are all-zero")
    common = 0
    for key in _union_keys(truth, predicted):
        common += min(truth.flows.get(key, 0), predicted.flows.get(key, 0))
    return 2.0 * common / (total_truth + total_pred)


def evaluate(truth: ODMatrix, predicted: ODMatrix) -> MetricReport:
    s = smape(truth, predicted)
    return MetricReport(
        rmse=rmse(truth, predicted),
        smape=s,
        smape_percent=100.0 * s,
        cpc=cpc(truth, predicted),
        n_cells=truth.n_cells,
        n_compared=truth.n_cells * truth.n_cells,
    )


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence, base-2 logs, mixture M = (P+Q)/2.

    Symmetric by construction and bounded in [0, 1].
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise MetricError(f"distributions must share 1-D shape: {p.shape} vs {q.shape}")
    for name, vec in (("P", p), ("Q", q)):
        if not np.all(np.isfinite(vec)) or (vec < 0).any():
            raise MetricError(f"{name} must be non-negative and finite")
        if abs(vec.sum() - 1.0) > 1e-9:
            raise MetricError(f"{name} must sum to 1 within 1e-9, got {vec.sum()!r}")
    m = (p + q) / 2.0

    def kl_bits(a: np.ndarray, mix: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / mix[mask])))

    return 0.5 * kl_bits(p, m) + 0.5 * kl_bits(q, m)


def flow_distributions(truth: ODMatrix, predicted: ODMatrix) -> tuple:
    """Both matrices as probability vectors over their union support."""
    _check_comparable(truth, predicted)
    total_truth = truth.total()
    total_pred = predicted.total()
    if total_truth == 0 or total_pred == 0:
        raise MetricError("flow distributions need at least one trip in each matrix")
    keys = sorted(_union_keys(truth, predicted))
    p = np.array([truth.flows.get(k, 0) for k in keys], dtype=np.float64) / total_truth
    q = np.array([predicted.flows.get(k, 0) for k in keys], dtype=np.float64) / total_pred
    return p, q


def _bin_index(value: float, lo: float, hi: float, n_bins: int) -> int:
    idx = int((value - lo) / (hi - lo) * n_bins)
    return min(max(idx, 0), n_bins - 1)


def binned_errors(
    truth: ODMatrix, predicted: ODMatrix, grid: Grid, mode: str, n_bins: int
) -> BinnedError:
    """Per-bin RMSE with entries grouped by truth flow or pair distance.

    Every one of the N^2 entries lands in exactly one bin, so the bin counts
    always sum to N^2. Empty bins report RMSE 0.
    """
    _check_comparable(truth, predicted)
    if mode not in BIN_MODES:
        raise MetricError(f"mode must be one of {BIN_MODES}, got {mode!r}")
    if n_bins < 1:
        raise MetricError(f"n_bins must be >= 1, got {n_bins}")
    n = truth.n_cells
    n_entries = n * n
    union = _union_keys(truth, predicted)
    counts = np.zeros(n_bins, dtype=np.int64)
    sumsq = np.zeros(n_bins, dtype=np.float64)

    if mode == "flow":
        n_implicit = n_entries - len(union)
        values = [float(truth.flows.get(k, 0)) for k in union]
        if n_implicit > 0:
            values.append(0.0)
        lo, hi = min(values), max(values)
        if hi <= lo:
            hi = lo + 1.0
        for key in union:
            b = _bin_index(float(truth.flows.get(key, 0)), lo, hi, n_bins)
            counts[b] += 1
            diff = truth.flows.get(key, 0) - predicted.flows.get(key, 0)
            sumsq[b] += float(diff) * float(diff)
        if n_implicit > 0:
            counts[_bin_index(0.0, lo, hi, n_bins)] += n_implicit
    else:
        lo = 0.0  # every diagonal pair has distance 0
        hi = 0.0
        for i in range(n):
            hi = max(hi, float(travel_costs_from(grid, i).max()))
        if hi <= lo:
            hi = lo + 1.0
        errors_by_origin = defaultdict(list)
        for key in union:
            diff = truth.flows.get(key, 0) - predicted.flows.get(key, 0)
            errors_by_origin[key[0]].append((key[1], float(diff) * float(diff)))
        for i in range(n):
            dists = travel_costs_from(grid, i)
            idx = np.minimum(
                np.maximum(((dists - lo) / (hi - lo) * n_bins).astype(np.int64), 0),
                n_bins - 1,
            )
            counts += np.bincount(idx, minlength=n_bins)
            for j, err2 in errors_by_origin.get(i, ()):
                sumsq[idx[j]] += err2

    edges = np.linspace(lo, hi, n_bins + 1)
    rmse_bins = [
        float(np.sqrt(sumsq[b] / counts[b])) if counts[b] > 0 else 0.0
        for b in range(n_bins)
    ]
    return BinnedError(
        mode=mode,
        edges=[float(e) for e in edges],
        rmse=rmse_bins,
        counts=[int(c) for c in counts],
    )


def top_flows(matrix: ODMatrix, top_k: int) -> list:
    """Largest flows, descending, ties broken by (origin, dest)."""
    if top_k < 0:
        raise ValueError(f"top_k must be >= 0, got {top_k}")
    ranked = sorted(matrix.flows.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_k]


def export_arcs(matrix: ODMatrix, grid: Grid, top_k: int, path) -> list:
    """Write plot-ready arcs for the top_k flows; returns the arc list.

    Arcs are sorted by descending flow and labeled by volume tercile
    (high/mid/low) within the selection.
    """
    if matrix.n_cells != grid.n_cells:
        raise MetricError(
            f"matrix covers {matrix.n_cells} cells, grid has {grid.n_cells}"
        )
    ranked = top_flows(matrix, top_k)
    k = len(ranked)
    arcs = []
    for rank, ((i, j), flow) in enumerate(ranked):
        if rank < k / 3.0:
            volume = "high"
        elif rank < 2.0 * k / 3.0:
            volume = "mid"
        else:
            volume = "low"
        o_lat, o_lon = cell_center(grid, i)
        d_lat, d_lon = cell_center(grid, j)
        arcs.append(
            {
                "o_lat": o_lat,
                "o_lon": o_lon,
                "d_lat": d_lat,
                "d_lon": d_lon,
                "flow": int(flow),
                "volume": volume,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(arcs, fh, sort_keys=True, separators=(",", ": "), indent=1)
        fh.write("\n")
    return arcs
