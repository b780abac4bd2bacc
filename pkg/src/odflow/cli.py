"""Command-line pipeline: grid -> dataset -> train -> match -> eval / sweep.

Every command reads one YAML config (``--config``), writes its artifacts
under the output directory (``--out`` overrides the config's), and always
emits a machine-readable ``<command>_run.json`` recording status, content
digests of inputs and outputs, and counters. Artifacts contain no wall-clock
data, so re-running a command on unchanged inputs reproduces byte-identical
files.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import (
    PipelineConfig,
    canonical_json,
    load_config,
    require_file,
    sha256_file,
    sha256_text,
)
from .dataset import (
    build_od_poi_dataset,
    build_origin_set,
    export_jsonl,
    ingest_origins,
    ingest_trips,
)
from .exceptions import ConfigError, MetricError
from .features import load_poi_features
from .gravity import GravityParams, calibrate_beta, cell_masses, gravity_od_matrix
from .grid import build_grid
from .loss import LossWeights
from .matching import MatchPolicy, assemble_od_matrix
from .matrix import ODMatrix
from .metrics import binned_errors, evaluate, export_arcs, flow_distributions, jsd
from .pipeline import predict_od_matrix
from .predictors import EndpointPredictor, FrequencyPredictor

logger = logging.getLogger(__name__)


def _write_json(path: Path, obj) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ": "), indent=1)
        fh.write("\n")
    return path


def _assignment_counters(report) -> dict:
    return {
        "n_records": report.n_records,
        "n_assigned": report.n_assigned,
        "n_out_of_bounds": report.n_out_of_bounds,
        "n_unknown_category": report.n_unknown_category,
        "n_malformed": report.n_malformed,
    }


def _ingest_counters(report) -> dict:
    return {
        "n_rows": report.n_rows,
        "n_accepted": report.n_accepted,
        "n_out_of_bounds": report.n_out_of_bounds,
        "n_malformed": report.n_malformed,
    }


def _city_assets(config: PipelineConfig, role: str, vocab):
    city = config.source if role == "source" else config.target
    require_file(city.pois, f"{role}.pois")
    grid = build_grid(city.bounds, city.cell_size_m)
    features, report = load_poi_features(city.pois, grid, vocab)
    return city, grid, features, report


def _loss_weights(config: PipelineConfig, n_categories: int, alpha=None) -> LossWeights:
    alpha = config.alpha if alpha is None else alpha
    if config.weights is None:
        return LossWeights.unit(n_categories, alpha=alpha)
    return LossWeights(w=config.weights, alpha=alpha)


def _match_policy(config: PipelineConfig) -> MatchPolicy:
    return MatchPolicy(cost_slack=config.cost_slack, match_poi_only=config.poi_only)


def cmd_grid(config: PipelineConfig, out_dir: Path, args, record: dict):
    vocab = config.load_vocabulary()
    for role in ("source", "target"):
        city, grid, features, report = _city_assets(config, role, vocab)
        payload = {
            "format_version": 1,
            "role": role,
            "name": city.name,
            "grid": grid.to_payload(),
            "features": features.to_payload(),
            "assignment": _assignment_counters(report),
        }
        path = _write_json(out_dir / f"{role}_city.json", payload)
        record["input_digests"][f"{role}.pois"] = sha256_file(city.pois)
        record["output_digests"][path.name] = sha256_file(path)
        record["counters"][role] = _assignment_counters(report)
    if config.vocabulary_path is not None:
        record["input_digests"]["vocabulary"] = sha256_file(config.vocabulary_path)


def cmd_dataset(config: PipelineConfig, out_dir: Path, args, record: dict):
    vocab = config.load_vocabulary()
    _, grid, features, _ = _city_assets(config, "source", vocab)
    require_file(config.source.trips, "source.trips")
    trips, report = ingest_trips(config.source.trips, grid)
    samples = build_od_poi_dataset(trips, features)
    jsonl_path = out_dir / "dataset.jsonl"
    n_lines = export_jsonl(samples, config.source.name, vocab, jsonl_path)
    origins = build_origin_set(trips)
    origins_path = out_dir / "origin_set.csv"
    with open(origins_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin_cell", "start_time"])
        for entry in origins:
            writer.writerow([entry.origin, entry.start_time.isoformat()])
    record["input_digests"]["source.trips"] = sha256_file(config.source.trips)
    record["output_digests"]["dataset.jsonl"] = sha256_file(jsonl_path)
    record["output_digests"]["origin_set.csv"] = sha256_file(origins_path)
    record["counters"]["ingest"] = _ingest_counters(report)
    record["counters"]["n_samples"] = n_lines


def _train_predictor_payload(config: PipelineConfig, vocab) -> dict:
    if config.predictor_kind == "frequency":
        _, grid, features, _ = _city_assets(config, "source", vocab)
        require_file(config.source.trips, "source.trips")
        trips, _ = ingest_trips(config.source.trips, grid)
        samples = build_od_poi_dataset(trips, features)
        return FrequencyPredictor().fit(samples).to_payload()
    if config.predictor_kind == "gravity":
        beta = config.gravity_beta
        if config.gravity_calibrate:
            _, grid, features, _ = _city_assets(config, "source", vocab)
            require_file(config.source.trips, "source.trips")
            trips, _ = ingest_trips(config.source.trips, grid)
            reference = assemble_od_matrix(
                build_origin_set(trips), [t.destination for t in trips], grid.n_cells
            )
            params = GravityParams(beta=beta)
            masses = cell_masses(features, params)
            beta = calibrate_beta(masses, grid, len(trips), reference)
        return {
            "format_version": 1,
            "kind": "gravity",
            "beta": beta,
            "mass_mode": "poi_total",
        }
    return {
        "format_version": 1,
        "kind": "endpoint",
        "base_url": config.endpoint.base_url,
        "timeout_ms": config.endpoint.timeout_ms,
        "max_in_flight": config.endpoint.max_in_flight,
        "retries": config.endpoint.retries,
    }


def cmd_train(config: PipelineConfig, out_dir: Path, args, record: dict):
    payload = _train_predictor_payload(config, config.load_vocabulary())
    path = _write_json(out_dir / "predictor.json", payload)
    record["output_digests"]["predictor.json"] = sha256_file(path)
    record["counters"]["kind"] = payload["kind"]
    if config.source.trips and config.source.trips.is_file():
        record["input_digests"]["source.trips"] = sha256_file(config.source.trips)


_EXPECTED_PAYLOAD_KIND = {
    "frequency": "frequency_table",
    "gravity": "gravity",
    "endpoint": "endpoint",
}


def _predictor_payload(config: PipelineConfig, out_dir: Path, vocab) -> dict:
    path = out_dir / "predictor.json"
    if path.is_file():
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("kind") == _EXPECTED_PAYLOAD_KIND[config.predictor_kind]:
            return payload
        logger.info(
            "predictor.json holds a %r model but config wants %r; retraining",
            payload.get("kind"),
            config.predictor_kind,
        )
    return _train_predictor_payload(config, vocab)


def cmd_match(config: PipelineConfig, out_dir: Path, args, record: dict):
    vocab = config.load_vocabulary()
    city, grid, features, _ = _city_assets(config, "target", vocab)
    require_file(city.origins, "target.origins")
    origins, ingest_report = ingest_origins(city.origins, grid)
    payload = _predictor_payload(config, out_dir, vocab)
    if payload["kind"] == "gravity":
        params = GravityParams(beta=float(payload["beta"]), mass_mode=payload["mass_mode"])
        masses = cell_masses(features, params)
        matrix = gravity_od_matrix(masses, grid, params, len(origins))
        counters = {"n_origins": len(origins), "n_predicted": len(origins), "n_failed": 0}
    else:
        if payload["kind"] == "endpoint":
            predictor = EndpointPredictor(config.endpoint, city.name, vocab)
        else:
            predictor = FrequencyPredictor.from_payload(payload)
        matrix, run_report = predict_od_matrix(
            grid,
            features,
            predictor,
            origins,
            weights=_loss_weights(config, features.n_categories),
            policy=_match_policy(config),
            error_budget=config.error_budget,
        )
        counters = {
            "n_origins": run_report.n_origins,
            "n_predicted": run_report.n_predicted,
            "n_failed": run_report.n_failed,
        }
    matrix_path = out_dir / "predicted_matrix.csv"
    matrix.save_csv(
        matrix_path,
        meta={
            "city": city.name,
            "grid_digest": sha256_text(canonical_json(grid.to_payload())),
            "config_digest": sha256_file(config.path),
        },
    )
    record["input_digests"]["target.origins"] = sha256_file(city.origins)
    record["input_digests"]["target.pois"] = sha256_file(city.pois)
    record["output_digests"]["predicted_matrix.csv"] = sha256_file(matrix_path)
    record["counters"].update(counters)
    record["counters"]["ingest"] = _ingest_counters(ingest_report)
    record["counters"]["total_flow"] = matrix.total()


def _load_truth(truth_path: Path, n_cells: int) -> ODMatrix:
    require_file(truth_path, "truth")
    from .matrix import sidecar_path

    if sidecar_path(truth_path).exists():
        truth = ODMatrix.load_csv(truth_path)
    else:
        truth = ODMatrix.load_csv(truth_path, n_cells=n_cells)
    return truth


def cmd_eval(config: PipelineConfig, out_dir: Path, args, record: dict):
    vocab = config.load_vocabulary()
    _, grid, _, _ = _city_assets(config, "target", vocab)
    matrix_path = out_dir / "predicted_matrix.csv"
    if not matrix_path.is_file():
        raise ConfigError(
            f"predicted matrix not found at {matrix_path}; run the match command first"
        )
    predicted = ODMatrix.load_csv(matrix_path)
    truth = _load_truth(Path(args.truth), predicted.n_cells)
    report = evaluate(truth, predicted)
    try:
        p, q = flow_distributions(truth, predicted)
        jsd_value = jsd(p, q)
    except MetricError:
        jsd_value = None
    metrics_payload = dict(report.to_dict(), jsd=jsd_value)
    metrics_path = _write_json(out_dir / "metrics.json", metrics_payload)
    flow_bins = binned_errors(truth, predicted, grid, "flow", config.n_bins)
    dist_bins = binned_errors(truth, predicted, grid, "distance", config.n_bins)
    flow_path = out_dir / "binned_flow.csv"
    dist_path = out_dir / "binned_distance.csv"
    flow_bins.save_csv(flow_path)
    dist_bins.save_csv(dist_path)
    arcs_path = out_dir / "arcs.json"
    export_arcs(predicted, grid, config.top_k_arcs, arcs_path)
    record["input_digests"]["truth"] = sha256_file(args.truth)
    record["input_digests"]["predicted_matrix.csv"] = sha256_file(matrix_path)
    for path in (metrics_path, flow_path, dist_path, arcs_path):
        record["output_digests"][Path(path).name] = sha256_file(path)
    record["counters"]["metrics"] = metrics_payload


def cmd_sweep(config: PipelineConfig, out_dir: Path, args, record: dict):
    vocab = config.load_vocabulary()
    city, grid, features, _ = _city_assets(config, "target", vocab)
    require_file(city.origins, "target.origins")
    origins, _ = ingest_origins(city.origins, grid)
    payload = _predictor_payload(config, out_dir, vocab)
    rows = []
    for alpha in config.alpha_sweep:
        if payload["kind"] == "gravity":
            params = GravityParams(
                beta=float(payload["beta"]), mass_mode=payload["mass_mode"]
            )
            masses = cell_masses(features, params)
            matrix = gravity_od_matrix(masses, grid, params, len(origins))
        else:
            if payload["kind"] == "endpoint":
                predictor = EndpointPredictor(config.endpoint, city.name, vocab)
            else:
                predictor = FrequencyPredictor.from_payload(payload)
            matrix, _ = predict_od_matrix(
                grid,
                features,
                predictor,
                origins,
                weights=_loss_weights(config, features.n_categories, alpha=alpha),
                policy=_match_policy(config),
                error_budget=config.error_budget,
            )
        truth = _load_truth(Path(args.truth), matrix.n_cells)
        report = evaluate(truth, matrix)
        rows.append((alpha, report))
    sweep_path = out_dir / "alpha_sweep.csv"
    with open(sweep_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "rmse", "smape", "smape_percent", "cpc"])
        for alpha, report in rows:
            writer.writerow(
                [repr(alpha), repr(report.rmse), repr(report.smape),
                 repr(report.smape_percent), repr(report.cpc)]
            )
    record["input_digests"]["truth"] = sha256_file(args.truth)
    record["output_digests"]["alpha_sweep.csv"] = sha256_file(sweep_path)
    record["counters"]["n_alphas"] = len(rows)
    record["counters"]["alphas"] = [alpha for alpha, _ in rows]


COMMANDS = {
    "grid": cmd_grid,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "match": cmd_match,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odflow",
        description="Cross-city OD flow estimation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "grid": "build grids and POI features for both cities",
        "dataset": "ingest source trips and export the instruction dataset",
        "train": "train/serialize the configured predictor",
        "match": "predict destinations for target origins and assemble the OD matrix",
        "eval": "compare the predicted matrix against a ground-truth matrix",
        "sweep": "re-run match+eval across the configured alpha values",
    }
    for name in ("grid", "dataset", "train", "match", "eval", "sweep"):
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="pipeline config YAML")
        sp.add_argument(
            "--out", default=None, help="output directory (default: config output_dir)"
        )
        if name in ("eval", "sweep"):
            sp.add_argument(
                "--truth", required=True, help="ground-truth OD matrix CSV"
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    out_dir = Path(args.out) if args.out else None
    record = {
        "command": args.command,
        "status": "ok",
        "error": None,
        "seed": None,
        "config_digest": None,
        "input_digests": {},
        "output_digests": {},
        "counters": {},
    }
    try:
        config = load_config(args.config)
        if out_dir is None:
            out_dir = config.output_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        record["seed"] = config.seed
        record["config_digest"] = sha256_file(config.path)
        COMMANDS[args.command](config, out_dir, args, record)
    except Exception as exc:  # always leave a structured trace behind
        logger.error("%s failed: %s", args.command, exc)
        record["status"] = "error"
        record["error"] = f"{type(exc).__name__}: {exc}"
    log_line = json.dumps(record, sort_keys=True, separators=(",", ": "), indent=1)
    if out_dir is not None and out_dir.is_dir():
        (out_dir / f"{args.command}_run.json").write_text(
            log_line + "\n", encoding="utf-8"
        )
    else:
        print(log_line, file=sys.stderr)
    return 0 if record["status"] == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
