"""Acceptance gates: one test per release criterion, each with its runtime
budget enforced and a ``[acceptance] <gate>: PASS`` line printed on success.

Every expected value is either hand-derived (frozen constants, same oracle
discipline as the unit suite) or recomputed here by an independent code path
(exhaustive scans, naive loops). Nothing is read back from the modules under
test.
"""

import csv
import json
import time

import numpy as np
import pytest
import yaml

from odflow.config import load_config
from odflow.dataset import build_od_poi_dataset, ingest_origins, ingest_trips
from odflow.exceptions import MetricError, ResponseParseError
from odflow.features import CityFeatures, load_poi_features
from odflow.gravity import GravityParams, cell_masses, gravity_od_matrix
from odflow.grid import build_grid, travel_costs_from
from odflow.loss import LossWeights, softmax, weighted_cross_entropy
from odflow.matching import DestinationMatcher, MatchPolicy
from odflow.matrix import ODMatrix
from odflow.metrics import cpc, flow_distributions, jsd, rmse, smape
from odflow.pipeline import predict_od_matrix
from odflow.predictors import FrequencyPredictor, Prediction, parse_llm_response
from odflow.synth import ScenarioSpec, generate_scenario
from odflow.vocab import Vocabulary
from odflow.cli import main as cli_main

from .conftest import exact_bounds

# jsd([0.5, 0.5], [0.9, 0.1]) under the base-2 mixture definition, evaluated
# independently at 30-digit precision (mpmath); see the decisions ledger for
# the discrepant worked example this value supersedes.
JSD_HALF_VS_9010 = 0.146793102436052


def _gate(name: str, started: float, limit_s: float | None):
    elapsed = time.perf_counter() - started
    if limit_s is not None:
        assert elapsed < limit_s, (
            f"{name}: took {elapsed:.2f}s, over the {limit_s:.0f}s budget"
        )
        print(f"[acceptance] {name}: PASS ({elapsed:.2f}s / {limit_s:.0f}s)")
    else:
        print(f"[acceptance] {name}: PASS ({elapsed:.2f}s)")


# -- gate 1: metric oracles --------------------------------------------------


def test_metric_oracle_suite():
    started = time.perf_counter()
    a = ODMatrix.from_dense(np.array([[2, 0], [0, 0]]))
    b = ODMatrix.from_dense(np.array([[1, 1], [0, 0]]))
    zeros2 = ODMatrix(n_cells=2)

    # hand-evaluated fixtures
    assert rmse(a, zeros2) == pytest.approx(1.0, abs=1e-9)
    assert smape(a, b) == pytest.approx(2.0 / 3.0, abs=1e-9)  # (2/3 + 2 + 0 + 0) / 4
    one = ODMatrix.from_dense(np.array([[1]]))
    assert smape(one, ODMatrix(n_cells=1)) == pytest.approx(2.0, abs=1e-9)
    assert cpc(a, b) == pytest.approx(0.5, abs=1e-9)  # 2*1 / (2 + 2)
    assert jsd(np.array([0.5, 0.5]), np.array([0.9, 0.1])) == pytest.approx(
        JSD_HALF_VS_9010, abs=1e-9
    )
    assert jsd(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(
        1.0, abs=1e-9
    )
    assert jsd(np.array([0.25, 0.75]), np.array([0.25, 0.75])) == 0.0

    # 1000 fuzzed pairs: range invariants plus the cpc equality law
    rng = np.random.default_rng(42)
    for trial in range(1000):
        n = int(rng.integers(1, 8))
        x = rng.integers(0, 7, size=(n, n))
        y = x.copy() if trial % 5 == 0 else rng.integers(0, 7, size=(n, n))
        mx, my = ODMatrix.from_dense(x), ODMatrix.from_dense(y)
        assert rmse(mx, my) >= 0.0
        s = smape(mx, my)
        assert 0.0 <= s <= 2.0
        if mx.total() == 0 and my.total() == 0:
            with pytest.raises(MetricError):
                cpc(mx, my)
            continue
        c = cpc(mx, my)
        assert 0.0 <= c <= 1.0
        assert (c == 1.0) == np.array_equal(x, y)
        if mx.total() > 0 and my.total() > 0:
            p, q = flow_distributions(mx, my)
            d = jsd(p, q)
            assert 0.0 <= d <= 1.0
            assert jsd(q, p) == d
    _gate("metric oracle suite", started, 5.0)


# -- gate 2: normalization / loss --------------------------------------------


def test_normalization_and_loss_suite():
    started = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        k = int(rng.integers(2, 24))
        x = rng.normal(0.0, 10.0 ** rng.uniform(-2, 3), size=k)
        p = softmax(x)
        assert abs(p.sum() - 1.0) < 1e-9
        assert (p >= 0.0).all()
        shift = float(rng.uniform(-50.0, 50.0))
        assert np.allclose(softmax(x + shift), p, rtol=0.0, atol=1e-12)
    # overflow guard: huge magnitudes must not produce inf/nan
    extreme = softmax(np.array([1e4, 0.0, -1e4]))
    assert np.isfinite(extreme).all()
    assert abs(extreme.sum() - 1.0) < 1e-9

    # Gibbs: with unit weights the self-entropy is the minimum over q
    for _ in range(1000):
        k = int(rng.integers(2, 24))
        p = softmax(rng.normal(size=k))
        q = softmax(rng.normal(size=k))
        unit = np.ones(k)
        assert weighted_cross_entropy(p, p, unit) <= weighted_cross_entropy(
            p, q, unit
        )
    _gate("normalization/loss suite", started, 5.0)


# -- gate 3: matching equals an exhaustive scan -------------------------------


def _softmax_ref(rows: np.ndarray) -> np.ndarray:
    # independent re-derivation: max-shift, exponentiate, normalize per row
    rows = np.asarray(rows, dtype=np.float64)
    shifted = rows - rows.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _exhaustive_scores(counts, costs, pred, w, alpha, policy):
    """Score every feasible cell the long way: (feasible ids, their scores)."""
    limit = pred.cost_km * (1.0 + policy.cost_slack)
    feasible = [c for c in range(counts.shape[0]) if costs[c] <= limit]
    assert feasible, "the origin always satisfies its own cost constraint"
    if policy.match_poi_only:
        p = _softmax_ref(pred.poi_scores)
        q = _softmax_ref(counts[feasible].astype(np.float64))
        terms = (w * p) * np.log(w * np.maximum(q, 1e-12))
    else:
        p = _softmax_ref(np.append(pred.poi_scores, pred.cost_km))
        wf = np.append(w, alpha)
        cand = np.column_stack(
            [counts[feasible].astype(np.float64), np.asarray(costs)[feasible]]
        )
        q = _softmax_ref(cand)
        terms = (wf * p) * np.log(wf * np.maximum(q, 1e-12))
    return feasible, -terms.sum(axis=1)


def test_matching_equals_exhaustive_scan():
    started = time.perf_counter()
    rng = np.random.default_rng(490)
    saw_poi_only = saw_combined = False
    n_trips_total = 0
    n_near_ties = 0
    eps = np.finfo(np.float64).eps
    for instance in range(50):
        n_rows = int(rng.integers(2, 21))
        n_cols = int(rng.integers(2, 21))
        cell_size = float(rng.uniform(400.0, 1500.0))
        grid = build_grid(exact_bounds(n_rows, n_cols, cell_size), cell_size)
        k = int(rng.integers(4, 10))
        vocab = Vocabulary(tuple(f"Cat{i}" for i in range(k)))
        counts = rng.integers(0, 6, size=(grid.n_cells, k))
        features = CityFeatures(vocabulary=vocab, counts=counts)
        w = (
            np.ones(k)
            if instance % 2 == 0
            else rng.uniform(0.5, 2.0, size=k)
        )
        alpha = float(rng.uniform(0.5, 2.0))
        poi_only = bool(rng.integers(0, 2))
        saw_poi_only |= poi_only
        saw_combined |= not poi_only
        policy = MatchPolicy(
            cost_slack=float(rng.choice([0.0, 0.01, 0.1])),
            match_poi_only=poi_only,
        )
        matcher = DestinationMatcher(
            grid, features, weights=LossWeights(w=w, alpha=alpha), policy=policy
        )
        cost_cache = {}
        n_trips = int(rng.integers(50, 201))
        for _ in range(n_trips):
            origin = int(rng.integers(0, grid.n_cells))
            costs = cost_cache.get(origin)
            if costs is None:
                costs = travel_costs_from(grid, origin)
                cost_cache[origin] = costs
            roll = rng.random()
            if roll < 0.6:
                budget = float(rng.uniform(0.0, costs.max() * 1.05))
            elif roll < 0.8:
                budget = float(costs[int(rng.integers(0, grid.n_cells))])
            elif roll < 0.9:
                budget = 0.0
            else:
                budget = float(costs.max() * 2.0)
            scores = (
                rng.uniform(0.0, 3.0, size=k)
                if rng.random() < 0.7
                else rng.integers(0, 2, size=k).astype(np.float64)
            )
            pred = Prediction(poi_scores=scores, cost_km=budget)
            got = matcher.match(origin, pred)
            feasible, oracle_scores = _exhaustive_scores(
                counts, costs, pred, w, alpha, policy
            )
            best = int(np.argmin(oracle_scores))
            want = int(feasible[best])
            n_trips_total += 1
            if got != want:
                # integer count rows can produce distinct cells whose true
                # scores differ by less than one ulp of the sum; the matcher's
                # reduction order and the oracle's then round them apart. Only
                # a gap at float-noise scale is excusable - anything larger is
                # a real search bug.
                got_idx = feasible.index(got)
                gap = oracle_scores[got_idx] - oracle_scores[best]
                tol = 16.0 * eps * max(1.0, abs(oracle_scores[best]))
                assert 0.0 <= gap <= tol, (
                    f"instance {instance}: matcher {got} != exhaustive {want} "
                    f"(score gap {gap:.3e} > noise tolerance {tol:.3e})"
                )
                n_near_ties += 1
            # the matched cell honors the slack-adjusted cost constraint (the
            # origin is always feasible, so the fallback never has to fire)
            assert costs[got] <= budget * (1.0 + policy.cost_slack)
    assert saw_poi_only and saw_combined
    # near-ties must stay an exotic corner, not the load-bearing escape hatch
    assert n_near_ties <= max(3, n_trips_total // 100), (
        f"{n_near_ties} near-ties out of {n_trips_total} trips"
    )
    _gate("matching exhaustive-scan oracle", started, 30.0)


# -- gates 4 & 5: conservation and synthetic transfer -------------------------


def _run_frequency_pipeline(art):
    """Source-city training -> target-city matching, zero error budget."""
    config = load_config(art.config_path)
    vocab = config.load_vocabulary()
    feats_src, _ = load_poi_features(art.source_pois_path, art.grid_source, vocab)
    trips, _ = ingest_trips(art.source_trips_path, art.grid_source)
    predictor = FrequencyPredictor().fit(build_od_poi_dataset(trips, feats_src))
    feats_tgt, _ = load_poi_features(art.target_pois_path, art.grid_target, vocab)
    origins, _ = ingest_origins(art.target_origins_path, art.grid_target)
    weights = LossWeights.unit(feats_tgt.n_categories, alpha=config.alpha)
    policy = MatchPolicy(
        cost_slack=config.cost_slack, match_poi_only=config.poi_only
    )
    matrix, report = predict_od_matrix(
        art.grid_target,
        feats_tgt,
        predictor,
        origins,
        weights=weights,
        policy=policy,
        error_budget=0,
    )
    return matrix, report, origins, feats_tgt


def test_flow_conservation(tmp_path):
    started = time.perf_counter()
    specs = [
        ScenarioSpec(
            n_rows=3, n_cols=4, hours=(8, 12, 18), trips_per_key=2,
            n_target_origins=50, noise=0.0, seed=21,
        ),
        ScenarioSpec(
            n_rows=4, n_cols=4, hours=(7, 9, 15), trips_per_key=2,
            n_target_origins=120, noise=0.2, seed=22,
        ),
        ScenarioSpec(
            n_rows=2, n_cols=5, hours=(6, 23), trips_per_key=3,
            n_target_origins=75, noise=0.5, seed=23,
        ),
    ]
    for i, spec in enumerate(specs):
        art = generate_scenario(spec, tmp_path / f"scenario_{i}")
        matrix, report, origins, _ = _run_frequency_pipeline(art)
        assert report.n_failed == 0
        assert matrix.total() == len(origins) == report.n_predicted

    # gravity totals survive largest-remainder rounding exactly
    grid = build_grid(exact_bounds(5, 5, 900.0), 900.0)
    params = GravityParams(beta=2.0)
    rng = np.random.default_rng(99)
    for _ in range(20):
        masses = rng.uniform(0.5, 50.0, size=grid.n_cells)
        masses[rng.choice(grid.n_cells, size=5, replace=False)] = 0.0
        total = int(rng.integers(1, 250_000))
        assert gravity_od_matrix(masses, grid, params, total).total() == total
    _gate("flow conservation", started, None)


def test_synthetic_transfer_end_to_end(tmp_path):
    started = time.perf_counter()
    # noiseless + permuted target layout: the rule transfers exactly
    noiseless = ScenarioSpec(
        n_rows=4, n_cols=4, hours=(7, 9, 12, 18), trips_per_key=2,
        n_target_origins=150, noise=0.0, seed=31,
    )
    art = generate_scenario(noiseless, tmp_path / "noiseless")
    matrix, _, origins, _ = _run_frequency_pipeline(art)
    assert cpc(art.truth, matrix) == 1.0
    assert matrix.flows == art.truth.flows

    # class-default noise: the learned pipeline must beat gravity every seed
    for seed in (41, 42, 43, 44, 45):
        spec = ScenarioSpec(
            n_rows=5, n_cols=5, hours=(7, 9, 12, 15, 18), trips_per_key=3,
            n_target_origins=250, seed=seed,
        )
        assert spec.noise > 0.0  # dataclass default, not overridden here
        art = generate_scenario(spec, tmp_path / f"noisy_{seed}")
        matrix, _, origins, feats_tgt = _run_frequency_pipeline(art)
        model_cpc = cpc(art.truth, matrix)
        params = GravityParams(beta=2.0)
        baseline = gravity_od_matrix(
            cell_masses(feats_tgt, params), art.grid_target, params, len(origins)
        )
        baseline_cpc = cpc(art.truth, baseline)
        assert model_cpc > baseline_cpc, (
            f"seed {seed}: model cpc {model_cpc:.4f} <= gravity {baseline_cpc:.4f}"
        )
    _gate("synthetic transfer end-to-end", started, 60.0)


# -- gate 6: response parser fuzz ---------------------------------------------

_PREFIXES = ("", "Sure - here is the plan. ", "Prediction follows. ", "Answer: ")
_SUFFIXES = ("", " Safe travels.", " That should be the stop.", " Done.")
_POIS_KEYS = ('"POIs"', "POIs", "pois", "POIS", '"pois"')
_COST_KEYS = ('"traveling cost"', "traveling cost", "Traveling Cost", "TRAVELING COST")
_UNITS = ("", " kilometers", " km", "km", " KM", " Kilometers")


def _format_cost_text(rng) -> str:
    style = int(rng.integers(0, 10))
    if style == 0:
        return f"{rng.integers(0, 40)}"  # bare integer
    if style == 1:
        return f"+{rng.uniform(0.0, 40.0):.2f}"  # explicit plus sign
    if style == 2:
        return f".{rng.integers(0, 100):02d}"  # leading-dot fraction
    if style == 3:
        return f"{rng.uniform(0.1, 4.0):.3f}e1"  # scientific notation
    digits = int(rng.integers(1, 4))
    return f"{rng.uniform(0.0, 40.0):.{digits}f}"


def _mangle_name(name: str, rng) -> str:
    style = int(rng.integers(0, 4))
    if style == 0:
        return name.upper()
    if style == 1:
        return name.lower()
    return name


def _render_valid(rng, vocab):
    n_pois = int(rng.integers(0, 5))
    ids = sorted(int(i) for i in rng.choice(vocab.size, size=n_pois, replace=False))
    names = [vocab.names[i] for i in ids]
    cost_text = _format_cost_text(rng)
    cost_value = float(cost_text)

    if rng.random() < 0.3:  # strict-JSON shape
        pois_val = (
            ", ".join(_mangle_name(n, rng) for n in names)
            if names and rng.random() < 0.3
            else [_mangle_name(n, rng) for n in names]
        )
        cost_style = int(rng.integers(0, 4))
        if cost_style == 0:
            cost_val = cost_value
        elif cost_style == 1:
            cost_val = [cost_value]
        elif cost_style == 2:
            cost_val = f"{cost_text}{rng.choice(_UNITS)}"
        else:
            cost_val = cost_text
        obj = {
            str(rng.choice(("POIs", "pois", "POIS", " POIs "))): pois_val,
            str(rng.choice(("traveling cost", "Traveling Cost", " traveling cost "))): cost_val,
        }
        return json.dumps(obj), ids, cost_value

    rendered = []
    for name in names:
        name = _mangle_name(name, rng)
        if rng.random() < 0.25:
            quote = "'" if rng.random() < 0.3 else '"'
            name = f"{quote}{name}{quote}"
        rendered.append(name)
    sep = str(rng.choice([", ", ",", " , "]))
    colon = str(rng.choice([":", " :", ": ", " : "]))
    cost_body = f"{cost_text}{rng.choice(_UNITS)}"
    if rng.random() < 0.15:
        cost_body = f'"{cost_body}"'
    pois_field = f"{rng.choice(_POIS_KEYS)}{colon}[{sep.join(rendered)}]"
    cost_field = f"{rng.choice(_COST_KEYS)}{colon}[{cost_body}]"
    joiner = str(rng.choice([", ", ",  ", " | ", "\n"]))
    fields = (
        f"{pois_field}{joiner}{cost_field}"
        if rng.random() < 0.8
        else f"{cost_field}{joiner}{pois_field}"
    )
    text = f"{rng.choice(_PREFIXES)}{fields}{rng.choice(_SUFFIXES)}"
    return text, ids, cost_value


def _render_malformed(rng, vocab) -> str:
    name = vocab.names[int(rng.integers(0, vocab.size))]
    cost = f"{rng.uniform(0.1, 9.9):.1f}"
    builders = (
        lambda: "No destination could be determined today.",
        lambda: f'"POIs": [{name}]',  # cost field missing
        lambda: f'"traveling cost": [{cost} km]',  # POIs field missing
        lambda: f'"POIs": [Warp Gate Prime], "traveling cost": [{cost} km]',
        lambda: json.dumps({"POIs": ["Warp Gate Prime"], "traveling cost": 1.0}),
        lambda: f'"POIs": [{name}], "traveling cost": [-{cost} km]',
        lambda: json.dumps({"POIs": [name], "traveling cost": -2.5}),
        lambda: f'"POIs": [], "traveling cost": [soon]',
        lambda: f'"POIs": [{name}], "traveling cost": [{cost} miles]',
        lambda: f'"POIs": [{name}], "traveling cost": [1.2, 3.4]',
        lambda: json.dumps({"POIs": [name], "traveling cost": [1.2, 3.4]}),
        lambda: json.dumps({"POIs": 42, "traveling cost": 1.0}),
        lambda: json.dumps({"POIs": [name], "traveling cost": True}),
        lambda: json.dumps({"POIs": [name], "traveling cost": None}),
        lambda: f'"POIs": [{name}',  # bracket never closes
        lambda: "   ",
        lambda: f'"POIs": [], "traveling cost": [1e999 km]',  # overflows to inf
        lambda: '{"POIs": [], "traveling cost": Infinity}',
        lambda: '{"POIs": [], "traveling cost": NaN}',
    )
    return builders[int(rng.integers(0, len(builders)))]()


def test_parser_fuzz_valid_and_malformed():
    started = time.perf_counter()
    vocab = Vocabulary.default()
    rng = np.random.default_rng(1315)
    for _ in range(10_000):
        text, ids, cost_value = _render_valid(rng, vocab)
        pred = parse_llm_response(text, vocab)
        expected = np.zeros(vocab.size)
        expected[ids] = 1.0
        assert np.array_equal(pred.poi_scores, expected), text
        assert pred.cost_km == cost_value, text
    for _ in range(1_000):
        text = _render_malformed(rng, vocab)
        with pytest.raises(ResponseParseError) as err:
            parse_llm_response(text, vocab)
        assert err.value.raw == text
    _gate("parser fuzz", started, 10.0)


# -- gate 7: alpha sweep machinery --------------------------------------------


def test_alpha_sweep_machinery(tmp_path):
    started = time.perf_counter()
    spec = ScenarioSpec(
        n_rows=3, n_cols=4, hours=(8, 12, 18), trips_per_key=2,
        n_target_origins=60, noise=0.0, seed=51,
    )
    art = generate_scenario(spec, tmp_path / "scenario")
    raw = yaml.safe_load(art.config_path.read_text(encoding="utf-8"))
    # cost-aware scoring so alpha actually enters the objective
    raw.setdefault("match", {})["poi_only"] = False
    alphas = [0.25, 0.5, 1.0, 2.0, 4.0]
    raw.setdefault("loss", {})["alpha_sweep"] = alphas
    sweep_config = art.out_dir / "sweep_config.yaml"
    sweep_config.write_text(yaml.safe_dump(raw, sort_keys=True), encoding="utf-8")

    sweep_out = tmp_path / "sweep_out"
    base = ["--config", str(sweep_config), "--out", str(sweep_out)]
    assert cli_main(["train", *base]) == 0
    assert cli_main(["sweep", *base, "--truth", str(art.truth_path)]) == 0
    with open(sweep_out / "alpha_sweep.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["alpha"]) for r in rows] == alphas  # one row per alpha

    # every row must reproduce an independent single-alpha pipeline run
    for i, row in enumerate(rows):
        solo_raw = dict(raw)
        solo_raw["loss"] = dict(raw["loss"], alpha=float(row["alpha"]))
        solo_config = art.out_dir / f"solo_config_{i}.yaml"
        solo_config.write_text(
            yaml.safe_dump(solo_raw, sort_keys=True), encoding="utf-8"
        )
        solo_out = tmp_path / f"solo_out_{i}"
        solo = ["--config", str(solo_config), "--out", str(solo_out)]
        assert cli_main(["train", *solo]) == 0
        assert cli_main(["match", *solo]) == 0
        assert cli_main(["eval", *solo, "--truth", str(art.truth_path)]) == 0
        with open(solo_out / "metrics.json", encoding="utf-8") as fh:
            metrics = json.load(fh)
        for field in ("rmse", "smape", "smape_percent", "cpc"):
            assert float(row[field]) == metrics[field], (row["alpha"], field)
    # the rmse-vs-alpha shape is reported for inspection, never asserted
    print(
        "[acceptance] alpha sweep rmse profile:",
        [(r["alpha"], r["rmse"]) for r in rows],
    )
    _gate("alpha sweep machinery", started, None)
