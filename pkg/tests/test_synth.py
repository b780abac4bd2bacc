import filecmp

import numpy as np
import pytest

from odflow import ScenarioSpec, Vocabulary, generate_scenario
from odflow.dataset import ingest_trips
from odflow.features import load_poi_features
from odflow.synth import cell_support, support_bits


class TestSupports:
    def test_support_bits(self):
        assert support_bits(1) == 1
        assert support_bits(3) == 2
        assert support_bits(7) == 3
        assert support_bits(8) == 4
        assert support_bits(36) == 6

    def test_supports_are_unique(self):
        n = 36
        seen = {cell_support(cell, n) for cell in range(n)}
        assert len(seen) == n

    def test_support_encodes_cell_plus_one(self):
        # cell 0 -> value 1 -> bit 0 set
        assert cell_support(0, 36) == (0,)
        # cell 4 -> value 5 -> bits 0 and 2
        assert cell_support(4, 36) == (0, 2)
        # cell 6 -> value 7 -> bits 0, 1, 2
        assert cell_support(6, 36) == (0, 1, 2)


class TestGenerateScenario:
    def _small_spec(self, **overrides):
        base = dict(
            n_rows=3,
            n_cols=4,
            hours=(8, 12, 18),
            trips_per_key=2,
            n_target_origins=60,
            noise=0.0,
            seed=5,
        )
        base.update(overrides)
        return ScenarioSpec(**base)

    def test_file_inventory(self, tmp_path):
        art = generate_scenario(self._small_spec(), tmp_path / "scn")
        for path in (
            art.config_path,
            art.vocabulary_path,
            art.source_pois_path,
            art.source_trips_path,
            art.target_pois_path,
            art.target_origins_path,
            art.truth_path,
        ):
            assert path.exists(), path

    def test_same_seed_is_byte_identical(self, tmp_path):
        a = generate_scenario(self._small_spec(), tmp_path / "a")
        b = generate_scenario(self._small_spec(), tmp_path / "b")
        for pa, pb in [
            (a.vocabulary_path, b.vocabulary_path),
            (a.source_pois_path, b.source_pois_path),
            (a.source_trips_path, b.source_trips_path),
            (a.target_pois_path, b.target_pois_path),
            (a.target_origins_path, b.target_origins_path),
            (a.truth_path, b.truth_path),
        ]:
            assert filecmp.cmp(pa, pb, shallow=False), pa.name

    def test_different_seed_differs(self, tmp_path):
        a = generate_scenario(self._small_spec(), tmp_path / "a")
        b = generate_scenario(self._small_spec(seed=6), tmp_path / "b")
        assert not filecmp.cmp(a.source_trips_path, b.source_trips_path, shallow=False)

    def test_truth_total_matches_origin_count(self, tmp_path):
        art = generate_scenario(self._small_spec(), tmp_path / "scn")
        assert art.truth.total() == 60
        assert art.truth.n_cells == 12

    def test_noiseless_trips_follow_the_rule(self, tmp_path):
        art = generate_scenario(self._small_spec(), tmp_path / "scn")
        trips, report = ingest_trips(art.source_trips_path, art.grid_source)
        assert report.n_malformed == 0 and report.n_out_of_bounds == 0
        assert len(trips) == 12 * 3 * 2  # cells x hours x reps
        for t in trips:
            assert t.destination == art.rule_destination(t.origin, t.start_time.hour)

    def test_poi_supports_recoverable_from_csv(self, tmp_path):
        art = generate_scenario(self._small_spec(), tmp_path / "scn")
        vocab = Vocabulary.from_file(art.vocabulary_path)
        features, report = load_poi_features(art.source_pois_path, art.grid_source, vocab)
        assert report.n_malformed == 0
        assert report.n_out_of_bounds == 0
        for cell in range(art.grid_source.n_cells):
            got = tuple(int(k) for k in np.flatnonzero(features.counts[cell]))
            assert got == cell_support(cell, 12)

    def test_permutation_is_column_mirror(self, tmp_path):
        art = generate_scenario(self._small_spec(), tmp_path / "scn")
        perm = art.permutation
        n_cols = 4
        for cell, target in enumerate(perm):
            row, col = divmod(cell, n_cols)
            assert target == row * n_cols + (n_cols - 1 - col)
        # involution
        assert [perm[perm[c]] for c in range(len(perm))] == list(range(len(perm)))

    def test_target_mirrors_source_supports(self, tmp_path):
        art = generate_scenario(self._small_spec(), tmp_path / "scn")
        vocab = Vocabulary.from_file(art.vocabulary_path)
        src, _ = load_poi_features(art.source_pois_path, art.grid_source, vocab)
        tgt, _ = load_poi_features(art.target_pois_path, art.grid_target, vocab)
        for cell in range(art.grid_source.n_cells):
            mirrored = art.permutation[cell]
            assert np.array_equal(
                (src.counts[cell] > 0), (tgt.counts[mirrored] > 0)
            )

    def test_spec_validation(self):
        with pytest.raises(Exception):
            ScenarioSpec(n_rows=0)
        with pytest.raises(Exception):
            ScenarioSpec(noise=1.5)
        with pytest.raises(Exception):
            ScenarioSpec(trips_per_key=0)
        with pytest.raises(Exception):
            ScenarioSpec(hours=())
