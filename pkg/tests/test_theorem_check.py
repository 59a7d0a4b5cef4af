"""Tests for the ladder runner and its classification."""

import pytest

from cli.theorem_check import TheoremCheckConfig, classify, theorem_check
from core.config import AnalysisConfig, EstimatorConfig


class TestClassify:
    def test_flat(self):
        assert classify([0.0, 0.0, 0.0])[0] == "bounded"

    def test_rounding_residue_is_flat(self):
        assert classify([1e-17, 4e-17, 2e-17])[0] == "bounded"

    def test_within_factor(self):
        label, slope = classify([1.0, 1.2, 1.1])
        assert label == "bounded"
        assert slope == pytest.approx(0.05)

    def test_growing(self):
        assert classify([1.0, 2.0, 3.0, 4.0])[0] == "growing"

    def test_noisy(self):
        assert classify([1.0, 3.0, 1.5])[0] == "inconclusive"

    def test_single_value(self):
        assert classify([2.0]) == ("bounded", None)


class TestLadders:
    def test_labels(self):
        config = TheoremCheckConfig(sets=["lipschitz", "bpli", "cantor"], sizes=[64],
                                    gens=[1, 2])
        labels = [label for label, _ in config.ladders()]
        assert labels == ["lipschitz(L=0.5)", "lipschitz(L=1)", "lipschitz(L=2)",
                          "bpli(theta=0.5)", "cantor"]
        assert dict(config.ladders())["cantor"] == [(1, [1]), (2, [2])]

    def test_unknown_set(self):
        with pytest.raises(ValueError):
            TheoremCheckConfig(sets=["torus"])


class TestRun:
    @pytest.fixture(scope="class")
    def summary(self):
        analysis = AnalysisConfig(P1=2, k_max=3, estimator=EstimatorConfig.exact())
        config = TheoremCheckConfig(sets=["circle", "bpli"], sizes=[48, 64],
                                    analysis=analysis)
        return theorem_check(config)

    def test_every_step_recorded(self, summary):
        assert set(summary.sets) == {"circle", "bpli(theta=0.5)"}
        for entry in summary.sets.values():
            assert [s["ladder"] for s in entry["steps"]] == [48, 64]
            assert entry["classification"] in ("bounded", "growing", "inconclusive")

    def test_cube_ratio_covers_the_root(self, summary):
        for entry in summary.sets.values():
            for step in entry["steps"]:
                assert step["cube_ratio"] >= 0
                assert step["methods"]["mc"] == 0

    def test_labelled_extras(self, summary):
        circle = summary.sets["circle"]["steps"][0]
        bpli = summary.sets["bpli(theta=0.5)"]["steps"][0]
        assert circle["dist_ratio"] is None
        assert bpli["dist_ratio"] > 0
        assert bpli["restricted_ratio"] is not None

    def test_ball_and_cube_pairs(self, summary):
        for entry in summary.sets.values():
            for step in entry["steps"]:
                pairs = step["pairs"]
                assert 2 <= len(pairs) <= 6 and len(pairs) % 2 == 0
                assert step["ball_ratio"] == max(p["ball_ratio"] for p in pairs)
                factors = [p["ball_to_cube"] for p in pairs if p["ball_to_cube"] is not None]
                assert all(f >= 1 for f in factors)
                assert step["ball_to_cube"] == (max(factors) if factors else None)

    def test_packing_lemma_on_alpha(self, summary):
        assert summary.sets["circle"]["steps"][0]["jns"] is None
        for step in summary.sets["bpli(theta=0.5)"]["steps"]:
            jns = step["jns"]
            assert jns["N"] == pytest.approx(2 * jns["C"])
            assert jns["eta"] == 0.25
            assert jns["hypothesis_holds"] and jns["pass"]
            assert step["enlarged_ratio"] >= 0

    def test_scale_rows(self, summary):
        steps = {(row[0], row[1]) for row in summary.scale_rows}
        assert ("circle", 48) in steps
        assert all(len(row) == 6 for row in summary.scale_rows)

    def test_to_dict(self, summary):
        data = summary.to_dict()
        assert data["config"]["P1"] == 2
        assert data["config"]["exact_cutoff"] is None
