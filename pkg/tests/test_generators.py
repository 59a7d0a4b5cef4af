"""Tests for the reference point sets."""

import math

import numpy as np
import pytest

from core.cubes import build_filtration, build_nets
from core.generators import (
    GENERATOR_KINDS,
    bpli_resolution,
    check_big_piece,
    gen_bpli_union,
    gen_circle,
    gen_four_corner_cantor,
    gen_koch,
    gen_lipschitz_graph,
    gen_segment,
    generator_usage,
    make_set,
)


class TestSegmentAndCircle:
    def test_segment(self):
        space = gen_segment(128)
        assert space.n == 128
        assert space.total_mass == pytest.approx(1.0, rel=1e-12)
        assert space.diameter == pytest.approx(1.0)

    def test_circle_mass(self):
        assert gen_circle(100).total_mass == pytest.approx(1.0, rel=1e-12)

    def test_circle_diameter_even(self):
        assert gen_circle(64).diameter == pytest.approx(1.0 / math.pi, rel=1e-12)

    def test_circle_on_radius(self):
        space = gen_circle(30)
        np.testing.assert_allclose(np.hypot(*space.coords.T), 1.0 / (2 * math.pi), rtol=1e-12)

    @pytest.mark.parametrize("builder, n", [(gen_segment, 1), (gen_circle, 2)])
    def test_too_few(self, builder, n):
        with pytest.raises(ValueError):
            builder(n)


class TestLipschitzGraph:
    @pytest.mark.parametrize("L", [0.0, 0.5, 2.0])
    def test_slopes_bounded(self, L):
        space = gen_lipschitz_graph(400, L, seed=3)
        x, y = space.coords.T
        order = np.argsort(x)
        dx, dy = np.diff(x[order]), np.diff(y[order])
        assert np.all(np.abs(dy) <= L * dx + 1e-12)

    @pytest.mark.parametrize("L", [0.5, 2.0])
    def test_lipschitz_on_every_pair(self, L):
        x, y = gen_lipschitz_graph(300, L, seed=4).coords.T
        dx = np.abs(np.subtract.outer(x, x))
        dy = np.abs(np.subtract.outer(y, y))
        assert np.all(dy <= L * dx + 1e-12)

    def test_spans_unit_interval(self):
        x = gen_lipschitz_graph(200, 1.0, seed=1).coords[:, 0]
        assert x.min() == pytest.approx(0.0, abs=1e-12)
        assert x.max() == pytest.approx(1.0, abs=1e-12)

    def test_mass_is_arclength(self):
        space = gen_lipschitz_graph(500, 1.0, seed=2)
        steps = np.hypot(*np.diff(space.coords, axis=0).T)
        assert space.total_mass == pytest.approx(steps.sum(), rel=1e-3)
        assert space.total_mass >= 1.0

    def test_flat_graph_is_segment(self):
        space = gen_lipschitz_graph(50, 0.0)
        assert np.all(space.coords[:, 1] == 0.0)
        assert space.total_mass == pytest.approx(1.0, rel=1e-12)

    def test_seeded(self):
        a = gen_lipschitz_graph(64, 1.0, seed=5).coords
        b = gen_lipschitz_graph(64, 1.0, seed=5).coords
        c = gen_lipschitz_graph(64, 1.0, seed=6).coords
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_negative_L(self):
        with pytest.raises(ValueError):
            gen_lipschitz_graph(10, -1.0)


class TestKoch:
    @pytest.mark.parametrize("level", [0, 1, 3])
    def test_point_count(self, level):
        assert gen_koch(level).n == 4**level + 1

    def test_mass_grows_by_four_thirds(self):
        assert gen_koch(2).total_mass == pytest.approx((4.0 / 3.0) ** 2, rel=1e-12)

    def test_endpoints(self):
        coords = gen_koch(2).coords
        np.testing.assert_allclose(coords[0], [0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(coords[-1], [1.0, 0.0], atol=1e-15)

    def test_first_level_peak(self):
        coords = gen_koch(1).coords
        np.testing.assert_allclose(coords[2], [0.5, math.sqrt(3) / 6], atol=1e-12)

    def test_bad_angle(self):
        with pytest.raises(ValueError):
            gen_koch(2, angle=math.pi / 2)


class TestCantor:
    def test_generation_one(self):
        space = gen_four_corner_cantor(1)
        assert sorted(map(tuple, space.coords.tolist())) == [
            (0.125, 0.125), (0.125, 0.875), (0.875, 0.125), (0.875, 0.875)]
        assert space.weights.tolist() == [0.25] * 4

    def test_generation_three(self):
        space = gen_four_corner_cantor(3)
        assert space.n == 64
        assert space.total_mass == pytest.approx(1.0, rel=1e-12)
        assert space.diameter < math.sqrt(2)

    def test_generation_zero(self):
        with pytest.raises(ValueError):
            gen_four_corner_cantor(0)


class TestBigPieceUnion:
    def test_theta_one_is_the_curve(self):
        space, E, Et = gen_bpli_union(1.0, 64)
        assert space.n == 64
        assert np.array_equal(E, Et)
        assert space.total_mass == pytest.approx(1.0, rel=1e-12)

    def test_half_theta_masses(self):
        space, E, Et = gen_bpli_union(0.5, 512, seed=1)
        assert E.all()
        assert Et.sum() == 256
        assert space.set_mass(Et) == pytest.approx(1.0, rel=1e-12)
        assert space.total_mass == pytest.approx(2.0, rel=1e-12)

    def test_garbage_hugs_the_curve(self):
        space, _, Et = gen_bpli_union(0.5, 512, seed=2)
        spacing = 1.0 / (Et.sum() - 1)
        garbage = space.coords[~Et]
        np.testing.assert_allclose(garbage[:, 1], spacing, rtol=1e-12)
        assert garbage[:, 0].min() > 0 and garbage[:, 0].max() < 1

    def test_quarter_theta_rows(self):
        space, _, Et = gen_bpli_union(0.25, 1024, seed=0)
        spacing = 1.0 / (Et.sum() - 1)
        heights = np.unique(np.round(space.coords[~Et, 1] / spacing).astype(int))
        assert heights.tolist() == [1, 2, 3]
        assert space.total_mass == pytest.approx(4.0, rel=1e-12)

    def test_garbage_follows_seed(self):
        a = gen_bpli_union(0.5, 128, seed=1)[0].coords
        b = gen_bpli_union(0.5, 128, seed=2)[0].coords
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("theta, n", [(0.5, 1024), (0.25, 1024)])
    def test_big_piece_above_resolution(self, theta, n):
        space, E, Et = gen_bpli_union(theta, n, seed=0)
        f = build_filtration(build_nets(space, seed=0))
        resolved = [c for c in f if c.nominal_diam >= bpli_resolution(theta, n)]
        assert len({c.scale for c in resolved}) >= 4
        held = [check_big_piece(space, E, Et, c, theta / 2) for c in resolved]
        assert sum(held) >= 0.95 * len(resolved)
        assert check_big_piece(space, E, Et, f.root, theta)

    def test_big_piece_fails_without_curve(self, segment):
        f = build_filtration(build_nets(segment, k_min=0, k_max=0))
        nothing = np.zeros(segment.n, dtype=bool)
        assert not check_big_piece(segment, segment.all_points(), nothing, f.root, 0.1)

    @pytest.mark.parametrize("theta", [0.0, 1.5])
    def test_bad_theta(self, theta):
        with pytest.raises(ValueError):
            gen_bpli_union(theta, 64)


class TestMakeSet:
    def test_kinds(self):
        assert set(GENERATOR_KINDS) == {"segment", "circle", "lipschitz", "koch", "cantor",
                                        "bpli"}

    def test_string_parameters(self):
        made = make_set("koch", ["2"])
        assert made.kind == "koch"
        assert made.space.n == 17
        assert not made.labelled

    def test_labelled(self):
        made = make_set("bpli", ["0.5", "256", "3"])
        assert made.labelled
        assert made.E_labels.shape == (made.space.n,)

    def test_defaults_fill_in(self):
        assert make_set("lipschitz", [64]).space.n == 64

    def test_usage(self):
        assert generator_usage("lipschitz") == "lipschitz n L seed"

    @pytest.mark.parametrize("kind, params", [
        ("triangle", ["3"]), ("segment", []), ("segment", ["ten"]), ("cantor", ["1", "2"]),
    ])
    def test_bad_input(self, kind, params):
        with pytest.raises(ValueError):
            make_set(kind, params)
