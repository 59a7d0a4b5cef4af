"""Tests for the triple-sum engine and the Carleson sums."""

import itertools
import math

import numpy as np
import pytest

from core.carleson import (
    alpha_field,
    alpha_of_cube,
    approx_decomposition_check,
    ball_cube_ratio,
    beta3_cube,
    beta3_enlarged,
    carleson_sum_balls,
    carleson_sum_cubes,
    dist_carleson_sum,
    enlarged_carleson_sum,
    evaluate_cube,
    proof_instance,
    restricted_carleson_sum,
    subtree_ratio,
    triple_sum,
)
from core.config import EstimatorConfig
from core.cubes import (
    build_filtration,
    build_nets,
    cubes_in_ball,
    make_cube,
    multiresolution_balls,
)
from core.errors import EstimatorError
from core.generators import (
    gen_bpli_union,
    gen_circle,
    gen_koch,
    gen_lipschitz_graph,
    gen_segment,
)
from core.jns import packing_constant, verify_jns
from core.metric_space import MetricMeasureSpace
from core.workers import ParallelEvaluator


def _brute_force(space, members):
    w = space.weights
    return math.fsum(
        space.excess_delta(a, b, c) * w[a] * w[b] * w[c]
        for a, b, c in itertools.product(members, repeat=3)
    )


class TestTripleSum:
    def test_three_point_cube(self):
        space = MetricMeasureSpace.euclidean([[0, 0], [1, 1], [2, 0]], [1.0, 1.0, 1.0])
        cube = make_cube(space, 0, 0, [0, 1, 2], None, nominal_diam=4.0)
        expected = 6 * (2 * math.sqrt(2) - 2) / 64
        assert beta3_cube(space, cube) == pytest.approx(expected, rel=1e-12)

    def test_matches_brute_force(self, planar_cloud, exact):
        members = list(range(0, 30, 3))
        value, method, stderr = triple_sum(planar_cloud, members, exact)
        assert method == "exact"
        assert stderr == 0.0
        assert value == pytest.approx(_brute_force(planar_cloud, members), rel=1e-12)

    def test_small_sets_are_zero(self, planar_cloud):
        assert triple_sum(planar_cloud, [4, 9])[0] == 0.0
        assert triple_sum(planar_cloud, [4])[0] == 0.0

    def test_empty_set(self, planar_cloud):
        with pytest.raises(EstimatorError):
            triple_sum(planar_cloud, [])

    def test_collinear_is_zero(self, exact):
        space = gen_segment(50)
        value, _, _ = triple_sum(space, space.all_points(), exact)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_blocked_rows_agree(self, planar_cloud, exact, monkeypatch):
        import core.carleson as carleson

        members = planar_cloud.all_points()
        whole, _, _ = triple_sum(planar_cloud, members, exact)
        monkeypatch.setattr(carleson, "_BLOCK_ELEMENTS", planar_cloud.n**2 * 3)
        blocked, _, _ = triple_sum(planar_cloud, members, exact)
        assert blocked == pytest.approx(whole, rel=1e-12)

    def test_empty_cube(self, planar_cloud):
        cube = make_cube(planar_cloud, 0, 0, [], None)
        with pytest.raises(EstimatorError):
            beta3_cube(planar_cloud, cube)


class TestMonteCarlo:
    def test_calibration(self, planar_cloud):
        cube = make_cube(planar_cloud, 1, 0, range(40), None)
        exact_value = beta3_cube(planar_cloud, cube, EstimatorConfig.exact())
        hits = 0
        for seed in range(200):
            config = EstimatorConfig(exact_cutoff=1, mc_samples=2000, seed=seed)
            term = evaluate_cube(planar_cloud, cube, config)
            assert term.method == "mc"
            hits += abs(term.beta3 - exact_value) <= 3 * term.stderr
        assert hits >= 190

    def test_repeats_give_batch_error(self, planar_cloud):
        cube = make_cube(planar_cloud, 1, 0, range(40), None)
        config = EstimatorConfig(exact_cutoff=1, mc_samples=500, seed=2, repeats=4)
        term = evaluate_cube(planar_cloud, cube, config)
        assert term.stderr > 0
        assert math.isfinite(term.beta3)

    def test_deterministic_per_cube(self, planar_cloud):
        cube = make_cube(planar_cloud, 1, 0, range(40), None)
        config = EstimatorConfig(exact_cutoff=1, mc_samples=1000, seed=5)
        assert beta3_cube(planar_cloud, cube, config) == beta3_cube(planar_cloud, cube, config)

    def test_thread_count_does_not_change_report(self, planar_cloud, cloud_filtration):
        config = EstimatorConfig(exact_cutoff=10, mc_samples=500, seed=1)
        root = cloud_filtration.root
        one = carleson_sum_cubes(planar_cloud, cloud_filtration, root, config,
                                 ParallelEvaluator(1))
        four = carleson_sum_cubes(planar_cloud, cloud_filtration, root, config,
                                  ParallelEvaluator(4))
        assert one.to_dict() == four.to_dict()


class TestCarlesonSumCubes:
    def test_segment_is_flat(self, exact):
        space = gen_segment(64)
        f = build_filtration(build_nets(space, seed=0))
        report = carleson_sum_cubes(space, f, f.root, exact)
        assert report.total == pytest.approx(0.0, abs=1e-12)

    def test_circle_totals(self, circle, circle_filtration, exact):
        report = carleson_sum_cubes(circle, circle_filtration, circle_filtration.root, exact)
        assert report.total > 0
        assert report.ratio * report.normalizer == pytest.approx(report.total, rel=1e-12)
        assert math.fsum(report.per_scale.values()) == pytest.approx(report.total, rel=1e-12)
        assert len(report.per_cube) == len(circle_filtration)
        assert all(t.method == "exact" for t in report.per_cube.values())

    def test_scale_rows(self, circle, circle_filtration, exact):
        report = carleson_sum_cubes(circle, circle_filtration, circle_filtration.root, exact)
        rows = report.scale_rows()
        assert [r[0] for r in rows] == sorted(report.per_scale)
        assert sum(r[1] for r in rows) == len(circle_filtration)
        for k, _, total, normalized in rows:
            assert normalized == pytest.approx(total / report.normalizer)

    def test_to_dict(self, circle, circle_filtration, exact):
        data = carleson_sum_cubes(circle, circle_filtration, circle_filtration.root,
                                  exact).to_dict()
        assert data["config"]["exact_cutoff"] is None
        assert data["kind"] == "cubes"
        assert data["top"] == circle_filtration.root.id

    def test_subtree_ratio(self, circle, circle_filtration, exact):
        report = carleson_sum_cubes(circle, circle_filtration, circle_filtration.root, exact)
        assert subtree_ratio(report, circle_filtration, circle_filtration.root) == report.ratio
        child = circle_filtration.children_of(circle_filtration.root)[0]
        direct = carleson_sum_cubes(circle, circle_filtration, child, exact)
        assert subtree_ratio(report, circle_filtration, child) == pytest.approx(direct.ratio)


class TestEnlarged:
    def test_own_members_equal_plain(self, planar_cloud, cloud_filtration, exact):
        cube = cloud_filtration.at_scale(1)[0]
        plain = beta3_cube(planar_cloud, cube, exact)
        assert beta3_enlarged(planar_cloud, cube, cube.members, 2.0, exact) == plain

    def test_monotone_in_A_prime_and_domain(self, planar_cloud, cloud_filtration, exact):
        cube = cloud_filtration.at_scale(2)[0]
        everything = planar_cloud.all_points()
        half = everything[::2]
        values = [beta3_enlarged(planar_cloud, cube, everything, a, exact)
                  for a in (0.0, 0.5, 1.0, 2.0)]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(values, values[1:]))
        assert beta3_enlarged(planar_cloud, cube, half, 1.0, exact) <= values[2] * (1 + 1e-12)

    def test_empty_domain(self, planar_cloud, cloud_filtration, exact):
        cube = cloud_filtration.at_scale(2)[0]
        outside = np.setdiff1d(planar_cloud.all_points(), cube.members)
        assert beta3_enlarged(planar_cloud, cube, outside, 0.0, exact) == 0.0
        assert beta3_enlarged(planar_cloud, cube, [], 1.0, exact) == 0.0

    def test_negative_A_prime(self, planar_cloud, cloud_filtration):
        with pytest.raises(ValueError):
            beta3_enlarged(planar_cloud, cloud_filtration.root, [0, 1, 2], -1.0)

    def test_alpha_consistency(self, planar_cloud, cloud_filtration, exact):
        cube = cloud_filtration.at_scale(1)[0]
        E = planar_cloud.all_points()
        alpha = alpha_of_cube(planar_cloud, cube, E, exact)
        assert alpha * cube.nominal_diam == pytest.approx(
            beta3_enlarged(planar_cloud, cube, E, 1.0, exact), rel=1e-12)

    def test_enlarged_sum_dominates(self, planar_cloud, cloud_filtration, exact):
        root = cloud_filtration.root
        plain = carleson_sum_cubes(planar_cloud, cloud_filtration, root, exact)
        wide = enlarged_carleson_sum(planar_cloud, cloud_filtration, root,
                                     planar_cloud.all_points(), 2.0, exact)
        assert wide.kind == "enlarged"
        assert wide.total >= plain.total * (1 - 1e-12)


class TestDecomposition:
    def test_reference_covers_cube(self, planar_cloud, cloud_filtration, exact):
        cube = cloud_filtration.at_scale(1)[0]
        result = approx_decomposition_check(planar_cloud, cube, planar_cloud.all_points(), 1.0,
                                            exact)
        assert result.dist_term == 0.0
        assert result.lhs <= result.enlarged_term * (1 + 1e-12)
        assert result.ratio <= 1 + 1e-12

    def test_flat_cube_ratio_zero(self, exact):
        space = gen_segment(20)
        cube = make_cube(space, 0, 0, range(20), None)
        result = approx_decomposition_check(space, cube, [0, 19], 1.0, exact)
        assert result.lhs == pytest.approx(0.0, abs=1e-12)
        assert result.dist_term > 0

    def test_empty_reference(self, planar_cloud, cloud_filtration):
        with pytest.raises(EstimatorError):
            approx_decomposition_check(planar_cloud, cloud_filtration.root, [], 1.0)


class TestDistanceSum:
    def test_reference_everything(self, planar_cloud, cloud_filtration):
        all_points = planar_cloud.all_points()
        root = cloud_filtration.root
        assert dist_carleson_sum(planar_cloud, all_points, all_points,
                                 cloud_filtration, root) == 0.0

    def test_empty_reference(self, planar_cloud, cloud_filtration):
        with pytest.raises(EstimatorError):
            dist_carleson_sum(planar_cloud, planar_cloud.all_points(), [],
                              cloud_filtration, cloud_filtration.root)

    def test_geometric_bound_on_big_piece_union(self):
        space, E, Etilde = gen_bpli_union(0.5, 256, seed=0)
        f = build_filtration(build_nets(space, seed=0))
        root = f.root
        total = dist_carleson_sum(space, E, Etilde, f, root)
        assert 0 < total <= 16 * root.nominal_diam


class TestRestricted:
    def test_everything_marked(self, circle, circle_filtration, exact):
        root = circle_filtration.root
        full = carleson_sum_cubes(circle, circle_filtration, root, exact)
        restricted = restricted_carleson_sum(circle, circle_filtration, root,
                                             circle.all_points(), exact)
        assert restricted.total == full.total

    def test_subset_is_smaller(self, circle, circle_filtration, exact):
        root = circle_filtration.root
        full = carleson_sum_cubes(circle, circle_filtration, root, exact)
        restricted = restricted_carleson_sum(circle, circle_filtration, root, [0], exact)
        assert restricted.total <= full.total
        assert len(restricted.per_cube) == len(circle_filtration.chain(0))


class TestBalls:
    def test_segment_balls_flat(self, exact):
        space = gen_segment(48)
        family = multiresolution_balls(build_nets(space, seed=0), A=4.0)
        report = carleson_sum_balls(space, family, 0, 0.5, exact)
        assert report.kind == "balls"
        assert report.total == pytest.approx(0.0, abs=1e-12)
        assert len(report.per_cube) <= len(family)

    def test_radius_range(self, circle):
        family = multiresolution_balls(build_nets(circle, seed=0))
        with pytest.raises(ValueError):
            carleson_sum_balls(circle, family, 0, 2 * circle.diameter)
        with pytest.raises(ValueError):
            carleson_sum_balls(circle, family, 0, 0.0)

    def test_balls_are_inside(self, circle, exact):
        family = multiresolution_balls(build_nets(circle, seed=0))
        r = circle.diameter / 4
        report = carleson_sum_balls(circle, family, 3, r, exact)
        inside = set(circle.ball(3, 2 * r).tolist())
        by_id = {b.id: b for b in family}
        for bid in report.per_cube:
            ball = by_id[bid]
            assert set(circle.ball(ball.center, ball.radius).tolist()) <= inside

    def test_comparable_to_cube_form(self, exact):
        circle = gen_circle(256)
        hierarchy = build_nets(circle, seed=0)
        f = build_filtration(hierarchy)
        family = multiresolution_balls(hierarchy, A=4.0)
        root = f.root
        r = circle.diameter / 2
        balls = carleson_sum_balls(circle, family, root.center, r, exact)
        cubes = carleson_sum_cubes(circle, f, root, exact)
        assert 1 / 8 <= balls.ratio / cubes.ratio <= 8
        matched = ball_cube_ratio(cubes, f, root.center, r)
        assert 1 / 8 <= balls.ratio / matched <= 8

    def test_ball_cube_ratio_sums_cubes_in_ball(self, circle, circle_filtration, exact):
        report = carleson_sum_cubes(circle, circle_filtration, circle_filtration.root, exact)
        r = circle.diameter / 4
        inside = cubes_in_ball(circle_filtration, 5, r)
        expected = math.fsum(evaluate_cube(circle, c, exact).beta3 for c in inside) / r
        assert ball_cube_ratio(report, circle_filtration, 5, r) == pytest.approx(expected,
                                                                                  rel=1e-12)

    def test_whole_space_ball_is_the_root_sum(self, circle, circle_filtration, exact):
        root = circle_filtration.root
        report = carleson_sum_cubes(circle, circle_filtration, root, exact)
        r = circle.diameter / 2
        assert ball_cube_ratio(report, circle_filtration, root.center, r) == pytest.approx(
            report.total / r, rel=1e-12)


class TestProofInstance:
    def test_parameters(self, planar_cloud, cloud_filtration, exact):
        instance = proof_instance(planar_cloud, cloud_filtration, planar_cloud.all_points(),
                                  theta=0.5, C=3.0, config=exact)
        assert instance.N == 6.0
        assert instance.eta == 0.25
        assert set(instance.alpha) == {c.id for c in cloud_filtration}

    def test_alpha_field_nonnegative(self, planar_cloud, cloud_filtration, exact):
        field = alpha_field(planar_cloud, cloud_filtration, planar_cloud.all_points(), exact)
        assert all(v >= 0 for v in field.values())

    def test_precomputed_alpha(self, planar_cloud, cloud_filtration, exact):
        alpha = alpha_field(planar_cloud, cloud_filtration, planar_cloud.all_points(), exact)
        instance = proof_instance(planar_cloud, cloud_filtration, planar_cloud.all_points(),
                                  theta=0.5, C=1.0, config=exact, alpha=alpha)
        assert instance.alpha is alpha

    def test_packing_constant_closes_the_argument(self, planar_cloud, cloud_filtration, exact):
        E = planar_cloud.all_points()
        alpha = alpha_field(planar_cloud, cloud_filtration, E, exact)
        C = packing_constant(cloud_filtration, alpha)
        assert C > 0
        instance = proof_instance(planar_cloud, cloud_filtration, E, theta=1.0, C=C,
                                  config=exact, alpha=alpha)
        report = verify_jns(instance)
        assert report.hypothesis_holds
        assert report.pass_
        assert report.worst_ratio == pytest.approx(C, rel=1e-12)

    def test_bad_theta(self, planar_cloud, cloud_filtration):
        with pytest.raises(ValueError):
            proof_instance(planar_cloud, cloud_filtration, [0], theta=0.0, C=1.0)


def _root_report(space, config):
    f = build_filtration(build_nets(space, seed=0))
    return carleson_sum_cubes(space, f, f.root, config)


class TestInvariance:
    @pytest.fixture(scope="class")
    def graph(self):
        return gen_lipschitz_graph(200, 1.0, seed=1)

    @pytest.mark.parametrize("lam", [0.1, 7.3])
    def test_scaling(self, graph, lam):
        exact = EstimatorConfig.exact()
        scaled = MetricMeasureSpace.euclidean(lam * graph.coords, lam * graph.weights)
        base, grown = _root_report(graph, exact), _root_report(scaled, exact)
        assert grown.total == pytest.approx(lam * base.total, rel=1e-9)
        assert grown.ratio == pytest.approx(base.ratio, rel=1e-9)

    def test_rotation_and_translation(self, graph):
        exact = EstimatorConfig.exact()
        c, s = math.cos(0.7), math.sin(0.7)
        moved = graph.coords @ np.array([[c, s], [-s, c]]) + [3.0, -2.0]
        rigid = MetricMeasureSpace.euclidean(moved, graph.weights)
        assert _root_report(rigid, exact).total == pytest.approx(
            _root_report(graph, exact).total, rel=1e-9)


class TestKochContrast:
    def test_flat_angle_is_small(self, exact):
        flat = _root_report(gen_koch(4, angle=0.1), exact)
        spiky = _root_report(gen_koch(4), exact)
        assert flat.ratio < 0.1 * spiky.ratio

    def test_grows_with_level(self, exact):
        ratios = [_root_report(gen_koch(level), exact).ratio for level in (2, 3, 4)]
        assert ratios[0] < ratios[1] < ratios[2]
