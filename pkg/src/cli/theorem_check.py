"""
End-to-end check of the Carleson estimate over ladders of generated sets.

For every set and ladder step we build the nets and the shifted filtrations,
then record the worst normalized cube-form total over the top cubes, the
ball-form total at a few (x, r) next to the cube-form total over the cubes in
the same ball, and for labelled sets the decomposition, distance, restricted
and enlarged sums plus a packing-lemma check of the alpha field. Each set is
then classified as bounded, growing or inconclusive from its cube-form ratios
along the ladder.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from core.carleson import (
    alpha_field,
    approx_decomposition_check,
    ball_cube_ratio,
    carleson_sum_balls,
    carleson_sum_cubes,
    dist_carleson_sum,
    enlarged_carleson_sum,
    proof_instance,
    restricted_carleson_sum,
    subtree_ratio,
)
from core.config import EXACT_ALWAYS, AnalysisConfig
from core.cubes import build_filtrations, build_nets, multiresolution_balls
from core.generators import GeneratedSet, make_set
from core.jns import packing_constant, verify_jns
from core.workers import ParallelEvaluator
from utils.rng import substream

logger = logging.getLogger(__name__)

SIZE_SETS = ("segment", "circle", "lipschitz", "bpli")
GENERATION_SETS = ("koch", "cantor")
THEOREM_SETS = SIZE_SETS + GENERATION_SETS

BOUNDED_FACTOR = 1.5
GROWTH_SLOPE = 0.1
# Normalized totals at or below this are rounding residue of flat sets.
ZERO_RATIO = 1e-12


@dataclass
class TheoremCheckConfig:
    sets: list = field(default_factory=list)
    sizes: list = field(default_factory=lambda: [256, 512])
    gens: list = field(default_factory=lambda: [2, 3, 4, 5])
    lipschitz_L: tuple = (0.5, 1.0, 2.0)
    bpli_theta: float = 0.5
    koch_angle: float = math.pi / 3
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def __post_init__(self):
        unknown = [s for s in self.sets if s not in THEOREM_SETS]
        if unknown:
            raise ValueError(f"unknown sets {unknown}; expected some of {', '.join(THEOREM_SETS)}")

    def ladders(self) -> list[tuple[str, list[tuple[int, list]]]]:
        """(set label, [(ladder value, generator parameters), ...]) per corpus entry."""
        seed = self.analysis.seed
        out = []
        for name in self.sets:
            if name == "segment" or name == "circle":
                out.append((name, [(n, [n]) for n in self.sizes]))
            elif name == "lipschitz":
                for L in self.lipschitz_L:
                    out.append((f"lipschitz(L={L:g})", [(n, [n, L, seed]) for n in self.sizes]))
            elif name == "bpli":
                out.append((f"bpli(theta={self.bpli_theta:g})",
                            [(n, [self.bpli_theta, n, seed]) for n in self.sizes]))
            elif name == "koch":
                out.append((name, [(g, [g, self.koch_angle]) for g in self.gens]))
            else:
                out.append((name, [(g, [g]) for g in self.gens]))
        return out


@dataclass
class StepResult:
    ladder: int
    n: int
    cube_ratio: float
    worst_Q0: Optional[str]
    ball_ratio: float
    ball_to_cube: Optional[float]  # worst agreement factor over the pairs, >= 1
    methods: dict
    pairs: list = field(default_factory=list)
    decomposition_max: Optional[float] = None
    dist_ratio: Optional[float] = None
    restricted_ratio: Optional[float] = None
    enlarged_ratio: Optional[float] = None
    jns: Optional[dict] = None


def _cutoff(value: int) -> Optional[int]:
    return None if value >= EXACT_ALWAYS else value


@dataclass
class TheoremCheckSummary:
    sets: dict  # label -> {"kind", "classification", "slope", "steps"}
    scale_rows: list  # (set, ladder, scale, count, sum, normalized_sum)
    config: TheoremCheckConfig

    def to_dict(self) -> dict:
        return {
            "sets": self.sets,
            "config": {
                "sizes": list(self.config.sizes),
                "gens": list(self.config.gens),
                "lipschitz_L": list(self.config.lipschitz_L),
                "bpli_theta": self.config.bpli_theta,
                "A": self.config.analysis.A,
                "A_prime": self.config.analysis.effective_A_prime,
                "P1": self.config.analysis.P1,
                "seed": self.config.analysis.seed,
                "exact_cutoff": _cutoff(self.config.analysis.estimator.exact_cutoff),
                "mc_samples": self.config.analysis.estimator.mc_samples,
            },
        }


def classify(ratios: list[float]) -> tuple[str, Optional[float]]:
    """
    "bounded" when the ratios stay within a factor 1.5 (all zero counts),
    "growing" when they increase with a fitted slope above a tenth of the
    first value per step, "inconclusive" otherwise. Returns the slope too.
    """
    if not ratios:
        return "bounded", None
    ratios = [0.0 if r <= ZERO_RATIO else r for r in ratios]
    slope = None
    if len(ratios) >= 2:
        slope = float(np.polyfit(np.arange(len(ratios)), np.asarray(ratios), 1)[0])
    top, bottom = max(ratios), min(ratios)
    if top == 0 or (bottom > 0 and top / bottom <= BOUNDED_FACTOR):
        return "bounded", slope
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    if increasing and slope is not None and slope > GROWTH_SLOPE * ratios[0]:
        return "growing", slope
    return "inconclusive", slope


def _test_points(generated: GeneratedSet, root_center: int, seed: int, label: str,
                 step: int) -> list[int]:
    rng = substream(seed, "theorem-check", label, step)
    extra = rng.choice(generated.space.n, size=2, replace=False).tolist()
    points = [root_center]
    points.extend(p for p in extra if p not in points)
    return points


def _agreement(ball: float, cube: float) -> Optional[float]:
    """max(ball/cube, cube/ball); None when either side is rounding residue."""
    if ball <= ZERO_RATIO or cube <= ZERO_RATIO:
        return None
    return max(ball / cube, cube / ball)


def _run_step(label: str, step: int, generated: GeneratedSet, config: TheoremCheckConfig,
              evaluator: ParallelEvaluator) -> tuple[StepResult, list]:
    analysis = config.analysis
    estimator = analysis.estimator
    space = generated.space

    hierarchy = build_nets(space, analysis.k_min, analysis.k_max, analysis.seed)
    filtrations = build_filtrations(hierarchy, analysis.P1, evaluator)

    cube_ratio, worst = -1.0, None
    methods = {"exact": 0, "mc": 0}
    rows = []
    first_report = None
    for f in filtrations:
        root = f.root
        report = carleson_sum_cubes(space, f, root, estimator, evaluator)
        for term in report.per_cube.values():
            methods[term.method] += 1
        if f.shift_index == 1:
            first_report = report
            rows = [(label, step) + row for row in report.scale_rows()]
        tops = [root] + f.at_scale(root.scale + 1) + f.at_scale(root.scale + 2)
        for top in tops:
            ratio = subtree_ratio(report, f, top)
            if ratio > cube_ratio:
                cube_ratio, worst = ratio, f"{f.shift_index}/{top.id}"

    family = multiresolution_balls(hierarchy, analysis.A)
    first = filtrations[0]
    ball_ratio = 0.0
    pairs = []
    for x in _test_points(generated, first.root.center, analysis.seed, label, step):
        for r in (space.diameter / 2.0, space.diameter / 4.0):
            ball = carleson_sum_balls(space, family, x, r, estimator, evaluator).ratio
            cube = ball_cube_ratio(first_report, first, x, r)
            ball_ratio = max(ball_ratio, ball)
            pairs.append({"x": x, "r": r, "ball_ratio": ball, "cube_ratio": cube,
                          "ball_to_cube": _agreement(ball, cube)})
    factors = [p["ball_to_cube"] for p in pairs if p["ball_to_cube"] is not None]

    result = StepResult(
        ladder=step,
        n=space.n,
        cube_ratio=cube_ratio,
        worst_Q0=worst,
        ball_ratio=ball_ratio,
        ball_to_cube=max(factors) if factors else None,
        methods=methods,
        pairs=pairs,
    )

    if generated.labelled:
        E_set, Etilde = generated.E_labels, generated.Etilde_labels
        root = first.root
        A_prime = analysis.effective_A_prime
        meeting = [c for c in first if bool(Etilde[c.members].any())]
        checks = evaluator.map(
            lambda c: approx_decomposition_check(space, c, Etilde, A_prime, estimator),
            meeting,
        )
        result.decomposition_max = max((d.ratio for d in checks), default=0.0)
        dist_total = dist_carleson_sum(space, E_set, Etilde, first, root)
        result.dist_ratio = dist_total / root.nominal_diam
        result.restricted_ratio = restricted_carleson_sum(space, first, root, Etilde, estimator,
                                                          evaluator).ratio
        result.enlarged_ratio = enlarged_carleson_sum(space, first, root, Etilde, A_prime,
                                                      estimator, evaluator).ratio
        result.jns = _proof_check(space, first, E_set, config.bpli_theta, estimator, evaluator)

    logger.info("%s step %d: n=%d cube ratio %.6g, ball ratio %.6g",
                label, step, space.n, cube_ratio, ball_ratio)
    return result, rows


def _proof_check(space, filtration, E_set, theta, estimator, evaluator) -> dict:
    """Feed alpha of the labelled set to the packing lemma with C its packing constant."""
    alpha = alpha_field(space, filtration, E_set, estimator, evaluator)
    C = max(packing_constant(filtration, alpha), ZERO_RATIO)
    instance = proof_instance(space, filtration, E_set, theta, C, estimator, evaluator,
                              alpha=alpha)
    report = verify_jns(instance, evaluator)
    return {"C": C, "N": instance.N, "eta": instance.eta, **report.to_dict()}


def theorem_check(config: TheoremCheckConfig,
                  evaluator: Optional[ParallelEvaluator] = None) -> TheoremCheckSummary:
    """Run every ladder of the corpus and classify each set."""
    evaluator = evaluator or ParallelEvaluator(config.analysis.threads)
    sets: dict = {}
    scale_rows: list = []
    for label, ladder in config.ladders():
        kind = label.split("(")[0]
        steps = []
        for step, params in ladder:
            generated = make_set(kind, params)
            result, rows = _run_step(label, step, generated, config, evaluator)
            steps.append(result)
            scale_rows.extend(rows)
        classification, slope = classify([s.cube_ratio for s in steps])
        sets[label] = {
            "kind": kind,
            "classification": classification,
            "slope": slope,
            "steps": [asdict(s) for s in steps],
        }
        logger.info("%s: %s", label, classification)
    return TheoremCheckSummary(sets=sets, scale_rows=scale_rows, config=config)
