"""
Triangle-excess triple sums and the Carleson sums built from them.

For a point set S with weights w the raw triple sum is

    T(S) = sum over ordered (x1, x2, x3) in S^3 of delta(x1, x2, x3) w(x1) w(x2) w(x3)

(diagonal triples included; they contribute zero). beta3 of a cube is
T(members) / s^3 with s the cube's nominal diameter. Sets up to
``exact_cutoff`` points are summed exactly; larger sets are estimated by
Monte Carlo with triples drawn proportionally to mass.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from core.config import EXACT_ALWAYS, EstimatorConfig
from core.cubes import BallFamily, Cube, Filtration, cubes_in_ball
from core.errors import EstimatorError
from core.jns import JNSInstance
from core.metric_space import IndexSet, MetricMeasureSpace, as_index_set
from core.workers import ParallelEvaluator
from utils.rng import substream

logger = logging.getLogger(__name__)

# Upper bound on elements in one (rows, m, m) excess block.
_BLOCK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class CubeTerm:
    """One summand of a Carleson sum."""
    beta3: float
    method: str  # "exact" or "mc"
    stderr: float = 0.0
    scale: int = 0
    size: int = 0


@dataclass
class CarlesonReport:
    per_cube: dict  # id -> CubeTerm, in evaluation order
    per_scale: dict  # scale -> sum of beta3
    total: float
    normalizer: float
    config: EstimatorConfig
    kind: str = "cubes"
    top: Optional[str] = None
    ratio: float = field(init=False)

    def __post_init__(self):
        if self.normalizer > 0:
            self.ratio = self.total / self.normalizer
        else:
            self.ratio = 0.0 if self.total == 0 else math.inf

    def scale_rows(self) -> list[tuple[int, int, float, float]]:
        """(scale, count, sum, normalized_sum) rows for the per-scale CSV."""
        counts: dict[int, int] = {}
        for term in self.per_cube.values():
            counts[term.scale] = counts.get(term.scale, 0) + 1
        rows = []
        for k in sorted(self.per_scale):
            total = self.per_scale[k]
            norm = total / self.normalizer if self.normalizer > 0 else 0.0
            rows.append((k, counts.get(k, 0), total, norm))
        return rows

    def to_dict(self) -> dict:
        config = asdict(self.config)
        if config["exact_cutoff"] >= EXACT_ALWAYS:
            config["exact_cutoff"] = None
        return {
            "kind": self.kind,
            "top": self.top,
            "per_cube": {
                cid: {"beta3": t.beta3, "method": t.method, "stderr": t.stderr,
                      "scale": t.scale, "size": t.size}
                for cid, t in self.per_cube.items()
            },
            "per_scale": {str(k): v for k, v in sorted(self.per_scale.items())},
            "total": self.total,
            "normalizer": self.normalizer,
            "ratio": self.ratio,
            "config": config,
        }


@dataclass(frozen=True)
class ApproxDecomposition:
    """Both sides of the single-cube decomposition inequality."""
    lhs: float
    dist_term: float
    enlarged_term: float
    ratio: float


# =============================================================================
# Triple-sum engine
# =============================================================================

def _exact_triple_sum(dist: np.ndarray, w: np.ndarray) -> float:
    """
    Exact T(S) from the distance block ``dist`` of S.

    For a fixed first point with distance row r, the excess of (x1, xj, xk) is
    min(r_j + r_k - d_jk, d_jk - |r_j - r_k|): the first term puts x1 in the
    middle, the second is the better of the other two choices.
    """
    m = w.shape[0]
    rows = max(1, _BLOCK_ELEMENTS // (m * m))
    partials: list[float] = []
    for start in range(0, m, rows):
        r = dist[start:start + rows]
        rj = r[:, :, None]
        rk = r[:, None, :]
        through_first = rj + rk - dist[None, :, :]
        through_other = dist[None, :, :] - np.abs(rj - rk)
        delta = np.maximum(np.minimum(through_first, through_other), 0.0)
        inner = np.einsum("ijk,j,k->i", delta, w, w)
        partials.extend((w[start:start + rows] * inner).tolist())
    return math.fsum(partials)


def _mc_triple_sum(space: MetricMeasureSpace, idx: np.ndarray, config: EstimatorConfig,
                   key: str) -> tuple[float, float]:
    """Unbiased estimate of T(S) and its standard error; triples drawn with p ∝ w."""
    w = space.weights[idx]
    mass = math.fsum(w)
    p = w / mass
    rng = substream(config.seed, "mc", key)

    means, last = [], None
    for _ in range(config.repeats):
        draws = rng.choice(idx, size=(3, config.mc_samples), p=p)
        last = space.excess_delta_many(draws[0], draws[1], draws[2])
        means.append(float(last.mean()))

    scale = mass**3
    estimate = scale * math.fsum(means) / len(means)
    if config.repeats >= 2:
        stderr = scale * float(np.std(means, ddof=1)) / math.sqrt(config.repeats)
    elif config.mc_samples >= 2:
        stderr = scale * float(last.std(ddof=1)) / math.sqrt(config.mc_samples)
    else:
        stderr = math.inf
    return estimate, stderr


def triple_sum(space: MetricMeasureSpace, subset: IndexSet,
               config: Optional[EstimatorConfig] = None,
               key: str = "") -> tuple[float, str, float]:
    """
    T(S) for a point set, as (value, method, stderr).

    ``key`` names the Monte Carlo stream (normally the cube id), so the
    estimate does not depend on evaluation order.
    """
    config = config or EstimatorConfig()
    idx = as_index_set(subset)
    if idx.size == 0:
        raise EstimatorError("triple sum over an empty set")
    if idx.size < 3:
        # every ordered triple repeats a point
        return 0.0, "exact", 0.0
    if idx.size <= config.exact_cutoff:
        return _exact_triple_sum(space.pairwise(idx), space.weights[idx]), "exact", 0.0
    value, stderr = _mc_triple_sum(space, idx, config, key)
    return value, "mc", stderr


# =============================================================================
# Per-cube functionals
# =============================================================================

def evaluate_cube(space: MetricMeasureSpace, cube: Cube,
                  config: Optional[EstimatorConfig] = None) -> CubeTerm:
    """beta3 of a cube with its method and standard error."""
    if cube.size == 0:
        raise EstimatorError(f"cube {cube.id} is empty")
    value, method, stderr = triple_sum(space, cube.members, config, key=cube.id)
    s3 = cube.nominal_diam**3
    return CubeTerm(beta3=value / s3, method=method, stderr=stderr / s3,
                    scale=cube.scale, size=cube.size)


def beta3_cube(space: MetricMeasureSpace, cube: Cube,
               config: Optional[EstimatorConfig] = None) -> float:
    """nominal_diam(Q)^-3 times the triple excess sum over members(Q)."""
    return evaluate_cube(space, cube, config).beta3


def enlarged_domain(space: MetricMeasureSpace, cube: Cube, domain: IndexSet,
                    A_prime: float) -> np.ndarray:
    """{x in domain : dist(x, members(Q)) <= A' nominal_diam(Q)}."""
    dom = as_index_set(domain)
    if dom.size == 0 or cube.size == 0:
        return dom
    reach = space.dist_to_set_many(dom, cube.members)
    return dom[reach <= A_prime * cube.nominal_diam]


def _evaluate_enlarged(space: MetricMeasureSpace, cube: Cube, domain: IndexSet,
                       A_prime: float, config: Optional[EstimatorConfig]) -> CubeTerm:
    if A_prime < 0:
        raise ValueError(f"A_prime must be >= 0, got {A_prime}")
    eff = enlarged_domain(space, cube, domain, A_prime)
    if eff.size == 0:
        return CubeTerm(beta3=0.0, method="exact", scale=cube.scale, size=0)
    value, method, stderr = triple_sum(space, eff, config, key=f"{cube.id}|enlarged|{A_prime!r}")
    s3 = cube.nominal_diam**3
    return CubeTerm(beta3=value / s3, method=method, stderr=stderr / s3,
                    scale=cube.scale, size=int(eff.size))


def beta3_enlarged(space: MetricMeasureSpace, cube: Cube, domain: IndexSet, A_prime: float,
                   config: Optional[EstimatorConfig] = None) -> float:
    """The beta3 triple sum over the A'-enlargement of Q inside ``domain``."""
    return _evaluate_enlarged(space, cube, domain, A_prime, config).beta3


def alpha_of_cube(space: MetricMeasureSpace, cube: Cube, E_set: IndexSet,
                  config: Optional[EstimatorConfig] = None) -> float:
    """Triple sum over {x in E : dist(x, Q) <= diam(Q)} normalized by diam(Q)^4."""
    return beta3_enlarged(space, cube, E_set, 1.0, config) / cube.nominal_diam


def approx_decomposition_check(space: MetricMeasureSpace, cube: Cube, Etilde: IndexSet,
                               A_prime: float = 1.0,
                               config: Optional[EstimatorConfig] = None
                               ) -> ApproxDecomposition:
    """
    Compare beta3(Q) with the distance term plus the enlarged reference term.

    ratio = lhs / (dist_term + enlarged_term); 0 when lhs is 0, infinite when
    only the denominator vanishes.
    """
    ref = as_index_set(Etilde)
    if cube.size == 0 or ref.size == 0:
        raise EstimatorError("decomposition needs a non-empty cube and reference set")

    lhs = beta3_cube(space, cube, config)
    dist = space.dist_to_set_many(cube.members, ref)
    dist_term = math.fsum(dist * space.weights[cube.members]) / cube.nominal_diam
    enlarged_term = beta3_enlarged(space, cube, ref, A_prime, config)

    denom = dist_term + enlarged_term
    if lhs == 0:
        ratio = 0.0
    elif denom == 0:
        ratio = math.inf
    else:
        ratio = lhs / denom
    return ApproxDecomposition(lhs=lhs, dist_term=dist_term,
                               enlarged_term=enlarged_term, ratio=ratio)


# =============================================================================
# Carleson sums
# =============================================================================

def _ordered(cubes: Iterable[Cube]) -> list[Cube]:
    return sorted(cubes, key=lambda c: (c.scale, c.center, c.id))


def _collect(terms: Sequence[tuple[str, CubeTerm]], normalizer: float,
             config: EstimatorConfig, kind: str, top: Optional[str]) -> CarlesonReport:
    per_cube = dict(terms)
    by_scale: dict[int, list[float]] = {}
    for _, term in terms:
        by_scale.setdefault(term.scale, []).append(term.beta3)
    per_scale = {k: math.fsum(v) for k, v in sorted(by_scale.items())}
    total = math.fsum(t.beta3 for _, t in terms)
    return CarlesonReport(per_cube=per_cube, per_scale=per_scale, total=total,
                          normalizer=normalizer, config=config, kind=kind, top=top)


def carleson_sum_cubes(space: MetricMeasureSpace, filtration: Filtration, Q0: Cube,
                       config: Optional[EstimatorConfig] = None,
                       evaluator: Optional[ParallelEvaluator] = None) -> CarlesonReport:
    """Sum of beta3 over every Q ⊆ Q0 in the tree, normalized by nominal_diam(Q0)."""
    config = config or EstimatorConfig()
    evaluator = evaluator or ParallelEvaluator()
    cubes = _ordered(filtration.descendants(Q0))
    terms = evaluator.map(lambda c: evaluate_cube(space, c, config), cubes)
    report = _collect([(c.id, t) for c, t in zip(cubes, terms)], Q0.nominal_diam,
                      config, "cubes", Q0.id)
    logger.info("Carleson sum under %s: %d cubes, total %.6g, ratio %.6g",
                Q0.id, len(cubes), report.total, report.ratio)
    return report


def subtree_ratio(report: CarlesonReport, filtration: Filtration, top: Cube) -> float:
    """
    Normalized total under ``top`` taken from a report over a larger tree.

    Equals ``carleson_sum_cubes(..., top).ratio`` for the same estimator
    settings since every term depends only on its own cube.
    """
    terms = [report.per_cube[c.id].beta3 for c in filtration.descendants(top)]
    return math.fsum(terms) / top.nominal_diam


def ball_cube_ratio(report: CarlesonReport, filtration: Filtration, x: int, r: float) -> float:
    """
    Cube-form counterpart of ``carleson_sum_balls(..., x, r).ratio``: beta3
    summed over ``cubes_in_ball(filtration, x, r)`` and normalized by r.
    ``report`` must cover every cube of the filtration.
    """
    terms = [report.per_cube[c.id].beta3 for c in cubes_in_ball(filtration, x, r)]
    return math.fsum(terms) / r


def carleson_sum_balls(space: MetricMeasureSpace, family: BallFamily, x: int, r: float,
                       config: Optional[EstimatorConfig] = None,
                       evaluator: Optional[ParallelEvaluator] = None) -> CarlesonReport:
    """
    Sum over family balls B whose points all lie in Ball(x, 2r) of the
    triple excess sum over B normalized by diam(B)^3 = (2 radius)^3.
    """
    if r <= 0 or r > space.diameter * (1 + 1e-12):
        raise ValueError(f"r must lie in (0, diameter], got {r}")
    config = config or EstimatorConfig()
    evaluator = evaluator or ParallelEvaluator()
    inside = space.distances_from(x) <= 2.0 * r

    chosen = []
    for ball in family:
        members = space.ball(ball.center, ball.radius)
        if bool(inside[members].all()):
            chosen.append((ball, members))

    def evaluate(entry) -> CubeTerm:
        ball, members = entry
        value, method, stderr = triple_sum(space, members, config, key=ball.id)
        d3 = ball.diam**3
        return CubeTerm(beta3=value / d3, method=method, stderr=stderr / d3,
                        scale=ball.scale, size=int(members.size))

    terms = evaluator.map(evaluate, chosen)
    report = _collect([(b.id, t) for (b, _), t in zip(chosen, terms)], float(r), config,
                      "balls", f"x={x},r={r:.6g}")
    logger.info("Ball-family sum at x=%d r=%.4g: %d balls, ratio %.6g",
                x, r, len(chosen), report.ratio)
    return report


def enlarged_carleson_sum(space: MetricMeasureSpace, filtration: Filtration, Q0: Cube,
                          domain: IndexSet, A_prime: float,
                          config: Optional[EstimatorConfig] = None,
                          evaluator: Optional[ParallelEvaluator] = None) -> CarlesonReport:
    """beta3_enlarged summed over Q ⊆ Q0, normalized by nominal_diam(Q0)."""
    config = config or EstimatorConfig()
    evaluator = evaluator or ParallelEvaluator()
    dom = as_index_set(domain)
    cubes = _ordered(filtration.descendants(Q0))
    terms = evaluator.map(lambda c: _evaluate_enlarged(space, c, dom, A_prime, config), cubes)
    return _collect([(c.id, t) for c, t in zip(cubes, terms)], Q0.nominal_diam, config,
                    "enlarged", Q0.id)


def restricted_carleson_sum(space: MetricMeasureSpace, filtration: Filtration, Q0: Cube,
                            Etilde: IndexSet, config: Optional[EstimatorConfig] = None,
                            evaluator: Optional[ParallelEvaluator] = None) -> CarlesonReport:
    """beta3 summed over the cubes Q ⊆ Q0 that meet ``Etilde``."""
    config = config or EstimatorConfig()
    evaluator = evaluator or ParallelEvaluator()
    marked = np.zeros(space.n, dtype=bool)
    marked[as_index_set(Etilde)] = True
    cubes = [c for c in _ordered(filtration.descendants(Q0)) if bool(marked[c.members].any())]
    terms = evaluator.map(lambda c: evaluate_cube(space, c, config), cubes)
    return _collect([(c.id, t) for c, t in zip(cubes, terms)], Q0.nominal_diam, config,
                    "restricted", Q0.id)


def dist_carleson_sum(space: MetricMeasureSpace, E_set: IndexSet, Etilde: IndexSet,
                      filtration: Filtration, Q1: Cube) -> float:
    """
    Sum over Q ⊆ Q1 meeting Etilde of nominal_diam(Q)^-1 times the
    mass-weighted distance to Etilde of the E-points of Q.
    """
    ref = as_index_set(Etilde)
    if ref.size == 0:
        raise EstimatorError("distance sum needs a non-empty reference set")
    e_idx = as_index_set(E_set)

    weighted = np.zeros(space.n)
    if e_idx.size:
        weighted[e_idx] = space.dist_to_set_many(e_idx, ref) * space.weights[e_idx]
    marked = np.zeros(space.n, dtype=bool)
    marked[ref] = True

    terms = [
        math.fsum(weighted[c.members]) / c.nominal_diam
        for c in _ordered(filtration.descendants(Q1))
        if bool(marked[c.members].any())
    ]
    return math.fsum(terms)


# =============================================================================
# Closing the argument: alpha on every cube and the JNS instance it feeds
# =============================================================================

def alpha_field(space: MetricMeasureSpace, filtration: Filtration, E_set: IndexSet,
                config: Optional[EstimatorConfig] = None,
                evaluator: Optional[ParallelEvaluator] = None) -> dict[str, float]:
    """alpha_of_cube on every cube of the filtration."""
    evaluator = evaluator or ParallelEvaluator()
    cubes = _ordered(filtration)
    e_idx = as_index_set(E_set)
    values = evaluator.map(lambda c: alpha_of_cube(space, c, e_idx, config), cubes)
    return {c.id: v for c, v in zip(cubes, values)}


def proof_instance(space: MetricMeasureSpace, filtration: Filtration, E_set: IndexSet,
                   theta: float, C: float, config: Optional[EstimatorConfig] = None,
                   evaluator: Optional[ParallelEvaluator] = None,
                   alpha: Optional[dict] = None) -> JNSInstance:
    """
    JNS instance with alpha from ``alpha_field``, N = 2C and eta = theta/2.

    A precomputed ``alpha`` (the field of the same filtration and E) is used as is.
    """
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")
    if alpha is None:
        alpha = alpha_field(space, filtration, E_set, config, evaluator)
    return JNSInstance(filtration=filtration, alpha=alpha, N=2.0 * C, eta=theta / 2.0)
