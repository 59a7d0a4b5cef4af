"""
The John-Nirenberg-Stromberg packing lemma on a finite cube tree.

Given alpha >= 0 on every cube, the hypothesis asks that in every cube Q0 at
least an eta-fraction of the mass has vertical sum (alpha summed down the
chain of cubes containing the point, starting at Q0) at most N. The
conclusion is the packing bound

    sum over Q ⊆ Q0 of alpha(Q) mass(Q) <= (N / eta^2) mass(Q0).

Chains stop at the finest scale of the tree.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.cubes import Cube, Filtration
from core.errors import EstimatorError
from core.workers import ParallelEvaluator
from utils.rng import substream

logger = logging.getLogger(__name__)

STYLES = ("uniform", "sparse", "adversarial")

# Probability that the sparse generator stops at a cube on its way down.
_SPARSE_STOP = 0.3
# Halvings applied to a subtree before it is zeroed outright.
_MAX_HALVINGS = 200


@dataclass(frozen=True)
class JNSInstance:
    filtration: Filtration
    alpha: dict  # cube id -> value
    N: float
    eta: float

    def __post_init__(self):
        if not self.N > 0 or not math.isfinite(self.N):
            raise ValueError(f"N must be positive, got {self.N}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        missing = [c.id for c in self.filtration if c.id not in self.alpha]
        if missing:
            raise ValueError(f"alpha is missing on {len(missing)} cubes (first: {missing[0]})")
        bad = [cid for cid, v in self.alpha.items() if not (v >= 0 and math.isfinite(v))]
        if bad:
            raise ValueError(f"alpha must be finite and >= 0 (cube {bad[0]})")


@dataclass
class JNSReport:
    worst_ratio: float
    worst_Q0: Optional[str]
    bound: float
    pass_: bool
    hypothesis_holds: bool
    failing_cube: Optional[str] = None
    min_good_fraction: float = 1.0
    cubes_checked: int = 0

    def to_dict(self) -> dict:
        return {
            "worst_ratio": self.worst_ratio,
            "worst_Q0": self.worst_Q0,
            "bound": self.bound,
            "pass": self.pass_,
            "hypothesis_holds": self.hypothesis_holds,
            "failing_cube": self.failing_cube,
            "min_good_fraction": self.min_good_fraction,
            "cubes_checked": self.cubes_checked,
        }


def _ordered(filtration: Filtration) -> list[Cube]:
    return sorted(filtration, key=lambda c: (c.scale, c.center, c.id))


def _point_sums(instance: JNSInstance, Q0: Cube) -> np.ndarray:
    """Vertical sums of all points (indexed by point; only members of Q0 are meaningful)."""
    f = instance.filtration
    sums = np.zeros(f.space.n)
    running = {Q0.id: instance.alpha[Q0.id]}
    # pre-order: a child overwrites its parent's value on its own members
    for cube in f.descendants(Q0):
        if cube.id != Q0.id:
            running[cube.id] = running[cube.parent] + instance.alpha[cube.id]
        sums[cube.members] = running[cube.id]
    return sums


def vertical_sum(instance: JNSInstance, x: int, Q0: Cube) -> float:
    """alpha summed over the cubes containing x from Q0 down to the finest scale."""
    total = 0.0
    for cube in instance.filtration.chain(x, Q0):
        total += instance.alpha[cube.id]
    return total


def check_hypothesis(instance: JNSInstance, Q0: Cube) -> tuple[float, bool]:
    """(good mass fraction, fraction >= eta) for one top cube."""
    if Q0.size == 0 or Q0.mass <= 0:
        raise EstimatorError(f"cube {Q0.id} is empty")
    sums = _point_sums(instance, Q0)[Q0.members]
    good = Q0.members[sums <= instance.N]
    w = instance.filtration.space.weights
    fraction = math.fsum(w[good]) / Q0.mass
    return fraction, fraction >= instance.eta


def _packing_sums(f: Filtration, alpha: dict, top: Cube) -> dict[str, float]:
    """Bottom-up P(Q) = alpha(Q) mass(Q) + sum of P over the children, for Q ⊆ top."""
    packed: dict[str, float] = {}
    for cube in reversed(f.descendants(top)):
        parts = [alpha[cube.id] * cube.mass]
        parts.extend(packed[child] for child in cube.children)
        packed[cube.id] = math.fsum(parts)
    return packed


def packing_sum(instance: JNSInstance, Q0: Cube) -> float:
    """Sum over Q ⊆ Q0 of alpha(Q) mass(Q)."""
    return _packing_sums(instance.filtration, instance.alpha, Q0)[Q0.id]


def packing_constant(filtration: Filtration, alpha: dict) -> float:
    """
    Largest packing_sum(Q0) / mass(Q0) over the cubes of the tree.

    This is the mean vertical sum over the worst Q0, so at least half the
    mass of every cube has vertical sum at most twice this value.
    """
    packed: dict[str, float] = {}
    for root in filtration.roots:
        packed.update(_packing_sums(filtration, alpha, root))
    return max((packed[c.id] / c.mass for c in filtration if c.size and c.mass > 0),
               default=0.0)


def verify_jns(instance: JNSInstance,
               evaluator: Optional[ParallelEvaluator] = None) -> JNSReport:
    """
    Check the hypothesis on every cube, then the packing bound N/eta^2.

    If the hypothesis fails anywhere the report carries the first failing
    cube and ``pass_`` is False; the packing ratios are still measured.
    """
    evaluator = evaluator or ParallelEvaluator()
    f = instance.filtration
    cubes = [c for c in _ordered(f) if c.size and c.mass > 0]
    bound = instance.N / instance.eta**2

    fractions = evaluator.map(lambda c: check_hypothesis(instance, c), cubes)
    failing = next((c.id for c, (_, ok) in zip(cubes, fractions) if not ok), None)
    min_fraction = min((frac for frac, _ in fractions), default=1.0)

    packed: dict[str, float] = {}
    for root in f.roots:
        packed.update(_packing_sums(f, instance.alpha, root))

    worst_ratio, worst_id = 0.0, None
    for cube in cubes:
        ratio = packed[cube.id] / cube.mass
        if worst_id is None or ratio > worst_ratio:
            worst_ratio, worst_id = ratio, cube.id

    holds = failing is None
    report = JNSReport(
        worst_ratio=worst_ratio,
        worst_Q0=worst_id,
        bound=bound,
        pass_=holds and worst_ratio <= bound,
        hypothesis_holds=holds,
        failing_cube=failing,
        min_good_fraction=min_fraction,
        cubes_checked=len(cubes),
    )
    if not holds:
        logger.info("Hypothesis fails at %s", failing)
    logger.info("JNS worst ratio %.6g at %s (bound %.6g)", worst_ratio, worst_id, bound)
    return report


def stopping_time_decomposition(instance: JNSInstance, Q0: Cube) -> list[list[Cube]]:
    """
    Layers of stopping cubes below Q0.

    Under each cube R of a layer, the next layer takes the maximal cubes Q
    where the running sum of alpha from R's children down to Q first
    exceeds N. R's own alpha is left out of that sum.
    """
    f = instance.filtration
    layers = [[Q0]]
    while True:
        nxt: list[Cube] = []
        for R in layers[-1]:
            stack = [(child, 0.0) for child in reversed(f.children_of(R))]
            while stack:
                cube, above = stack.pop()
                running = above + instance.alpha[cube.id]
                if running > instance.N:
                    nxt.append(cube)
                    continue
                stack.extend((child, running) for child in reversed(f.children_of(cube)))
        if not nxt:
            return layers
        layers.append(nxt)


def layer_masses(layers: list[list[Cube]]) -> list[float]:
    return [math.fsum(c.mass for c in layer) for layer in layers]


# =============================================================================
# Instance generation
# =============================================================================

def _uniform_alpha(filtration: Filtration, N: float, rng) -> dict[str, float]:
    depth = len(filtration.scales)
    return {c.id: float(N * rng.random() / depth) for c in _ordered(filtration)}


def _sparse_alpha(filtration: Filtration, N: float, rng) -> dict[str, float]:
    alpha = {c.id: 0.0 for c in filtration}
    stack = list(reversed(filtration.roots))
    while stack:
        cube = stack.pop()
        kids = filtration.children_of(cube)
        if not kids or rng.random() < _SPARSE_STOP:
            if kids or rng.random() < _SPARSE_STOP:
                alpha[cube.id] = float(N * (1.0 - rng.random()))
            continue
        stack.extend(reversed(kids))
    return alpha


def _adversarial_alpha(filtration: Filtration, N: float, eta: float,
                       rng) -> dict[str, float]:
    """
    alpha = N/2 on the root and N on a random set of finest cubes whose mass
    stays just under (1 - eta) mass(root): the root's good fraction sits
    slightly above eta while every smaller Q0 is entirely good.
    """
    alpha = {c.id: 0.0 for c in filtration}
    root = filtration.root
    alpha[root.id] = N / 2.0
    budget = (1.0 - eta) * root.mass * (1.0 - 1e-12)
    leaves = [c for c in filtration.at_scale(filtration.leaf_scale) if c.id != root.id]
    spent = 0.0
    for pos in rng.permutation(len(leaves)).tolist():
        leaf = leaves[pos]
        if spent + leaf.mass <= budget:
            alpha[leaf.id] = float(N)
            spent += leaf.mass
    return alpha


def _clamp(filtration: Filtration, alpha: dict[str, float], N: float,
           eta: float) -> int:
    """Halve subtrees, deepest top cubes first, until every cube satisfies the hypothesis."""
    clamped = 0
    for Q0 in sorted(filtration, key=lambda c: (-c.scale, c.center, c.id)):
        if Q0.size == 0 or Q0.mass <= 0:
            continue
        subtree = filtration.descendants(Q0)
        for attempt in range(_MAX_HALVINGS + 1):
            instance = JNSInstance(filtration, alpha, N, eta)
            if check_hypothesis(instance, Q0)[1]:
                break
            factor = 0.5 if attempt < _MAX_HALVINGS else 0.0
            for cube in subtree:
                alpha[cube.id] *= factor
            clamped += attempt == 0
    return clamped


def generate_instance(filtration: Filtration, style: str, N: float, eta: float,
                      seed: int = 0) -> JNSInstance:
    """Random alpha of the given style, clamped so the hypothesis holds on every cube."""
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}; expected one of {', '.join(STYLES)}")
    rng = substream(seed, "jns", style)
    if style == "uniform":
        alpha = _uniform_alpha(filtration, N, rng)
    elif style == "sparse":
        alpha = _sparse_alpha(filtration, N, rng)
    else:
        alpha = _adversarial_alpha(filtration, N, eta, rng)

    clamped = _clamp(filtration, alpha, N, eta)
    if clamped:
        logger.debug("Clamped %d subtrees for a %s instance (seed %d)", clamped, style, seed)
    return JNSInstance(filtration=filtration, alpha=alpha, N=float(N), eta=float(eta))
