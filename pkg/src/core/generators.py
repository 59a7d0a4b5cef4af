"""
Reference point sets with length-like weights.

Curves carry arclength weights (each sample gets the length of the piece of
curve closest to it along the curve), so total mass equals curve length.
The four-corner Cantor set carries its self-similar mass 4^-g per point.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from core.cubes import Cube
from core.metric_space import IndexSet, MetricMeasureSpace, as_index_set
from utils.rng import substream

logger = logging.getLogger(__name__)

# Knot count of the random Lipschitz graphs.
LIPSCHITZ_PIECES = 16
# Cube sizes below this many garbage-band widths are under the big-piece resolution.
RESOLUTION_BANDS = 8


@dataclass(frozen=True)
class GeneratedSet:
    """A generated space with optional big-piece labels (E and the curve inside it)."""
    kind: str
    space: MetricMeasureSpace
    E_labels: Optional[np.ndarray] = None
    Etilde_labels: Optional[np.ndarray] = None

    @property
    def labelled(self) -> bool:
        return self.Etilde_labels is not None


def _spacing_weights(t: np.ndarray) -> np.ndarray:
    """Half the gap to each neighbour along a sorted parameter; sums to t[-1] - t[0]."""
    gaps = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += gaps / 2.0
    w[1:] += gaps / 2.0
    return w


def gen_segment(n: int) -> MetricMeasureSpace:
    """n equally spaced points on [0, 1] x {0}, weight 1/n."""
    if n < 2:
        raise ValueError(f"segment needs n >= 2, got {n}")
    coords = np.column_stack([np.linspace(0.0, 1.0, n), np.zeros(n)])
    return MetricMeasureSpace.euclidean(coords, np.full(n, 1.0 / n))


def gen_circle(n: int) -> MetricMeasureSpace:
    """n equally spaced points on a circle of circumference 1, weight 1/n."""
    if n < 3:
        raise ValueError(f"circle needs n >= 3, got {n}")
    radius = 1.0 / (2.0 * math.pi)
    angles = 2.0 * math.pi * np.arange(n) / n
    coords = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return MetricMeasureSpace.euclidean(coords, np.full(n, 1.0 / n))


def _lipschitz_profile(L: float, seed: int, pieces: int = LIPSCHITZ_PIECES):
    """Knot abscissae and values of a random piecewise-linear L-Lipschitz function on [0, 1]."""
    rng = substream(seed, "lipschitz-graph", L)
    slopes = rng.uniform(-L, L, size=pieces) if L > 0 else np.zeros(pieces)
    knots = np.linspace(0.0, 1.0, pieces + 1)
    values = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
    return knots, values


def gen_lipschitz_graph(n: int, L: float, seed: int = 0) -> MetricMeasureSpace:
    """
    The graph of a random L-Lipschitz function on [0, 1], sampled at n points
    equally spaced in arclength.
    """
    if L < 0:
        raise ValueError(f"Lipschitz constant must be >= 0, got {L}")
    if n < 2:
        raise ValueError(f"graph needs n >= 2, got {n}")
    knots, values = _lipschitz_profile(L, seed)
    piece_len = np.hypot(np.diff(knots), np.diff(values))
    arc = np.concatenate([[0.0], np.cumsum(piece_len)])

    t = np.linspace(0.0, arc[-1], n)
    x = np.interp(t, arc, knots)
    y = np.interp(x, knots, values)
    t[-1] = arc[-1]

    space = MetricMeasureSpace.euclidean(np.column_stack([x, y]), _spacing_weights(t))
    logger.debug("Lipschitz graph: n=%d L=%g length=%.6g", n, L, arc[-1])
    return space


def gen_koch(level: int, angle: float = math.pi / 3) -> MetricMeasureSpace:
    """
    Vertices of the level-``level`` Koch-type curve from (0, 0) to (1, 0).

    Each edge is replaced by four edges of ratio 1/(2(1 + cos angle)), the
    middle two meeting at a peak of base angle ``angle``.
    """
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    if not 0 < angle < math.pi / 2:
        raise ValueError(f"angle must lie in (0, pi/2), got {angle}")
    r = 1.0 / (2.0 * (1.0 + math.cos(angle)))
    turn = complex(math.cos(angle), math.sin(angle))

    pts = np.array([0.0 + 0.0j, 1.0 + 0.0j])
    for _ in range(level):
        a, b = pts[:-1], pts[1:]
        d = b - a
        p1 = a + r * d
        peak = p1 + r * d * turn
        p3 = b - r * d
        out = np.empty(4 * a.size + 1, dtype=complex)
        out[0:-1:4] = a
        out[1::4] = p1
        out[2::4] = peak
        out[3::4] = p3
        out[-1] = pts[-1]
        pts = out

    edge = np.abs(np.diff(pts))
    arc = np.concatenate([[0.0], np.cumsum(edge)])
    coords = np.column_stack([pts.real, pts.imag])
    return MetricMeasureSpace.euclidean(coords, _spacing_weights(arc))


def gen_four_corner_cantor(g: int) -> MetricMeasureSpace:
    """Centers of the 4^g generation-g squares of the four-corner Cantor construction."""
    if g < 1:
        raise ValueError(f"generation must be >= 1, got {g}")
    centers = np.array([[0.5, 0.5]])
    side = 1.0
    corners = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
    for _ in range(g):
        offset = 3.0 / 8.0 * side
        centers = (centers[:, None, :] + offset * corners[None, :, :]).reshape(-1, 2)
        side /= 4.0
    n = centers.shape[0]
    return MetricMeasureSpace.euclidean(centers, np.full(n, 4.0**-g))


def gen_bpli_union(theta: float, n: int, seed: int = 0
                   ) -> tuple[MetricMeasureSpace, np.ndarray, np.ndarray]:
    """
    The unit segment (the designated curve) padded with garbage rows.

    Garbage is ceil(1/theta - 1) shifted copies of the curve sampling, row j
    lying at height j times the curve spacing, with total mass 1/theta - 1.
    Every cube wider than a few rows then meets the curve in about a theta
    share of its mass. Returns the space and boolean labels for E (every
    point) and for the curve.
    """
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    rows = garbage_rows(theta)
    n_curve = max(2, (n + rows) // (rows + 1))
    x = np.linspace(0.0, 1.0, n_curve)
    h = x[1] - x[0]
    coords = [np.column_stack([x, np.zeros(n_curve)])]
    weights = [_spacing_weights(x)]

    if rows:
        row_mass = (1.0 / theta - 1.0) / rows
        rng = substream(seed, "bpli-garbage")
        shifts = rng.uniform(0.25, 0.75, size=rows) * h
        for j, shift in enumerate(shifts.tolist(), start=1):
            xs = x[:-1] + shift
            w = _spacing_weights(xs) if xs.size > 1 else np.ones(1)
            coords.append(np.column_stack([xs, np.full(xs.size, j * h)]))
            weights.append(w * (row_mass / w.sum()))

    space = MetricMeasureSpace.euclidean(np.vstack(coords), np.concatenate(weights))
    E_labels = np.ones(space.n, dtype=bool)
    Etilde_labels = np.zeros(space.n, dtype=bool)
    Etilde_labels[:n_curve] = True
    logger.debug("bpli union: theta=%g, %d curve points, %d garbage rows",
                 theta, n_curve, rows)
    return space, E_labels, Etilde_labels


def garbage_rows(theta: float) -> int:
    return int(math.ceil(1.0 / theta - 1.0 - 1e-12))


def bpli_resolution(theta: float, n: int) -> float:
    """Smallest cube size at which gen_bpli_union(theta, n) keeps its big pieces."""
    rows = garbage_rows(theta)
    n_curve = max(2, (n + rows) // (rows + 1))
    return RESOLUTION_BANDS * max(rows, 1) / (n_curve - 1)


def check_big_piece(space: MetricMeasureSpace, E_set: IndexSet, Etilde_set: IndexSet,
                    Q0: Cube, theta: float) -> bool:
    """mass(E ∩ Etilde ∩ Q0) >= theta nominal_diam(Q0)."""
    common = np.intersect1d(as_index_set(E_set), as_index_set(Etilde_set))
    common = np.intersect1d(common, Q0.members)
    return space.set_mass(common) >= theta * Q0.nominal_diam


# =============================================================================
# Named construction (CLI and theorem-check ladders)
# =============================================================================

# kind -> (parameter names and parsers, builder)
_KINDS: dict[str, tuple[tuple[tuple[str, Callable], ...], Callable]] = {
    "segment": ((("n", int),), lambda n: gen_segment(n)),
    "circle": ((("n", int),), lambda n: gen_circle(n)),
    "lipschitz": ((("n", int), ("L", float), ("seed", int)),
                  lambda n, L=1.0, seed=0: gen_lipschitz_graph(n, L, seed)),
    "koch": ((("level", int), ("angle", float)),
             lambda level, angle=math.pi / 3: gen_koch(level, angle)),
    "cantor": ((("g", int),), lambda g: gen_four_corner_cantor(g)),
    "bpli": ((("theta", float), ("n", int), ("seed", int)),
             lambda theta, n=512, seed=0: gen_bpli_union(theta, n, seed)),
}

GENERATOR_KINDS = tuple(_KINDS)


def generator_usage(kind: str) -> str:
    params, _ = _KINDS[kind]
    return f"{kind} " + " ".join(name for name, _ in params)


def make_set(kind: str, params) -> GeneratedSet:
    """Build a named set from positional parameters (strings or numbers)."""
    if kind not in _KINDS:
        raise ValueError(f"unknown generator {kind!r}; expected one of {', '.join(_KINDS)}")
    signature, builder = _KINDS[kind]
    params = list(params)
    if not params or len(params) > len(signature):
        raise ValueError(f"usage: {generator_usage(kind)}")
    try:
        values = [parse(str(raw)) for (_, parse), raw in zip(signature, params)]
    except ValueError:
        raise ValueError(f"bad parameters {params} for {generator_usage(kind)}") from None

    built = builder(*values)
    if isinstance(built, tuple):
        space, E_labels, Etilde_labels = built
        return GeneratedSet(kind, space, E_labels, Etilde_labels)
    return GeneratedSet(kind, built)
