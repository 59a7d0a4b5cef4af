"""
Finite metric measure spaces.

A space is a finite point set with a distance oracle (euclidean coordinates,
an explicit distance matrix, or a snowflake of either) and a positive mass per
point standing in for one-dimensional Hausdorff measure. Point sets are passed
around as sorted ``numpy`` index arrays.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from core.errors import DegenerateSpaceError, MetricError
from utils.rng import substream

logger = logging.getLogger(__name__)

IndexSet = Union[np.ndarray, Iterable[int]]

# Rows per block when a full distance matrix would be too large to hold at once.
_BLOCK_ROWS = 1024


class MetricKind(Enum):
    """How distances are produced."""
    EUCLIDEAN = "euclidean"
    EXPLICIT_MATRIX = "explicit_matrix"
    SNOWFLAKE = "snowflake"


@dataclass(frozen=True)
class RegularityReport:
    """Empirical bounds on mass(Ball(x, r)) / r."""
    ratio_min: float
    ratio_max: float
    samples: list = field(default_factory=list)  # (point, radius, ratio)
    scale_range: tuple = (0.0, 0.0)

    @property
    def spread(self) -> float:
        """ratio_max / ratio_min."""
        return self.ratio_max / self.ratio_min if self.ratio_min > 0 else math.inf


def as_index_set(subset: IndexSet) -> np.ndarray:
    """Normalize any iterable of point indices (or a boolean mask) to a sorted unique array."""
    arr = np.asarray(subset)
    if arr.dtype == bool:
        return np.flatnonzero(arr)
    if arr.size == 0:
        return np.empty(0, dtype=np.intp)
    return np.unique(arr.astype(np.intp, copy=False))


class MetricMeasureSpace:
    """
    Immutable finite metric space with point masses.

    Use the ``euclidean``, ``from_matrix`` and ``snowflake`` constructors.
    """

    TRIANGLE_EXHAUSTIVE_LIMIT = 500
    TRIANGLE_SAMPLES = 100_000

    def __init__(self, kind: MetricKind, weights: np.ndarray,
                 coords: Optional[np.ndarray] = None,
                 matrix: Optional[np.ndarray] = None,
                 base: Optional["MetricMeasureSpace"] = None,
                 exponent: float = 1.0):
        self.kind = kind
        self._coords = coords
        self._matrix = matrix
        self._base = base
        self.exponent = float(exponent)

        weights = np.array(weights, dtype=float)
        if weights.ndim != 1 or weights.shape[0] != self._point_count():
            raise MetricError("weights must have one entry per point")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise MetricError("all weights must be finite and > 0")
        weights.flags.writeable = False
        self.weights = weights
        self.diameter = self._compute_diameter()

    # =========================================================================
    # Construction
    # =========================================================================

    @classmethod
    def euclidean(cls, coords, weights=None) -> "MetricMeasureSpace":
        """Points in R^dim with the euclidean metric; default weights 1/n."""
        coords = np.array(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] == 0:
            raise MetricError("coordinates must be a non-empty (n, dim) array")
        if not np.all(np.isfinite(coords)):
            raise MetricError("coordinates must be finite")
        n = coords.shape[0]
        if np.unique(coords, axis=0).shape[0] != n:
            raise MetricError("points must be distinct")
        coords.flags.writeable = False
        if weights is None:
            weights = np.full(n, 1.0 / n)
        return cls(MetricKind.EUCLIDEAN, weights, coords=coords)

    @classmethod
    def from_matrix(cls, matrix, weights=None, seed: int = 0) -> "MetricMeasureSpace":
        """
        Explicit distance matrix.

        Checks symmetry, zero diagonal, positivity off the diagonal and the
        triangle inequality (every triple up to ``TRIANGLE_EXHAUSTIVE_LIMIT``
        points, ``TRIANGLE_SAMPLES`` random triples beyond).
        """
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise MetricError("distance matrix must be square and non-empty")
        if not np.all(np.isfinite(m)):
            raise MetricError("distance matrix must be finite")
        n = m.shape[0]
        scale = float(np.max(np.abs(m))) or 1.0
        asym = float(np.max(np.abs(m - m.T)))
        if asym > 1e-12 * scale:
            raise MetricError(f"distance matrix is not symmetric (max |d_ij - d_ji| = {asym:g})")
        m = 0.5 * (m + m.T)
        if np.any(np.diag(m) != 0):
            raise MetricError("distance matrix must have a zero diagonal")
        off = ~np.eye(n, dtype=bool)
        if np.any(m[off] <= 0):
            raise MetricError("distinct points must be at positive distance")
        _check_triangle_inequality(m, scale, seed)
        m.flags.writeable = False
        if weights is None:
            weights = np.full(n, 1.0 / n)
        return cls(MetricKind.EXPLICIT_MATRIX, weights, matrix=m)

    @classmethod
    def snowflake(cls, base: "MetricMeasureSpace", exponent: float) -> "MetricMeasureSpace":
        """The snowflaked metric d^s of ``base``, with the same weights."""
        if not 0 < exponent <= 1:
            raise MetricError(f"snowflake exponent must lie in (0, 1], got {exponent}")
        return cls(MetricKind.SNOWFLAKE, base.weights, base=base, exponent=exponent)

    # =========================================================================
    # Basic properties
    # =========================================================================

    def _point_count(self) -> int:
        if self._coords is not None:
            return self._coords.shape[0]
        if self._matrix is not None:
            return self._matrix.shape[0]
        return self._base.n

    @property
    def n(self) -> int:
        return self._point_count()

    @property
    def coords(self) -> Optional[np.ndarray]:
        """Coordinates when the space (or its snowflake base) is euclidean."""
        if self._coords is not None:
            return self._coords
        return self._base.coords if self._base is not None else None

    @property
    def dim(self) -> Optional[int]:
        coords = self.coords
        return None if coords is None else coords.shape[1]

    @property
    def base_kind(self) -> Optional[MetricKind]:
        return self._base.kind if self._base is not None else None

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def all_points(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.intp)

    def _check_index(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.n:
            raise IndexError(f"point index {i} out of range for {self.n} points")
        return i

    # =========================================================================
    # Distances
    # =========================================================================

    def pairwise(self, rows: IndexSet, cols: Optional[IndexSet] = None) -> np.ndarray:
        """Distance block between two index arrays (``cols`` defaults to ``rows``)."""
        rows = np.asarray(rows, dtype=np.intp)
        cols = rows if cols is None else np.asarray(cols, dtype=np.intp)
        if self.kind is MetricKind.EUCLIDEAN:
            return cdist(self._coords[rows], self._coords[cols])
        if self.kind is MetricKind.EXPLICIT_MATRIX:
            return self._matrix[np.ix_(rows, cols)]
        return self._base.pairwise(rows, cols) ** self.exponent

    def paired(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Elementwise distances d(a[t], b[t])."""
        a = np.asarray(a, dtype=np.intp)
        b = np.asarray(b, dtype=np.intp)
        if self.kind is MetricKind.EUCLIDEAN:
            diff = self._coords[a] - self._coords[b]
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if self.kind is MetricKind.EXPLICIT_MATRIX:
            return self._matrix[a, b]
        return self._base.paired(a, b) ** self.exponent

    def distances_from(self, i: int) -> np.ndarray:
        """Distances from point ``i`` to every point."""
        i = self._check_index(i)
        return self.pairwise([i], self.all_points())[0]

    def distance(self, i: int, j: int) -> float:
        """d(i, j) according to the metric kind."""
        i, j = self._check_index(i), self._check_index(j)
        if i == j:
            return 0.0
        return float(self.paired([i], [j])[0])

    def _compute_diameter(self) -> float:
        n = self.n
        if n < 2:
            return 0.0
        if self.kind is MetricKind.SNOWFLAKE:
            return self._base.diameter ** self.exponent
        best = 0.0
        everything = self.all_points()
        for start in range(0, n, _BLOCK_ROWS):
            block = self.pairwise(everything[start:start + _BLOCK_ROWS], everything)
            best = max(best, float(block.max()))
        return best

    # =========================================================================
    # Triangle excess, balls, masses
    # =========================================================================

    def excess_delta(self, i: int, j: int, k: int) -> float:
        """
        Triangle excess of the unordered triple {i, j, k}.

        The minimum over the choice of middle point m of d(a, m) + d(m, b) - d(a, b).
        Zero for repeated points and for triples lying in order on a geodesic.
        """
        return float(self.excess_delta_many([i], [j], [k])[0])

    def excess_delta_many(self, i, j, k) -> np.ndarray:
        """Vectorized ``excess_delta`` over equal-length index arrays."""
        i = np.asarray(i, dtype=np.intp)
        j = np.asarray(j, dtype=np.intp)
        k = np.asarray(k, dtype=np.intp)
        for arr in (i, j, k):
            if arr.size and (arr.min() < 0 or arr.max() >= self.n):
                raise IndexError(f"point index out of range for {self.n} points")
        dij = self.paired(i, j)
        djk = self.paired(j, k)
        dik = self.paired(i, k)
        through_i = dij + dik - djk
        through_j = dij + djk - dik
        through_k = dik + djk - dij
        return np.maximum(np.minimum(np.minimum(through_i, through_j), through_k), 0.0)

    def ball(self, center: int, radius: float) -> np.ndarray:
        """Closed ball {j : d(center, j) <= radius} as a sorted index array."""
        if radius < 0:
            raise ValueError(f"radius must be >= 0, got {radius}")
        row = self.distances_from(center)
        members = np.flatnonzero(row <= radius)
        if center not in members:
            members = np.union1d(members, [center])
        return members

    def set_mass(self, subset: IndexSet) -> float:
        """Sum of weights over ``subset``; the empty set has mass 0."""
        idx = as_index_set(subset)
        if idx.size == 0:
            return 0.0
        return math.fsum(self.weights[idx])

    def dist_to_set(self, i: int, subset: IndexSet) -> float:
        """min over ``subset`` of d(i, .)."""
        return float(self.dist_to_set_many([self._check_index(i)], subset)[0])

    def dist_to_set_many(self, points: IndexSet, subset: IndexSet) -> np.ndarray:
        """dist(x, subset) for every x in ``points`` (in the given order)."""
        target = as_index_set(subset)
        if target.size == 0:
            raise ValueError("distance to an empty set is undefined")
        points = np.asarray(points, dtype=np.intp)
        out = np.empty(points.shape[0])
        for start in range(0, points.shape[0], _BLOCK_ROWS):
            rows = points[start:start + _BLOCK_ROWS]
            out[start:start + rows.shape[0]] = self.pairwise(rows, target).min(axis=1)
        return out

    def __repr__(self) -> str:
        return (f"MetricMeasureSpace(kind={self.kind.value}, n={self.n}, "
                f"diameter={self.diameter:.6g}, mass={self.total_mass:.6g})")


def _check_triangle_inequality(m: np.ndarray, scale: float, seed: int) -> None:
    n = m.shape[0]
    tol = 1e-12 * scale
    if n <= MetricMeasureSpace.TRIANGLE_EXHAUSTIVE_LIMIT:
        for k in range(n):
            through_k = m[:, k][:, None] + m[k, :][None, :]
            excess = m - through_k
            worst = float(excess.max())
            if worst > tol:
                i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
                raise MetricError(
                    f"triangle inequality fails: d({i},{j}) > d({i},{k}) + d({k},{j}) "
                    f"by {worst:g}"
                )
        return

    rng = substream(seed, "triangle-check")
    size = MetricMeasureSpace.TRIANGLE_SAMPLES
    i, j, k = (rng.integers(0, n, size=size) for _ in range(3))
    excess = m[i, j] - (m[i, k] + m[k, j])
    worst = int(np.argmax(excess))
    if excess[worst] > tol:
        raise MetricError(
            f"triangle inequality fails: d({i[worst]},{j[worst]}) > "
            f"d({i[worst]},{k[worst]}) + d({k[worst]},{j[worst]}) by {excess[worst]:g}"
        )
    logger.debug("Sampled %d triples for the triangle inequality on %d points", size, n)


def check_ahlfors_regularity(space: MetricMeasureSpace, r_min: float, r_max: float,
                             sample_budget: int = 500,
                             seed: int = 0) -> RegularityReport:
    """
    Sample mass(Ball(x, r)) / r with x uniform over points and r log-uniform.

    Deterministic given ``seed``.
    """
    if space.n < 2 or space.diameter <= 0:
        raise DegenerateSpaceError("regularity needs at least two distinct points")
    if not 0 < r_min < r_max:
        raise ValueError(f"need 0 < r_min < r_max, got [{r_min}, {r_max}]")
    if r_max > space.diameter * (1 + 1e-12):
        raise ValueError(f"r_max={r_max} exceeds the diameter {space.diameter}")
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")

    rng = substream(seed, "regularity")
    centers = rng.integers(0, space.n, size=sample_budget)
    radii = np.exp(rng.uniform(math.log(r_min), math.log(r_max), size=sample_budget))

    samples = []
    rows: dict = {}
    for x, r in zip(centers.tolist(), radii.tolist()):
        row = rows.get(x)
        if row is None:
            row = rows[x] = space.distances_from(x)
        mass = math.fsum(space.weights[row <= r])
        samples.append((x, r, mass / r))

    ratios = [s[2] for s in samples]
    report = RegularityReport(
        ratio_min=min(ratios),
        ratio_max=max(ratios),
        samples=samples,
        scale_range=(r_min, r_max),
    )
    logger.info("Regularity over r in [%g, %g]: ratios in [%.4g, %.4g]",
                r_min, r_max, report.ratio_min, report.ratio_max)
    return report
