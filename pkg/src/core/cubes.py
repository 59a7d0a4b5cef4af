"""
Separated nets, the multiresolution ball family and dyadic cube filtrations.

Scales are indexed by k with nominal size s_k = diameter * 2^-k. Nets are
nested (a scale-k net point stays a net point at every finer scale), so every
cube center is also the center of one of its own children.

Cubes are built top-down. Inside a parent cube each point joins the nearest
child center, except that points lying within s_j/8 of some scale-j center
(for any j at or below the current scale) are first glued to that center's
connected component, which keeps the inner balls Ball(c, s_k/8) intact all
the way down.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from core.errors import DegenerateSpaceError
from core.metric_space import MetricMeasureSpace
from utils.rng import substream

logger = logging.getLogger(__name__)

NET_RATIO = 0.5
INNER_C0 = 1.0 / 8.0
OUTER_C0 = 4.0
TIE_RTOL = 1e-9


def cube_id(scale: int, center: int) -> str:
    """Stable cube identifier ``k:<scale>:<center index>``."""
    return f"k:{scale}:{center}"


def min_separation(space: MetricMeasureSpace) -> float:
    """Smallest distance between two distinct points."""
    if space.n < 2:
        raise DegenerateSpaceError("separation needs at least two points")
    best = math.inf
    points = space.all_points()
    for start in range(0, space.n, 1024):
        rows = points[start:start + 1024]
        block = space.pairwise(rows, points)
        block[np.arange(rows.shape[0]), rows] = np.inf
        best = min(best, float(block.min()))
    return best


def finest_scale(space: MetricMeasureSpace, k_min: int = 0) -> int:
    """First scale whose nominal size drops below the minimum separation."""
    sep = min_separation(space)
    k = max(k_min, int(math.ceil(math.log2(space.diameter / sep))))
    while space.diameter * NET_RATIO**k >= sep:
        k += 1
    return k


# =============================================================================
# Nets
# =============================================================================

@dataclass(frozen=True, eq=False)
class NetHierarchy:
    """Nested separated nets for scales k_min..k_max."""
    space: MetricMeasureSpace
    k_min: int
    k_max: int
    nets: tuple  # per scale, net point indices in insertion order
    assignments: tuple  # per scale, point -> assigned net point
    rank: np.ndarray  # insertion priority of every point
    seed: Optional[int] = None
    ratio: float = NET_RATIO

    @property
    def scales(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def scale(self, k: int) -> float:
        """Nominal size s_k."""
        return self.space.diameter * self.ratio**k

    def net(self, k: int) -> np.ndarray:
        return self.nets[k - self.k_min]

    def assignment(self, k: int) -> np.ndarray:
        return self.assignments[k - self.k_min]


def _nearest_by_rank(space: MetricMeasureSpace, points: np.ndarray, centers: np.ndarray,
                     rank: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Nearest center for every point; near-ties go to the lowest-ranked center.

    Returns (chosen center, distance to it).
    """
    centers = centers[np.argsort(rank[centers], kind="stable")]
    chosen = np.empty(points.shape[0], dtype=np.intp)
    dist = np.empty(points.shape[0])
    for start in range(0, points.shape[0], 1024):
        block = space.pairwise(points[start:start + 1024], centers)
        dmin = block.min(axis=1)
        pick = np.argmax(block <= (dmin + tol)[:, None], axis=1)
        chosen[start:start + block.shape[0]] = centers[pick]
        dist[start:start + block.shape[0]] = block[np.arange(block.shape[0]), pick]
    return chosen, dist


def build_nets(space: MetricMeasureSpace, k_min: int = 0, k_max: Optional[int] = None,
               seed: Optional[int] = None) -> NetHierarchy:
    """
    Greedy nested nets, coarse to fine.

    At each scale the current net is kept and the remaining points are scanned
    in insertion order (index order when ``seed`` is None, a seeded
    permutation otherwise); a point joins when it is farther than s_k from
    every net point.
    """
    if space.n < 2 or space.diameter <= 0:
        raise DegenerateSpaceError("nets need at least two distinct points")
    if k_max is None:
        k_max = finest_scale(space, k_min)
    if k_max < k_min:
        raise ValueError(f"k_max ({k_max}) is below k_min ({k_min})")

    n = space.n
    if seed is None:
        order = np.arange(n, dtype=np.intp)
    else:
        order = substream(seed, "net-order").permutation(n).astype(np.intp)
    rank = np.empty(n, dtype=np.intp)
    rank[order] = np.arange(n)

    nearest = np.full(n, np.inf)
    in_net = np.zeros(n, dtype=bool)
    net: list[int] = []
    nets, assignments = [], []

    for k in range(k_min, k_max + 1):
        s = space.diameter * NET_RATIO**k
        for p in order.tolist():
            if not in_net[p] and nearest[p] > s:
                net.append(p)
                in_net[p] = True
                np.minimum(nearest, space.distances_from(p), out=nearest)
        net_k = np.array(net, dtype=np.intp)
        chosen, _ = _nearest_by_rank(space, space.all_points(), net_k, rank, TIE_RTOL * s)
        nets.append(net_k)
        assignments.append(chosen)
        logger.debug("Scale %d (s=%.4g): %d net points", k, s, net_k.size)

    logger.info("Built nets for scales %d..%d on %d points", k_min, k_max, n)
    return NetHierarchy(space=space, k_min=k_min, k_max=k_max, nets=tuple(nets),
                        assignments=tuple(assignments), rank=rank, seed=seed)


# =============================================================================
# Ball family
# =============================================================================

@dataclass(frozen=True)
class FamilyBall:
    """Ball of the multiresolution family: net point center, radius A·s_k."""
    center: int
    radius: float
    scale: int

    @property
    def id(self) -> str:
        return f"b:{self.scale}:{self.center}"

    @property
    def diam(self) -> float:
        return 2.0 * self.radius


@dataclass(frozen=True)
class BallFamily:
    balls: tuple
    A: float

    def __len__(self) -> int:
        return len(self.balls)

    def __iter__(self) -> Iterator[FamilyBall]:
        return iter(self.balls)


def multiresolution_balls(hierarchy: NetHierarchy, A: float = 4.0) -> BallFamily:
    """One ball per (net point, scale) with radius A·s_k."""
    if A < 1:
        raise ValueError(f"A must be >= 1, got {A}")
    balls = tuple(
        FamilyBall(center=int(c), radius=A * hierarchy.scale(k), scale=k)
        for k in hierarchy.scales
        for c in hierarchy.net(k)
    )
    return BallFamily(balls=balls, A=float(A))


# =============================================================================
# Cubes and filtrations
# =============================================================================

@dataclass(frozen=True, eq=False)
class Cube:
    id: str
    scale: int
    center: int
    members: np.ndarray
    parent: Optional[str]
    nominal_diam: float
    actual_diam: float
    mass: float
    children: tuple = ()

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    def to_record(self) -> dict:
        """Cube-dump record."""
        return {
            "id": self.id,
            "scale": self.scale,
            "center": self.center,
            "parent": self.parent,
            "member_count": self.size,
            "nominal_diam": self.nominal_diam,
            "actual_diam": self.actual_diam,
            "mass": self.mass,
        }


def _actual_diameter(space: MetricMeasureSpace, members: np.ndarray) -> float:
    if members.shape[0] < 2:
        return 0.0
    best = 0.0
    for start in range(0, members.shape[0], 1024):
        best = max(best, float(space.pairwise(members[start:start + 1024], members).max()))
    return best


def make_cube(space: MetricMeasureSpace, scale: int, center: int, members: Iterable[int],
              parent: Optional[str], nominal_diam: Optional[float] = None,
              id: Optional[str] = None) -> Cube:
    """Build a cube record, measuring its mass and actual diameter."""
    members = np.unique(np.asarray(members, dtype=np.intp))
    if nominal_diam is None:
        nominal_diam = space.diameter * NET_RATIO**scale
    return Cube(
        id=id or cube_id(scale, center),
        scale=int(scale),
        center=int(center),
        members=members,
        parent=parent,
        nominal_diam=float(nominal_diam),
        actual_diam=_actual_diameter(space, members),
        mass=space.set_mass(members),
    )


class Filtration:
    """
    A tree of cubes over one space, indexed by id and by scale.

    Children are derived from the parent links, so hand-built cube lists are
    accepted as-is (``validate_filtration`` reports anything malformed).
    """

    def __init__(self, space: MetricMeasureSpace, cubes: Iterable[Cube],
                 shift_index: int = 1, P1: int = 1):
        self.space = space
        self.shift_index = shift_index
        self.P1 = P1

        ordered = sorted(cubes, key=lambda c: (c.scale, c.center, c.id))
        kids: dict[str, list[str]] = {c.id: [] for c in ordered}
        for c in ordered:
            if c.parent is not None and c.parent in kids:
                kids[c.parent].append(c.id)
        self._cubes = {c.id: replace(c, children=tuple(kids[c.id])) for c in ordered}

        self._by_scale: dict[int, list[str]] = {}
        for c in self._cubes.values():
            self._by_scale.setdefault(c.scale, []).append(c.id)
        self.scales = sorted(self._by_scale)

        self._labels: dict[int, np.ndarray] = {}
        self._slots: dict[int, np.ndarray] = {}
        for k in self.scales:
            label = np.full(space.n, -1, dtype=np.intp)
            slot = np.full(space.n, -1, dtype=np.intp)
            for pos, cid in enumerate(self._by_scale[k]):
                label[self._cubes[cid].members] = self._cubes[cid].center
                slot[self._cubes[cid].members] = pos
            self._labels[k] = label
            self._slots[k] = slot

    @classmethod
    def from_cubes(cls, space: MetricMeasureSpace, records: Iterable, shift_index: int = 1,
                   P1: int = 1) -> "Filtration":
        """Build from ``Cube`` objects or dicts with scale/center/parent/members."""
        cubes = []
        for rec in records:
            if isinstance(rec, Cube):
                cubes.append(rec)
                continue
            cubes.append(make_cube(
                space,
                scale=int(rec["scale"]),
                center=int(rec["center"]),
                members=rec["members"],
                parent=rec.get("parent"),
                nominal_diam=rec.get("nominal_diam"),
                id=rec.get("id"),
            ))
        return cls(space, cubes, shift_index=shift_index, P1=P1)

    # -------------------------------------------------------------------------
    # Lookup
    # -------------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._cubes)

    def __iter__(self) -> Iterator[Cube]:
        return iter(self._cubes.values())

    def __contains__(self, cid) -> bool:
        key = cid.id if isinstance(cid, Cube) else cid
        return key in self._cubes

    def cube(self, cid: str) -> Cube:
        return self._cubes[cid]

    @property
    def roots(self) -> list[Cube]:
        return [c for c in self._cubes.values() if c.parent is None or c.parent not in self._cubes]

    @property
    def root(self) -> Cube:
        """The top cube (the first one when the tree is malformed with several)."""
        return self.roots[0]

    @property
    def leaf_scale(self) -> int:
        return self.scales[-1]

    def at_scale(self, k: int) -> list[Cube]:
        return [self._cubes[cid] for cid in self._by_scale.get(k, [])]

    def label(self, k: int) -> np.ndarray:
        """Point -> center of its scale-k cube (-1 where uncovered)."""
        return self._labels[k]

    def children_of(self, cube: Cube) -> list[Cube]:
        return [self._cubes[cid] for cid in cube.children]

    def parent_of(self, cube: Cube) -> Optional[Cube]:
        return self._cubes.get(cube.parent) if cube.parent is not None else None

    def descendants(self, cube: Cube) -> list[Cube]:
        """``cube`` and every cube below it, pre-order."""
        out, stack = [], [cube]
        while stack:
            current = stack.pop()
            out.append(current)
            stack.extend(reversed(self.children_of(current)))
        return out

    def cube_of(self, x: int, k: int) -> Optional[Cube]:
        pos = int(self._slots[k][x]) if k in self._slots else -1
        return self._cubes[self._by_scale[k][pos]] if pos >= 0 else None

    def chain(self, x: int, top: Optional[Cube] = None) -> list[Cube]:
        """Cubes containing ``x`` from ``top`` (default root) down to the leaf scale."""
        top = top or self.root
        out = []
        for k in self.scales:
            if k < top.scale:
                continue
            cube = self.cube_of(x, k)
            if cube is None:
                break
            out.append(cube)
        if not out or out[0].id != top.id:
            raise ValueError(f"point {x} is not in cube {top.id}")
        return out

    def __repr__(self) -> str:
        return (f"Filtration(shift_index={self.shift_index}, cubes={len(self)}, "
                f"scales={self.scales[0]}..{self.scales[-1]})")


def _glue_components(hierarchy: NetHierarchy) -> dict[int, np.ndarray]:
    """
    Connected components of the inner balls, per scale.

    At scale k the graph links each net point c to every point within
    s_j/8 of it, where j = max(k, scale at which c entered the net).
    """
    space = hierarchy.space
    n = space.n
    entry = np.full(n, hierarchy.k_max + 1, dtype=np.intp)
    for k in reversed(hierarchy.scales):
        entry[hierarchy.net(k)] = k

    finest = hierarchy.net(hierarchy.k_max)
    near: list[tuple[int, np.ndarray, np.ndarray]] = []
    for c in finest.tolist():
        row = space.distances_from(c)
        reach = INNER_C0 * hierarchy.scale(int(entry[c]))
        idx = np.flatnonzero(row <= reach)
        near.append((c, idx, row[idx]))

    comps = {}
    for k in hierarchy.scales:
        rows, cols = [], []
        for c, idx, dist in near:
            reach = INNER_C0 * hierarchy.scale(max(k, int(entry[c])))
            linked = idx[dist <= reach]
            rows.append(np.full(linked.shape[0], c, dtype=np.intp))
            cols.append(linked)
        rows_arr = np.concatenate(rows) if rows else np.empty(0, dtype=np.intp)
        cols_arr = np.concatenate(cols) if cols else np.empty(0, dtype=np.intp)
        graph = coo_matrix((np.ones(rows_arr.shape[0]), (rows_arr, cols_arr)), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
        comps[k] = labels.astype(np.intp)
    return comps


def _shift_rank(hierarchy: NetHierarchy, shift_index: int) -> np.ndarray:
    if shift_index <= 1:
        return hierarchy.rank
    order = substream(hierarchy.seed, "filtration-shift", shift_index).permutation(
        hierarchy.space.n)
    rank = np.empty_like(hierarchy.rank)
    rank[order] = np.arange(hierarchy.space.n)
    return rank


def build_filtration(hierarchy: NetHierarchy, shift_index: int = 1, P1: int = 1) -> Filtration:
    """
    Dyadic filtration from a net hierarchy.

    ``shift_index`` re-ranks the net points for tie-breaking, producing the
    shifted filtrations i = 1..P1 over the same nets and scales.
    """
    space = hierarchy.space
    n = space.n
    rank = _shift_rank(hierarchy, shift_index)
    comps = _glue_components(hierarchy)

    labels: dict[int, np.ndarray] = {}
    glued_total = 0
    for k in hierarchy.scales:
        s = hierarchy.scale(k)
        comp = comps[k]
        net_k = hierarchy.net(k)
        parent = labels[k - 1] if k > hierarchy.k_min else np.full(n, -1, dtype=np.intp)

        # A component holding net points goes to its lowest-ranked one.
        ncomp = int(comp.max()) + 1
        best = np.full(ncomp, np.iinfo(np.intp).max, dtype=np.intp)
        np.minimum.at(best, comp[net_k], rank[net_k])
        owner = np.full(ncomp, -1, dtype=np.intp)
        winners = net_k[rank[net_k] == best[comp[net_k]]]
        owner[comp[winners]] = winners
        glued_total += int(net_k.size - winners.size)

        label = owner[comp]
        loose = np.flatnonzero(label < 0)
        if loose.size:
            label = _assign_loose(space, loose, comp, parent, winners, rank,
                                  TIE_RTOL * s, label)
        labels[k] = label

    if glued_total:
        logger.warning("%d net points shared a glued component with another center", glued_total)

    cubes = []
    for k in hierarchy.scales:
        label = labels[k]
        order = np.argsort(label, kind="stable")
        centers, starts = np.unique(label[order], return_index=True)
        bounds = list(starts[1:]) + [n]
        for c, lo, hi in zip(centers.tolist(), starts.tolist(), bounds):
            members = np.sort(order[lo:hi])
            parent_id = None
            if k > hierarchy.k_min:
                parent_id = cube_id(k - 1, int(labels[k - 1][c]))
            cubes.append(make_cube(space, k, c, members, parent_id, hierarchy.scale(k)))

    filtration = Filtration(space, cubes, shift_index=shift_index, P1=P1)
    logger.info("Filtration %d: %d cubes over scales %d..%d", shift_index, len(filtration),
                hierarchy.k_min, hierarchy.k_max)
    return filtration


def _assign_loose(space: MetricMeasureSpace, loose: np.ndarray, comp: np.ndarray,
                  parent: np.ndarray, centers: np.ndarray, rank: np.ndarray, tol: float,
                  label: np.ndarray) -> np.ndarray:
    """Send components without a center to the nearest child center of their parent cube."""
    label = label.copy()
    for p in np.unique(parent[loose]).tolist():
        group = loose[parent[loose] == p]
        children = centers[parent[centers] == p]
        chosen, dist = _nearest_by_rank(space, group, children, rank, tol)
        # one decision per component: the member closest to a child decides
        order = np.lexsort((group, dist, comp[group]))
        _, first = np.unique(comp[group][order], return_index=True)
        decided = dict(zip(comp[group][order][first].tolist(),
                           chosen[order][first].tolist()))
        label[group] = [decided[c] for c in comp[group].tolist()]
    return label


def build_filtrations(hierarchy: NetHierarchy, P1: int = 3, evaluator=None) -> list[Filtration]:
    """The shifted filtrations i = 1..P1."""
    shifts = list(range(1, P1 + 1))
    if evaluator is None:
        return [build_filtration(hierarchy, i, P1) for i in shifts]
    return evaluator.map(lambda i: build_filtration(hierarchy, i, P1), shifts)


# =============================================================================
# Validation and queries
# =============================================================================

@dataclass(frozen=True)
class Violation:
    cube_id: Optional[str]
    invariant: str
    measured: float
    detail: str = ""

    def to_record(self) -> dict:
        return {"cube": self.cube_id, "invariant": self.invariant,
                "measured": self.measured, "detail": self.detail}


def validate_filtration(space: MetricMeasureSpace, filtration: Filtration) -> list[Violation]:
    """Every broken cube/filtration invariant; empty when the tree is sound."""
    violations: list[Violation] = []
    n = space.n

    roots = filtration.roots
    if len(roots) != 1:
        violations.append(Violation(None, "root", float(len(roots)),
                                    "expected exactly one top cube"))
    elif roots[0].size != n:
        violations.append(Violation(roots[0].id, "root", float(roots[0].size),
                                    f"root holds {roots[0].size} of {n} points"))

    for k in filtration.scales:
        counts = np.zeros(n, dtype=np.intp)
        for cube in filtration.at_scale(k):
            np.add.at(counts, cube.members, 1)
        bad = int(np.count_nonzero(counts != 1))
        if bad:
            violations.append(Violation(None, "partition", float(bad),
                                        f"scale {k}: {bad} points not covered exactly once"))

    leaf = filtration.leaf_scale
    for cube in filtration:
        s = cube.nominal_diam
        if cube.parent is not None:
            parent = filtration.parent_of(cube)
            if parent is None:
                violations.append(Violation(cube.id, "orphan", 1.0,
                                            f"parent {cube.parent} is missing"))
            else:
                if cube.scale != parent.scale + 1:
                    violations.append(Violation(cube.id, "scale-step", float(cube.scale),
                                                f"parent scale is {parent.scale}"))
                outside = np.setdiff1d(cube.members, parent.members).size
                if outside:
                    violations.append(Violation(cube.id, "nesting", float(outside),
                                                "members outside the parent"))

        if cube.scale < leaf:
            kids = filtration.children_of(cube)
            union = (np.concatenate([c.members for c in kids]) if kids
                     else np.empty(0, dtype=np.intp))
            if union.size != cube.size or not np.array_equal(np.sort(union), cube.members):
                violations.append(Violation(cube.id, "children-union", float(union.size),
                                            f"children hold {union.size} of {cube.size} points"))

        if cube.size == 0:
            violations.append(Violation(cube.id, "empty", 0.0))
            continue

        row = space.distances_from(cube.center)
        inner = np.flatnonzero(row <= INNER_C0 * s)
        missing = np.setdiff1d(inner, cube.members).size
        if missing:
            violations.append(Violation(cube.id, "inner-containment", float(missing),
                                        f"{missing} points of Ball(center, s/8) outside"))
        reach = float(row[cube.members].max())
        if reach > OUTER_C0 * s * (1 + 1e-12):
            violations.append(Violation(cube.id, "outer-containment", reach / s,
                                        "max d(center, member) / s exceeds 4"))
        if cube.actual_diam > 2 * OUTER_C0 * s * (1 + 1e-12):
            violations.append(Violation(cube.id, "diameter", cube.actual_diam / s,
                                        "actual diameter / s exceeds 8"))
        expected = space.set_mass(cube.members)
        if abs(cube.mass - expected) > 1e-9 * max(expected, 1e-300):
            violations.append(Violation(cube.id, "mass", cube.mass, f"expected {expected}"))

    if violations:
        logger.info("Filtration %d: %d violations", filtration.shift_index, len(violations))
    return violations


def cubes_in_ball(filtration: Filtration, x: int, r: float) -> list[Cube]:
    """Cubes whose members all lie in Ball(x, 2r), in filtration order."""
    if r <= 0:
        raise ValueError(f"r must be > 0, got {r}")
    inside = filtration.space.distances_from(x) <= 2.0 * r
    return [cube for cube in filtration if cube.size and bool(inside[cube.members].all())]


def cubes_below(filtration: Filtration, top: Cube) -> Sequence[Cube]:
    """All cubes Q ⊆ top in the tree, ``top`` first."""
    return filtration.descendants(top)
