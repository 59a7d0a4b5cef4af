"""
Reading and writing point clouds, distance matrices, reports and JNS instances.

Point-cloud CSV: one row per point, ``x_1,...,x_dim,weight``. Distance-matrix
CSV: a square matrix, weights in a separate one-column file. Blank lines and
lines starting with ``#`` are skipped. Every parse failure names the file and
the 1-based line.
"""

import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from core.cubes import Filtration
from core.errors import MetricError, ParseError
from core.jns import JNSInstance
from core.metric_space import MetricMeasureSpace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _numeric_rows(path: Path) -> list[tuple[int, list[float]]]:
    """(line number, values) for every data row of a CSV file."""
    if not path.exists():
        raise ParseError(path, None, "file not found")
    rows = []
    with open(path, "r", newline="") as f:
        for lineno, fields in enumerate(csv.reader(f), start=1):
            if not fields or not "".join(fields).strip():
                continue
            if fields[0].lstrip().startswith("#"):
                continue
            try:
                values = [float(v) for v in fields]
            except ValueError:
                bad = ",".join(fields)
                raise ParseError(path, lineno, f"non-numeric field in {bad!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError(path, lineno, "values must be finite")
            rows.append((lineno, values))
    if not rows:
        raise ParseError(path, None, "no data rows")
    return rows


def load_point_cloud(path: PathLike) -> MetricMeasureSpace:
    """Euclidean space from ``x_1,...,x_dim,weight`` rows."""
    path = Path(path)
    rows = _numeric_rows(path)
    width = len(rows[0][1])
    if width < 2:
        raise ParseError(path, rows[0][0], "rows need at least one coordinate and a weight")
    for lineno, values in rows:
        if len(values) != width:
            raise ParseError(path, lineno, f"expected {width} fields, got {len(values)}")
        if values[-1] <= 0:
            raise ParseError(path, lineno, f"weight must be positive, got {values[-1]}")

    data = np.array([values for _, values in rows])
    try:
        space = MetricMeasureSpace.euclidean(data[:, :-1], data[:, -1])
    except MetricError as e:
        raise ParseError(path, None, str(e)) from e
    logger.info("Loaded %d points in R^%d from %s", space.n, width - 1, path)
    return space


def load_distance_matrix(path: PathLike, weights_path: Optional[PathLike] = None
                         ) -> MetricMeasureSpace:
    """Space from an explicit distance matrix; weights default to 1/n."""
    path = Path(path)
    rows = _numeric_rows(path)
    n = len(rows)
    for lineno, values in rows:
        if len(values) != n:
            raise ParseError(path, lineno, f"matrix row has {len(values)} entries, expected {n}")

    weights = None
    if weights_path is not None:
        weights_path = Path(weights_path)
        wrows = _numeric_rows(weights_path)
        if len(wrows) != n:
            raise ParseError(weights_path, None, f"{len(wrows)} weights for {n} points")
        for lineno, values in wrows:
            if len(values) != 1 or values[0] <= 0:
                raise ParseError(weights_path, lineno, "expected one positive weight")
        weights = np.array([values[0] for _, values in wrows])

    matrix = np.array([values for _, values in rows])
    return MetricMeasureSpace.from_matrix(matrix, weights)


def load_labels(path: PathLike, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(E, Etilde) boolean labels from an ``in_E,in_Etilde`` sidecar."""
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "file not found")
    E, Et = [], []
    with open(path, "r", newline="") as f:
        for lineno, fields in enumerate(csv.reader(f), start=1):
            if not fields or fields[0].lstrip().startswith("#") or fields[0] == "in_E":
                continue
            if len(fields) != 2 or any(v.strip() not in ("0", "1") for v in fields):
                raise ParseError(path, lineno, "expected two 0/1 fields")
            E.append(fields[0].strip() == "1")
            Et.append(fields[1].strip() == "1")
    if len(E) != n:
        raise ParseError(path, None, f"{len(E)} labels for {n} points")
    return np.array(E, dtype=bool), np.array(Et, dtype=bool)


def labels_path(out: PathLike) -> Path:
    """Sidecar path for the labels of a point-cloud file."""
    out = Path(out)
    return out.with_suffix(".labels.csv")


def write_point_cloud(path: PathLike, space: MetricMeasureSpace) -> None:
    coords = space.coords
    if coords is None:
        raise MetricError("only euclidean spaces can be written as point clouds")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join([f"x_{i + 1}" for i in range(coords.shape[1])] + ["weight"])
    with open(path, "w", newline="") as f:
        f.write(f"# {header}\n")
        writer = csv.writer(f)
        for row, w in zip(coords.tolist(), space.weights.tolist()):
            writer.writerow([repr(v) for v in row] + [repr(w)])
    logger.info("Wrote %d points to %s", space.n, path)


def write_labels(path: PathLike, E_labels: np.ndarray, Etilde_labels: np.ndarray) -> None:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["in_E", "in_Etilde"])
        for e, t in zip(np.asarray(E_labels).tolist(), np.asarray(Etilde_labels).tolist()):
            writer.writerow([int(bool(e)), int(bool(t))])


def write_scale_csv(path: PathLike, rows: Iterable[tuple], keys: Sequence[str] = ()) -> None:
    """
    Per-scale rows ``scale,count,sum,normalized_sum``, optionally preceded by
    the columns named in ``keys`` (each row then starts with those values).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width = len(keys)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(keys) + ["scale", "count", "sum", "normalized_sum"])
        for row in rows:
            k, count, total, normalized = row[width:]
            writer.writerow(list(row[:width]) + [k, count, repr(float(total)),
                                                 repr(float(normalized))])


def write_json(path: Optional[PathLike], data) -> None:
    """Write JSON to ``path``, or to stdout when path is None or ``-``."""
    text = json.dumps(data, indent=2)
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(text + "\n")


def cube_records(filtration: Filtration) -> list[dict]:
    """Cube-dump records ordered by scale then center."""
    cubes = sorted(filtration, key=lambda c: (c.scale, c.center, c.id))
    return [c.to_record() for c in cubes]


# =============================================================================
# JNS instances
# =============================================================================

def dump_instance(path: Optional[PathLike], instance: JNSInstance) -> None:
    f = instance.filtration
    tree = {"weights": f.space.weights.tolist()}
    if f.space.coords is not None:
        tree["coords"] = f.space.coords.tolist()
    tree["cubes"] = [
        {"id": c.id, "scale": c.scale, "center": c.center, "parent": c.parent,
         "nominal_diam": c.nominal_diam, "members": c.members.tolist()}
        for c in sorted(f, key=lambda c: (c.scale, c.center, c.id))
    ]
    write_json(path, {
        "tree": tree,
        "alpha": {cid: float(v) for cid, v in instance.alpha.items()},
        "N": instance.N,
        "eta": instance.eta,
    })


def load_instance(path: PathLike) -> JNSInstance:
    """
    JNS instance from ``{"tree": {"weights", "cubes", ["coords"]}, "alpha", "N", "eta"}``.

    Without coordinates the points sit at 0, 1, ..., n-1 on a line; only the
    weights and the cube membership matter to the lemma.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(path, None, "file not found")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(path, e.lineno, e.msg) from None

    try:
        tree = data["tree"]
        weights = np.asarray(tree["weights"], dtype=float)
        coords = tree.get("coords")
        if coords is None:
            coords = np.arange(weights.shape[0], dtype=float)
        space = MetricMeasureSpace.euclidean(coords, weights)
        filtration = Filtration.from_cubes(space, tree["cubes"])
        alpha = {str(k): float(v) for k, v in data["alpha"].items()}
        return JNSInstance(filtration=filtration, alpha=alpha, N=float(data["N"]),
                           eta=float(data["eta"]))
    except (KeyError, TypeError) as e:
        raise ParseError(path, None, f"missing or malformed field: {e}") from None
    except (ValueError, MetricError) as e:
        raise ParseError(path, None, str(e)) from None
