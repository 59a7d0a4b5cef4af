"""Shared fixtures; puts src/ on sys.path the way the launcher does."""

import os
import sys
from pathlib import Path

os.environ.setdefault("QT_QPA_PLATFORM", "offscreen")
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from core.config import EstimatorConfig  # noqa: E402
from core.cubes import build_filtration, build_nets  # noqa: E402
from core.generators import gen_circle, gen_segment  # noqa: E402
from core.metric_space import MetricMeasureSpace  # noqa: E402


@pytest.fixture
def exact() -> EstimatorConfig:
    return EstimatorConfig.exact()


@pytest.fixture
def segment() -> MetricMeasureSpace:
    return gen_segment(64)


@pytest.fixture
def circle() -> MetricMeasureSpace:
    return gen_circle(64)


@pytest.fixture
def planar_cloud() -> MetricMeasureSpace:
    """A seeded random cloud in the unit square with uneven weights."""
    rng = np.random.default_rng(7)
    coords = rng.random((80, 2))
    weights = rng.uniform(0.5, 1.5, size=80) / 80
    return MetricMeasureSpace.euclidean(coords, weights)


@pytest.fixture
def circle_filtration(circle):
    return build_filtration(build_nets(circle, seed=0))


@pytest.fixture
def cloud_filtration(planar_cloud):
    return build_filtration(build_nets(planar_cloud, seed=0))
