import random
from datetime import datetime, timezone

import pytest

from grounder.corpus import benchmark_scene
from grounder.geometry import Vec3
from grounder.scene_graph import ObjectNode, build_graph

FIXED_NOW = datetime(2026, 1, 15, 12, 0, 0, tzinfo=timezone.utc)


@pytest.fixture
def now():
    return FIXED_NOW


@pytest.fixture
def bench():
    return benchmark_scene()


@pytest.fixture
def rng():
    return random.Random(20260115)


def make_node(node_id, center, label="cube", descriptors=(), half=0.05, **kwargs):
    return ObjectNode(
        id=node_id,
        label=label,
        descriptors=list(descriptors),
        center=Vec3(*center),
        half_extents=Vec3(half, half, half),
        **kwargs,
    )


@pytest.fixture
def two_cubes():
    return build_graph(
        [make_node("a", (0, 0, 0)), make_node("b", (0.3, 0, 0))],
        session_id="two",
    )
