import math

import numpy as np
import pytest

from rwinspect.errors import MapError
from rwinspect.geometry import (
    Circle,
    MapSpec,
    Pose,
    Rect,
    SourceSpec,
    is_free,
    line_of_sight,
    map_from_dict,
    map_to_dict,
    normalize_heading,
    sample_free_pose,
    travel,
)


def test_is_free_examples(empty_map):
    assert is_free(empty_map, (5.0, 5.0), 0.4)
    assert not is_free(empty_map, (0.0, 0.0), 0.4)
    blocked = MapSpec(10, 10, (Rect(4, 0, 6, 10),))
    assert not is_free(blocked, (5.0, 5.0), 0.4)


def test_is_free_near_obstacle_boundary():
    m = MapSpec(10, 10, (Circle(5, 5, 1.0),))
    # Penetration blocks, clearance does not.
    assert not is_free(m, (5.0, 6.1), 0.4)
    assert is_free(m, (5.0, 6.3), 0.4)


def test_line_of_sight_examples(empty_map):
    assert line_of_sight(empty_map, (1, 1), (9, 9))
    assert not line_of_sight(MapSpec(10, 10, (Rect(4, 4, 6, 6),)), (1, 5), (9, 5))
    # Segment passes at distance 5 from the circle center (analytic oracle:
    # nearest segment point (2,1), distance sqrt(9+16)=5 > radius 1).
    assert line_of_sight(MapSpec(10, 10, (Circle(5, 5, 1),)), (1, 1), (2, 1))


def test_line_of_sight_symmetry(dense_map, rng):
    for _ in range(200):
        a = (rng.uniform(0, 10), rng.uniform(0, 10))
        b = (rng.uniform(0, 10), rng.uniform(0, 10))
        assert line_of_sight(dense_map, a, b) == line_of_sight(dense_map, b, a)


def test_line_of_sight_edge_collinear():
    # A sight line flush with an obstacle edge touches no interior.
    m = MapSpec(10, 10, (Rect(4, 4, 6, 6),))
    assert line_of_sight(m, (0, 4), (10, 4))


def test_travel_straight(empty_map):
    res = travel(empty_map, Pose(5, 5, 0.0), 2.0, 0.4)
    assert res.end == Pose(7.0, 5.0, 0.0)
    assert res.traveled == 2.0
    assert not res.blocked


def test_travel_zero_distance(empty_map):
    res = travel(empty_map, Pose(5, 5, 1.0), 0.0, 0.4)
    assert res.end == Pose(5, 5, 1.0)
    assert res.traveled == 0.0
    assert not res.blocked


def test_travel_stops_at_obstacle():
    # Analytic tangency: 6 - 5 - r_I/2 = 0.8.
    m = MapSpec(10, 10, (Rect(6, 4, 7, 6),))
    res = travel(m, Pose(5, 5, 0.0), 5.0, 0.4)
    assert res.blocked
    assert res.traveled == pytest.approx(0.8, abs=1e-6)
    assert is_free(m, (res.end.x, res.end.y), 0.4)


def test_travel_stops_at_wall(empty_map):
    res = travel(empty_map, Pose(5, 5, 0.0), 10.0, 0.4)
    assert res.blocked
    assert res.traveled == pytest.approx(10.0 - 5.0 - 0.2, abs=1e-6)


def test_travel_stops_at_circle():
    m = MapSpec(10, 10, (Circle(8, 5, 1.0),))
    res = travel(m, Pose(5, 5, 0.0), 5.0, 0.4)
    assert res.blocked
    assert res.traveled == pytest.approx(3.0 - 1.0 - 0.2, abs=1e-6)


def test_travel_requires_free_start():
    m = MapSpec(10, 10, (Rect(4, 0, 6, 10),))
    with pytest.raises(ValueError, match="start pose in collision"):
        travel(m, Pose(5, 5, 0.0), 1.0, 0.4)


def test_travel_never_lands_in_collision(empty_map, drum_map, divider_map, rng):
    # Quantified invariant: 10^4 random poses/headings per test map.
    for m in (empty_map, drum_map, divider_map):
        for _ in range(10_000):
            pose = sample_free_pose(m, 0.4, rng)
            res = travel(m, pose, rng.uniform(0, 6), 0.4)
            assert is_free(m, (res.end.x, res.end.y), 0.4)
            assert res.traveled <= 6.0 + 1e-12


def test_travel_deterministic(drum_map, rng):
    for _ in range(50):
        pose = sample_free_pose(drum_map, 0.4, rng)
        r1 = travel(drum_map, pose, 3.0, 0.4)
        r2 = travel(drum_map, pose, 3.0, 0.4)
        assert r1 == r2


def test_inflation_shrinks_clearance():
    base = MapSpec(10, 10, (Rect(6, 4, 7, 6),))
    padded = MapSpec(10, 10, (Rect(6, 4, 7, 6),), inflation=0.1)
    res = travel(padded, Pose(5, 5, 0.0), 5.0, 0.4)
    assert res.traveled == pytest.approx(0.7, abs=1e-6)
    assert is_free(base, (5.75, 5.0), 0.4)
    assert not is_free(padded, (5.75, 5.0), 0.4)


def test_map_validation():
    with pytest.raises(MapError):
        MapSpec(-1, 10)
    with pytest.raises(MapError):
        MapSpec(10, 10, (Rect(5, 5, 4, 6),))
    with pytest.raises(MapError):
        MapSpec(10, 10, (Circle(0.5, 5, 1.0),))  # pokes through the wall
    with pytest.raises(MapError):
        MapSpec(10, 10, (), source=SourceSpec(1, 1, -2.0))


def test_zero_strength_source_is_no_source():
    m = MapSpec(10, 10, (), source=SourceSpec(1, 1, 0.0))
    assert m.effective_source is None


def test_normalize_heading():
    assert normalize_heading(-math.pi) == pytest.approx(math.pi)
    assert 0.0 <= normalize_heading(7 * math.pi) < 2 * math.pi


def test_map_roundtrip(dense_map):
    doc = map_to_dict(dense_map.with_source(SourceSpec(2, 3, 50.0)))
    again = map_from_dict(doc)
    assert again.l_x == dense_map.l_x
    assert len(again.obstacles) == len(dense_map.obstacles)
    assert again.source.strength == 50.0


def test_map_from_dict_rejects_garbage():
    with pytest.raises(MapError):
        map_from_dict({"l_x": 10})
    with pytest.raises(MapError):
        map_from_dict({"l_x": 10, "l_y": 10, "obstacles": [{"kind": "hexagon"}]})


def test_sample_free_pose_fails_on_full_map():
    full = MapSpec(1.0, 1.0, (Circle(0.5, 0.5, 0.5),))
    with pytest.raises(MapError, match="no free space"):
        sample_free_pose(full, 0.9, np.random.default_rng(0), max_attempts=2000)
