import copy
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from belief_core import Pose
from world import (
    REGION_KINDS,
    Region,
    WorldFormatError,
    WorldValidationError,
    crosses_closed_door,
    fingerprint,
    free_area,
    is_free,
    landmarks_in_range,
    load_world,
    region_contains,
    region_of,
    segment_free,
)


BASE_WORLD = {
    "format": 1,
    "bounds": [0, 0, 10, 10],
    "obstacles": [[[4, 4], [6, 4], [6, 6], [4, 6]]],
    "regions": [
        {"id": "A", "kind": "room", "polygon": [[0, 0], [5, 0], [5, 10], [0, 10]]},
        {"id": "b", "kind": "room", "polygon": [[5, 0], [10, 0], [10, 10], [5, 10]]},
    ],
    "doors": [],
    "landmarks": [{"id": "m1", "x": 1, "y": 1}],
}


def _world_text(**changes) -> str:
    data = copy.deepcopy(BASE_WORLD)
    data.update(changes)
    return json.dumps(data)


def test_fixture_worlds_load(office_world, corridor_world, two_route_world):
    assert len(office_world.landmarks) == 13
    assert {r.id for r in office_world.regions} >= {"s", "l", "c1", "c9"}
    assert {d.id: d.automatic for d in corridor_world.doors} == {"d12": True, "d23": True, "h1": False, "h2": False}
    assert len(corridor_world.waypoints) == 6
    assert len(two_route_world.waypoints) == 12
    assert two_route_world.sensor.max_range == 4.0
    assert two_route_world.motion_noise.alpha1 == 0.001


def test_ids_are_lowercased():
    w = load_world(_world_text())
    assert w.has_region("a")
    assert not w.has_region("A")
    assert w.region("a").kind == "room"


def test_landmark_ids_are_lowercased():
    w = load_world(_world_text(landmarks=[{"id": "M1", "x": 1, "y": 1}, {"id": "m2", "x": 2, "y": 1}]))
    assert [m.id for m in w.landmarks] == ["m1", "m2"]
    with pytest.raises(WorldValidationError) as info:
        load_world(_world_text(landmarks=[{"id": "M", "x": 1, "y": 1}, {"id": "m", "x": 2, "y": 2}]))
    assert info.value.entity == "m"


def test_syntax_error_carries_position():
    with pytest.raises(WorldFormatError) as info:
        load_world('{"format": 1,\n  "bounds": [0, 0, 1 1]}')
    assert info.value.line == 2
    assert info.value.column > 1


@pytest.mark.parametrize("changes, entity", [
    ({"format": 2}, "format"),
    ({"bounds": [0, 0, -1, 10]}, "bounds"),
    ({"obstacles": [[[0, 0], [4, 0], [2, 1], [4, 4], [0, 4]]]}, "obstacle[0]"),
    ({"regions": [{"id": "a", "kind": "garden", "polygon": [[0, 0], [1, 0], [1, 1]]}]}, "a"),
    ({"regions": [{"id": "a", "kind": "room", "polygon": [[0, 0], [11, 0], [11, 1]]}]}, "a"),
    ({"landmarks": [{"id": "m", "x": 1, "y": 1}, {"id": "m", "x": 2, "y": 2}]}, "m"),
    ({"doors": [{"id": "d", "connects": ["a", "b"], "center": [3, 5, 0], "width": 1}]}, "d"),
    ({"doors": [{"id": "d", "connects": ["a", "z"], "center": [5, 8, 0], "width": 1}]}, "d"),
    ({"waypoints": [[5, 5, 0]]}, "waypoint[0]"),
    ({"regions": ["a"]}, "region[0]"),
    ({"doors": [["a", "b"]]}, "door[0]"),
    ({"landmarks": [{"id": "m1", "x": 1, "y": 1}, 7]}, "landmark[1]"),
])
def test_validation_names_offending_entity(changes, entity):
    with pytest.raises(WorldValidationError) as info:
        load_world(_world_text(**changes))
    assert info.value.entity == entity


def test_door_on_region_boundary_is_accepted():
    w = load_world(_world_text(doors=[{"id": "D", "connects": ["A", "B"], "center": [5, 8, 0], "width": 1}]))
    door = w.door("d")
    assert door.connects == ("a", "b")
    assert door.automatic
    (x0, y0), (x1, y1) = door.endpoints()
    assert (x0, y0) == pytest.approx((5, 8.5))
    assert (x1, y1) == pytest.approx((5, 7.5))


def test_region_kinds_cover_fixture_vocabulary():
    assert {"cubicle", "room", "corridor", "lift", "start", "goal"} == REGION_KINDS


def test_is_free_checks_bounds_obstacles_and_margin():
    w = load_world(_world_text())
    assert is_free(w, Pose(2, 2, 0))
    assert not is_free(w, Pose(5, 5, 0))
    assert not is_free(w, Pose(3.9, 5, 0))  # disc overlaps the obstacle
    assert not is_free(w, Pose(0.1, 5, 0))  # disc leaves the bounds
    assert is_free(w, Pose(3.7, 5, 0))
    assert not is_free(w, Pose(3.7, 5, 0), margin=0.2)


def test_segment_free_is_a_swept_disc_test():
    w = load_world(_world_text())
    assert segment_free(w, (1, 1), (9, 1))
    assert not segment_free(w, (1, 5), (9, 5))
    assert not segment_free(w, (1, 6.1), (9, 6.1))  # passes 0.1 m above the obstacle
    assert segment_free(w, (1, 6.3), (9, 6.3))
    assert not segment_free(w, (1, 6.3), (9, 6.3), margin=0.2)
    assert segment_free(w, (2, 2), (2, 2))


def _square_distance(x, y):
    """Distance from points to the BASE_WORLD obstacle square [4, 6] x [4, 6]."""
    dx = np.maximum(np.maximum(4.0 - x, x - 6.0), 0.0)
    dy = np.maximum(np.maximum(4.0 - y, y - 6.0), 0.0)
    return np.hypot(dx, dy)


def _disc_fits(x, y, radius):
    inside = (radius <= x) & (x <= 10.0 - radius) & (radius <= y) & (y <= 10.0 - radius)
    return inside & (_square_distance(x, y) >= radius)


def test_is_free_matches_distance_to_the_obstacle():
    w = load_world(_world_text())
    rng = np.random.default_rng(7)
    points = rng.uniform(0.0, 10.0, size=(1000, 2))
    expected = _disc_fits(points[:, 0], points[:, 1], w.robot_radius)
    assert expected.any() and not expected.all()
    for (x, y), free in zip(points, expected):
        assert is_free(w, Pose(float(x), float(y), 0.0)) == bool(free)


def test_segment_free_matches_millimetre_sampling():
    w = load_world(_world_text())
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(200):
        a, b = rng.uniform(0.3, 9.7, size=(2, 2))
        length = float(np.hypot(*(b - a)))
        t = np.linspace(0.0, 1.0, int(math.ceil(length / 0.001)) + 1)
        xs = a[0] + t * (b[0] - a[0])
        ys = a[1] + t * (b[1] - a[1])
        closest = float(_square_distance(xs, ys).min())
        if abs(closest - w.robot_radius) < 2e-3:
            continue
        assert segment_free(w, tuple(a), tuple(b)) == (closest > w.robot_radius)
        checked += 1
    assert checked > 150


def test_is_free_shrinks_as_the_robot_grows():
    base = load_world(_world_text())
    rng = np.random.default_rng(3)
    radii = (0.1, 0.2, 0.5)
    worlds = [replace(base, robot_radius=r) for r in radii]
    for x, y in rng.uniform(0.0, 10.0, size=(500, 2)):
        pose = Pose(float(x), float(y), 0.0)
        free = [is_free(w, pose) for w in worlds]
        assert free == sorted(free, reverse=True)


def test_region_contains_ignores_vertex_order():
    ccw = ((0.0, 0.0), (4.0, 0.0), (4.0, 1.0), (1.0, 1.0), (1.0, 3.0), (0.0, 3.0))
    regions = [Region("l", ccw, "room"), Region("l", tuple(reversed(ccw)), "room")]
    rng = np.random.default_rng(5)
    poses = [Pose(float(x), float(y), 0.0) for x, y in rng.uniform(-0.5, 4.5, size=(300, 2))]
    poses += [Pose(x, y, 0.0) for x, y in ccw]
    inside = [region_contains(regions[0], p) for p in poses]
    assert any(inside) and not all(inside)
    assert inside == [region_contains(regions[1], p) for p in poses]


def test_closed_doors_block_only_automatic_doors(corridor_world):
    assert crosses_closed_door(corridor_world, (5.4, 6.5), (6.6, 6.5))
    assert not crosses_closed_door(corridor_world, (2.5, 3.8), (2.5, 2.2))
    assert not crosses_closed_door(corridor_world, (1, 5), (4, 5))


def test_landmarks_in_range_respects_range_and_occlusion(two_route_world):
    in_dark = Pose(7.5, 7.0, 0.0)
    assert landmarks_in_range(two_route_world, in_dark) == []
    clear = replace(two_route_world, occlusion=False)
    assert "hall_low_1" in {l.id for l in landmarks_in_range(clear, in_dark)}

    in_goal = Pose(18.0, 5.75, 0.0)
    assert [l.id for l in landmarks_in_range(two_route_world, in_goal)] == ["goal_post"]


def test_region_containment_includes_boundary(office_mini_world):
    s = office_mini_world.region("s")
    assert region_contains(s, Pose(1.0, 3.0, 0))
    assert region_contains(s, Pose(0.3, 2.0, 0))
    assert not region_contains(s, Pose(2.0, 3.0, 0))
    assert region_of(office_mini_world, Pose(9.0, 3.0, 0)) == "l"
    assert region_of(office_mini_world, Pose(5.0, 2.0, 0)) is None


def test_free_area_subtracts_obstacles(office_mini_world):
    assert free_area(office_mini_world) == pytest.approx(60.0 - 0.36)


def test_fingerprint_is_stable_sha256(fixture_dir):
    text = (fixture_dir / "office.world.json").read_text(encoding="utf-8")
    assert fingerprint(text) == fingerprint(text)
    assert len(fingerprint(text)) == 64
    assert fingerprint(text) != fingerprint(text + " ")


def test_door_heading_sets_endpoint_direction(corridor_world):
    h1 = corridor_world.door("h1")
    (x0, y0), (x1, y1) = h1.endpoints()
    assert math.isclose(y0, 3.0, abs_tol=1e-9) and math.isclose(y1, 3.0, abs_tol=1e-9)
    assert sorted([x0, x1]) == pytest.approx([2.0, 3.0])
