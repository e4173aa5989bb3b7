"""
Static environment model: bounds, convex obstacles, regions, doors and
landmarks, with the collision predicates used by the roadmap, the planner
and the simulation harness.

World file (JSON, lengths in meters, angles in radians):

    {
      "format": 1,
      "bounds": [xmin, ymin, xmax, ymax],
      "robot_radius": 0.2,                 # optional, default 0.2
      "occlusion": true,                   # optional, walls block line of sight
      "sensor": {"q_range_var": 0.01, "q_bearing_var": 0.0025, "max_range": 5.0},
      "motion_noise": {"alpha1": 0.01, "alpha2": 0.0005, "alpha3": 0.005, "alpha4": 0.0005},
      "obstacles": [[[x, y], ...], ...],   # convex polygons
      "regions": [{"id": "c1", "kind": "cubicle", "polygon": [[x, y], ...]}],
      "doors": [{"id": "d12", "connects": ["r1", "r2"], "center": [x, y, theta],
                 "width": 1.0, "automatic": true}],
      "landmarks": [{"id": "printer", "x": 4.0, "y": 5.0}],   # ids of every entity are lowercased
      "waypoints": [[x, y, theta], ...]    # optional surveyed roadmap poses
    }

A door's heading is its passage direction; its endpoints sit width/2 to
either side and must lie on a region or obstacle boundary.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

from shapely.geometry import LineString, Point, Polygon, box
from shapely.ops import unary_union
from shapely.prepared import prep

from belief_core import BeliefError, Landmark, MotionNoiseParams, Pose, SensorParams


WORLD_FORMAT = 1
DEFAULT_ROBOT_RADIUS = 0.2
DEFAULT_MOTION_NOISE = MotionNoiseParams(alpha1=0.01, alpha2=0.0005, alpha3=0.005, alpha4=0.0005)
REGION_KINDS = {'cubicle', 'room', 'corridor', 'lift', 'start', 'goal'}
BOUNDARY_TOL = 1e-6
CONVEX_TOL = 1e-9


class WorldFormatError(ValueError):
    """World text is not valid JSON."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class WorldValidationError(ValueError):
    """World content violates an invariant; names the offending entity."""

    def __init__(self, entity: str, message: str):
        super().__init__(f"{entity}: {message}")
        self.entity = entity


# ===== TYPES =====

@dataclass(frozen=True)
class Region:
    id: str
    polygon: tuple
    kind: str

    @cached_property
    def geometry(self) -> Polygon:
        return Polygon(self.polygon)


@dataclass(frozen=True)
class Door:
    id: str
    connects: tuple
    center: Pose
    width: float
    automatic: bool = True

    def endpoints(self):
        half = self.width / 2.0
        nx = -math.sin(self.center.theta) * half
        ny = math.cos(self.center.theta) * half
        return (
            (self.center.x + nx, self.center.y + ny),
            (self.center.x - nx, self.center.y - ny),
        )

    @cached_property
    def segment(self) -> LineString:
        return LineString(self.endpoints())


@dataclass(frozen=True)
class World:
    bounds: tuple
    obstacles: tuple = ()
    regions: tuple = ()
    doors: tuple = ()
    landmarks: tuple = ()
    sensor: SensorParams = field(default_factory=SensorParams)
    robot_radius: float = DEFAULT_ROBOT_RADIUS
    occlusion: bool = True
    motion_noise: MotionNoiseParams = DEFAULT_MOTION_NOISE
    waypoints: tuple = ()

    @cached_property
    def _obstacle_union(self):
        if not self.obstacles:
            return None
        return unary_union([Polygon(poly) for poly in self.obstacles])

    @cached_property
    def _prepared_obstacles(self):
        union = self._obstacle_union
        return prep(union) if union is not None else None

    @cached_property
    def _region_index(self) -> dict:
        return {region.id: region for region in self.regions}

    @cached_property
    def _door_index(self) -> dict:
        return {door.id: door for door in self.doors}

    def region(self, region_id: str) -> Region:
        try:
            return self._region_index[region_id]
        except KeyError:
            raise WorldValidationError(region_id, "unknown region") from None

    def door(self, door_id: str) -> Door:
        try:
            return self._door_index[door_id]
        except KeyError:
            raise WorldValidationError(door_id, "unknown door") from None

    def has_region(self, region_id: str) -> bool:
        return region_id in self._region_index

    def has_door(self, door_id: str) -> bool:
        return door_id in self._door_index


# ===== PREDICATES =====

def _inside_bounds(w: World, x: float, y: float, radius: float) -> bool:
    xmin, ymin, xmax, ymax = w.bounds
    return xmin + radius <= x <= xmax - radius and ymin + radius <= y <= ymax - radius


def is_free(w: World, p: Pose, margin: float = 0.0) -> bool:
    """True iff the robot disc at (p.x, p.y) stays inside bounds and off every obstacle."""
    radius = w.robot_radius + margin
    if not _inside_bounds(w, p.x, p.y, radius):
        return False
    union = w._obstacle_union
    if union is None:
        return True
    return union.distance(Point(p.x, p.y)) >= radius and not union.contains(Point(p.x, p.y))


def segment_free(w: World, a, b, margin: float = 0.0) -> bool:
    """Exact swept-disc test along segment ab."""
    radius = w.robot_radius + margin
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    # bounds are convex, so checking both endpoint discs covers the sweep
    if not (_inside_bounds(w, ax, ay, radius) and _inside_bounds(w, bx, by, radius)):
        return False
    union = w._obstacle_union
    if union is None:
        return True
    if ax == bx and ay == by:
        geom = Point(ax, ay)
    else:
        geom = LineString([(ax, ay), (bx, by)])
    if w._prepared_obstacles.intersects(geom):
        return False
    return union.distance(geom) >= radius


def crosses_closed_door(w: World, a, b) -> bool:
    """True when segment ab passes through an automatic door, which stays shut for static edges."""
    if a[0] == b[0] and a[1] == b[1]:
        return False
    line = LineString([(a[0], a[1]), (b[0], b[1])])
    return any(door.automatic and line.intersects(door.segment) for door in w.doors)


def landmarks_in_range(w: World, p: Pose) -> list:
    visible = []
    for landmark in w.landmarks:
        distance = p.distance_to(landmark.x, landmark.y)
        if distance > w.sensor.max_range or distance <= 1e-9:
            continue
        if w.occlusion and w._prepared_obstacles is not None:
            sight = LineString([(p.x, p.y), (landmark.x, landmark.y)])
            if w._prepared_obstacles.intersects(sight):
                continue
        visible.append(landmark)
    return visible


def region_contains(r: Region, p: Pose) -> bool:
    return r.geometry.covers(Point(p.x, p.y))


def region_of(w: World, p: Pose) -> str | None:
    """Id of the first region containing p, in file order."""
    for region in w.regions:
        if region_contains(region, p):
            return region.id
    return None


def free_area(w: World) -> float:
    area = box(*w.bounds)
    if w._obstacle_union is not None:
        area = area.difference(w._obstacle_union)
    return float(area.area)


def fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


# ===== LOADING =====

def _number(value, entity: str, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise WorldValidationError(entity, f"{name} must be a finite number")
    return float(value)


def _points(raw, entity: str) -> tuple:
    if not isinstance(raw, list) or len(raw) < 3:
        raise WorldValidationError(entity, "polygon needs at least 3 vertices")
    points = []
    for vertex in raw:
        if not isinstance(vertex, list) or len(vertex) != 2:
            raise WorldValidationError(entity, "vertices must be [x, y] pairs")
        points.append((_number(vertex[0], entity, 'x'), _number(vertex[1], entity, 'y')))
    polygon = Polygon(points)
    if not polygon.is_valid or polygon.area <= 0.0:
        raise WorldValidationError(entity, "polygon is degenerate or self-intersecting")
    return tuple(points)


def _pose(raw, entity: str) -> Pose:
    if not isinstance(raw, list) or len(raw) != 3:
        raise WorldValidationError(entity, "pose must be [x, y, theta]")
    return Pose(*(_number(v, entity, 'pose') for v in raw))


def _entry(raw, entity: str) -> dict:
    if not isinstance(raw, dict):
        raise WorldValidationError(entity, f"entry must be an object, got {type(raw).__name__}")
    return raw


def _unique(ids, kind: str):
    seen = set()
    for item_id in ids:
        if item_id in seen:
            raise WorldValidationError(item_id, f"duplicate {kind} id")
        seen.add(item_id)


def load_world(text: str) -> World:
    """Parse and validate a world file."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WorldFormatError(exc.msg, exc.lineno, exc.colno) from exc

    if not isinstance(data, dict):
        raise WorldValidationError('world', "top level must be an object")
    if data.get('format') != WORLD_FORMAT:
        raise WorldValidationError('format', f"expected format {WORLD_FORMAT}, got {data.get('format')!r}")

    raw_bounds = data.get('bounds')
    if not isinstance(raw_bounds, list) or len(raw_bounds) != 4:
        raise WorldValidationError('bounds', "must be [xmin, ymin, xmax, ymax]")
    bounds = tuple(_number(v, 'bounds', 'bound') for v in raw_bounds)
    if not (bounds[0] < bounds[2] and bounds[1] < bounds[3]):
        raise WorldValidationError('bounds', "min must be below max")
    bounds_geom = box(*bounds)

    robot_radius = _number(data.get('robot_radius', DEFAULT_ROBOT_RADIUS), 'robot_radius', 'robot_radius')
    if robot_radius < 0.0:
        raise WorldValidationError('robot_radius', "must be >= 0")

    try:
        sensor = SensorParams(**data.get('sensor', {}))
        motion_noise = MotionNoiseParams(**data['motion_noise']) if 'motion_noise' in data else DEFAULT_MOTION_NOISE
    except (TypeError, BeliefError) as exc:
        raise WorldValidationError('sensor/motion_noise', str(exc)) from exc

    obstacles = []
    for index, raw in enumerate(data.get('obstacles', [])):
        entity = f"obstacle[{index}]"
        points = _points(raw, entity)
        polygon = Polygon(points)
        if polygon.convex_hull.area - polygon.area > CONVEX_TOL * max(1.0, polygon.area):
            raise WorldValidationError(entity, "obstacle must be convex")
        obstacles.append(points)

    regions = []
    for index, raw in enumerate(data.get('regions', [])):
        raw = _entry(raw, f"region[{index}]")
        region_id = str(raw.get('id', '')).lower()
        if not region_id:
            raise WorldValidationError('region', "missing id")
        kind = raw.get('kind')
        if kind not in REGION_KINDS:
            raise WorldValidationError(region_id, f"unknown region kind {kind!r}")
        region = Region(region_id, _points(raw.get('polygon'), region_id), kind)
        if not bounds_geom.covers(region.geometry):
            raise WorldValidationError(region_id, "region polygon leaves the world bounds")
        regions.append(region)
    _unique([r.id for r in regions], 'region')
    region_ids = {r.id for r in regions}

    boundaries = [r.geometry.boundary for r in regions] + [Polygon(o).boundary for o in obstacles]
    doors = []
    for index, raw in enumerate(data.get('doors', [])):
        raw = _entry(raw, f"door[{index}]")
        door_id = str(raw.get('id', '')).lower()
        if not door_id:
            raise WorldValidationError('door', "missing id")
        connects = tuple(str(c).lower() for c in raw.get('connects', []))
        if len(connects) != 2 or connects[0] == connects[1]:
            raise WorldValidationError(door_id, "connects must name two distinct regions")
        for region_id in connects:
            if region_id not in region_ids:
                raise WorldValidationError(door_id, f"connects unknown region {region_id!r}")
        width = _number(raw.get('width'), door_id, 'width')
        if width <= 0.0:
            raise WorldValidationError(door_id, "width must be > 0")
        door = Door(door_id, connects, _pose(raw.get('center'), door_id), width, bool(raw.get('automatic', True)))
        for x, y in door.endpoints():
            point = Point(x, y)
            if not any(boundary.distance(point) <= BOUNDARY_TOL for boundary in boundaries):
                raise WorldValidationError(door_id, f"endpoint ({x:.3f}, {y:.3f}) is not on a region or obstacle boundary")
        doors.append(door)
    _unique([d.id for d in doors], 'door')

    landmarks = []
    for index, raw in enumerate(data.get('landmarks', [])):
        raw = _entry(raw, f"landmark[{index}]")
        landmark_id = str(raw.get('id', '')).lower()
        if not landmark_id:
            raise WorldValidationError('landmark', "missing id")
        landmarks.append(Landmark(landmark_id, _number(raw.get('x'), landmark_id, 'x'), _number(raw.get('y'), landmark_id, 'y')))
    _unique([l.id for l in landmarks], 'landmark')

    world = World(
        bounds=bounds,
        obstacles=tuple(obstacles),
        regions=tuple(regions),
        doors=tuple(doors),
        landmarks=tuple(landmarks),
        sensor=sensor,
        robot_radius=robot_radius,
        occlusion=bool(data.get('occlusion', True)),
        motion_noise=motion_noise,
    )

    waypoints = []
    for index, raw in enumerate(data.get('waypoints', [])):
        pose = _pose(raw, f"waypoint[{index}]")
        if not is_free(world, pose):
            raise WorldValidationError(f"waypoint[{index}]", "pose is not collision-free")
        waypoints.append(pose)
    return replace(world, waypoints=tuple(waypoints))


def load_world_file(path) -> World:
    with open(path, 'r', encoding='utf-8') as f:
        return load_world(f.read())
