"""
Probabilistic roadmap over a World: uniformly sampled collision-free poses,
k-nearest-neighbor straight edges, per-region pose instantiations, door-front
nodes and the dynamic door edges inserted while the planner explores a
branch.

Snapshot format (JSON):

    {"format": 1, "edge_step": 0.5, "k_neighbors": 6, "clearance": 0.0,
     "nodes": [[x, y, theta], ...],
     "edges": [[edge_id, a, b, length, dynamic], ...],
     "region_nodes": {"c1": [12, 13, 14], ...},
     "door_nodes": [["d12", "r1", 40], ...]}
"""

import json
import math
from contextlib import contextmanager
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.spatial import KDTree
from shapely.geometry import LineString

from belief_core import Pose, steering_control, Control
from world import (
    World,
    crosses_closed_door,
    free_area,
    is_free,
    region_contains,
    segment_free,
)


MAX_SAMPLE_ATTEMPTS = 10_000
DOOR_FRONT_OFFSET = 0.6
SNAPSHOT_FORMAT = 1
CANDIDATE_FACTOR = 3


class RoadmapError(ValueError):
    """Roadmap construction or surgery failed."""


@dataclass(frozen=True)
class PrmConfig:
    density_d: float = 1.0
    k_neighbors: int = 6
    edge_step: float = 0.5
    seed: int = 0
    region_samples: int = 3
    clearance: float = 0.0

    def __post_init__(self):
        if not self.density_d > 0.0:
            raise RoadmapError(f"density_d must be > 0, got {self.density_d!r}")
        if self.k_neighbors < 1:
            raise RoadmapError(f"k_neighbors must be >= 1, got {self.k_neighbors!r}")
        if not self.edge_step > 0.0:
            raise RoadmapError(f"edge_step must be > 0, got {self.edge_step!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise RoadmapError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.region_samples < 1:
            raise RoadmapError(f"region_samples must be >= 1, got {self.region_samples!r}")
        if self.clearance < 0.0:
            raise RoadmapError(f"clearance must be >= 0, got {self.clearance!r}")


class Roadmap:
    """Undirected roadmap graph; nodes carry poses, edges carry length and id."""

    def __init__(self, edge_step: float = 0.5, k_neighbors: int = 6, clearance: float = 0.0):
        self.graph = nx.Graph()
        self.nodes: list[Pose] = []
        self.region_nodes: dict[str, list[int]] = {}
        self.door_nodes: dict[tuple[str, str], int] = {}
        self.edge_index: dict[int, tuple[int, int]] = {}
        self.dynamic_edges: set[int] = set()
        self.edge_step = edge_step
        self.k_neighbors = k_neighbors
        self.clearance = clearance
        self._next_edge_id = 0
        self._positions = None

    def __len__(self) -> int:
        return len(self.nodes)

    def pose(self, node: int) -> Pose:
        return self.nodes[node]

    def add_node(self, pose: Pose) -> int:
        index = len(self.nodes)
        self.nodes.append(pose)
        self.graph.add_node(index)
        self._positions = None
        return index

    def add_edge(self, a: int, b: int, dynamic: bool = False) -> int:
        if a == b:
            raise RoadmapError(f"self-loop on node {a}")
        if self.graph.has_edge(a, b):
            raise RoadmapError(f"edge {a}-{b} already exists")
        pa, pb = self.nodes[a], self.nodes[b]
        edge_id = self._next_edge_id
        self._next_edge_id += 1
        self.graph.add_edge(a, b, length=math.hypot(pb.x - pa.x, pb.y - pa.y), edge_id=edge_id, dynamic=dynamic)
        self.edge_index[edge_id] = (min(a, b), max(a, b))
        if dynamic:
            self.dynamic_edges.add(edge_id)
        return edge_id

    def has_edge(self, a: int, b: int) -> bool:
        return self.graph.has_edge(a, b)

    def edge_id(self, a: int, b: int) -> int:
        return self.graph.edges[a, b]['edge_id']

    def edge_length(self, a: int, b: int) -> float:
        return self.graph.edges[a, b]['length']

    def neighbors(self, node: int) -> list[int]:
        return sorted(self.graph.adj[node])

    def edge_pairs(self) -> set:
        return set(self.edge_index.values())

    def positions(self) -> np.ndarray:
        if self._positions is None:
            self._positions = np.array([[p.x, p.y] for p in self.nodes]).reshape(-1, 2)
        return self._positions

    def find_node(self, pose: Pose) -> int | None:
        for index, existing in enumerate(self.nodes):
            if existing == pose:
                return index
        return None

    @contextmanager
    def overlay(self, pairs):
        """Temporarily insert a branch's dynamic edges; removes them on exit."""
        added = []
        try:
            for a, b in pairs:
                added.append(self.add_edge(a, b, dynamic=True))
            yield self
        finally:
            for edge_id in reversed(added):
                remove_edge(self, edge_id)


# ===== SAMPLING =====

def _sample_free(w: World, rng, bounds, accept, what: str) -> Pose:
    xmin, ymin, xmax, ymax = bounds
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        x, y = rng.uniform((xmin, ymin), (xmax, ymax))
        pose = Pose(float(x), float(y), float(rng.uniform(-math.pi, math.pi)))
        if accept(pose):
            return pose
    raise RoadmapError(f"no free pose found in {what} after {MAX_SAMPLE_ATTEMPTS} attempts")


def _edge_ok(w: World, rm: Roadmap, a: int, b: int) -> bool:
    pa, pb = rm.nodes[a], rm.nodes[b]
    return (
        segment_free(w, (pa.x, pa.y), (pb.x, pb.y), margin=rm.clearance)
        and not crosses_closed_door(w, (pa.x, pa.y), (pb.x, pb.y))
    )


def _link(w: World, rm: Roadmap, node: int, candidates) -> None:
    linked = 0
    for other in candidates:
        if linked >= rm.k_neighbors:
            break
        if other == node:
            continue
        if rm.has_edge(node, other):
            linked += 1
        elif _edge_ok(w, rm, node, other):
            rm.add_edge(node, other)
            linked += 1


def _connect_all(w: World, rm: Roadmap) -> None:
    n = len(rm)
    if n < 2:
        return
    positions = rm.positions()
    tree = KDTree(positions)
    query_k = min(n, CANDIDATE_FACTOR * rm.k_neighbors + 1)
    dists, inds = tree.query(positions, k=query_k)
    dists = np.asarray(dists).reshape(n, -1)
    inds = np.asarray(inds).reshape(n, -1)
    for node in range(n):
        order = sorted(zip(dists[node].tolist(), inds[node].tolist()))
        _link(w, rm, node, [int(j) for _, j in order])


def _connect_new(w: World, rm: Roadmap, node: int) -> None:
    positions = rm.positions()
    here = positions[node]
    dists = np.hypot(positions[:, 0] - here[0], positions[:, 1] - here[1])
    order = np.lexsort((np.arange(len(dists)), dists))
    _link(w, rm, node, [int(j) for j in order[: CANDIDATE_FACTOR * rm.k_neighbors + 1]])


def insert_pose(w: World, rm: Roadmap, pose: Pose) -> int:
    """Add an exact pose as a connected node, reusing an identical existing node."""
    existing = rm.find_node(pose)
    if existing is not None:
        return existing
    if not is_free(w, pose):
        raise RoadmapError(f"pose ({pose.x:.3f}, {pose.y:.3f}) is not collision-free")
    node = rm.add_node(pose)
    _connect_new(w, rm, node)
    return node


def _add_door_fronts(w: World, rm: Roadmap) -> None:
    for door in w.doors:
        if not door.automatic:
            continue
        c = door.center
        for sign in (-1.0, 1.0):
            x = c.x + sign * DOOR_FRONT_OFFSET * math.cos(c.theta)
            y = c.y + sign * DOOR_FRONT_OFFSET * math.sin(c.theta)
            # face the door from either side
            pose = Pose(x, y, c.theta if sign < 0 else c.theta + math.pi)
            side = next((rid for rid in door.connects if region_contains(w.region(rid), pose)), None)
            if side is None:
                raise RoadmapError(f"door {door.id!r}: front pose ({x:.2f}, {y:.2f}) lies in neither connected region")
            rm.door_nodes[(door.id, side)] = insert_pose(w, rm, pose)


# ===== CONSTRUCTION =====

def build_prm(w: World, cfg: PrmConfig) -> Roadmap:
    area = free_area(w)
    if area <= 0.0:
        raise RoadmapError("world has no free area")

    rng = np.random.default_rng(cfg.seed)
    rm = Roadmap(edge_step=cfg.edge_step, k_neighbors=cfg.k_neighbors, clearance=cfg.clearance)

    for pose in w.waypoints:
        rm.add_node(pose)

    count = math.ceil(cfg.density_d * area)
    accept = lambda pose: is_free(w, pose, margin=cfg.clearance)
    for _ in range(count):
        rm.add_node(_sample_free(w, rng, w.bounds, accept, "world bounds"))

    _connect_all(w, rm)
    _add_door_fronts(w, rm)
    for region in w.regions:
        instantiate_region(w, rm, region.id, cfg.region_samples, rng)
    return rm


def instantiate_region(w: World, rm: Roadmap, region_id: str, n: int, rng) -> list[int]:
    """Sample n free poses inside a region and connect them to the roadmap."""
    if not w.has_region(region_id):
        raise RoadmapError(f"unknown region {region_id!r}")
    if n < 1:
        raise RoadmapError(f"instantiation count must be >= 1, got {n}")
    region = w.region(region_id)
    accept = lambda pose: region_contains(region, pose) and is_free(w, pose, margin=rm.clearance)

    added = []
    for _ in range(n):
        node = rm.add_node(_sample_free(w, rng, region.geometry.bounds, accept, f"region {region_id!r}"))
        _connect_new(w, rm, node)
        added.append(node)
    rm.region_nodes.setdefault(region_id, []).extend(added)
    return added


# ===== EDGE CONTROLS =====

def discretize_motion(start: Pose, end: Pose, step: float) -> list[Control]:
    """Rotate toward end, translate in equal pieces no longer than step, rotate to end.theta."""
    whole = steering_control(start, (end.x, end.y), end.theta)
    if whole.d_trans == 0.0:
        return [whole]
    pieces = max(1, math.ceil(whole.d_trans / step - 1e-9))
    length = whole.d_trans / pieces
    if pieces == 1:
        return [whole]
    controls = [Control(whole.d_rot1, length, 0.0)]
    controls.extend(Control(0.0, length, 0.0) for _ in range(pieces - 2))
    controls.append(Control(0.0, length, whole.d_rot2))
    return controls


def edge_controls(rm: Roadmap, start: int, end: int, step: float) -> list[Control]:
    if not rm.has_edge(start, end):
        raise RoadmapError(f"no edge between nodes {start} and {end}")
    return discretize_motion(rm.pose(start), rm.pose(end), step)


# ===== DOOR SURGERY =====

def add_door_edge(rm: Roadmap, start: int, door, w: World) -> int:
    """Connect the door-front node to the nearest node across the door."""
    pose = rm.pose(start)
    side = next((rid for rid in door.connects if region_contains(w.region(rid), pose)), None)
    if side is None:
        raise RoadmapError(f"node {start} is not inside a region connected by door {door.id!r}")
    destination = w.region(door.connects[1] if side == door.connects[0] else door.connects[0])

    candidates = [
        node for node, candidate in enumerate(rm.nodes)
        if node != start and region_contains(destination, candidate)
    ]
    if not candidates:
        raise RoadmapError(f"region {destination.id!r} behind door {door.id!r} has no roadmap nodes")

    candidates.sort(key=lambda node: (pose.distance_to(rm.nodes[node].x, rm.nodes[node].y), node))
    for node in candidates:
        other = rm.nodes[node]
        if rm.has_edge(start, node):
            continue
        if not segment_free(w, (pose.x, pose.y), (other.x, other.y)):
            continue
        if LineString([(pose.x, pose.y), (other.x, other.y)]).intersects(door.segment):
            return rm.add_edge(start, node, dynamic=True)
    raise RoadmapError(f"no node in {destination.id!r} is reachable through door {door.id!r}")


def remove_edge(rm: Roadmap, edge_id: int) -> Roadmap:
    if edge_id not in rm.dynamic_edges:
        if edge_id in rm.edge_index:
            raise RoadmapError(f"edge {edge_id} is static and cannot be removed")
        raise RoadmapError(f"unknown edge id {edge_id}")
    a, b = rm.edge_index.pop(edge_id)
    rm.graph.remove_edge(a, b)
    rm.dynamic_edges.discard(edge_id)
    return rm


# ===== SNAPSHOTS =====

def export_roadmap(rm: Roadmap) -> str:
    edges = []
    for edge_id in sorted(rm.edge_index):
        a, b = rm.edge_index[edge_id]
        edges.append([edge_id, a, b, rm.edge_length(a, b), edge_id in rm.dynamic_edges])
    snapshot = {
        'format': SNAPSHOT_FORMAT,
        'edge_step': rm.edge_step,
        'k_neighbors': rm.k_neighbors,
        'clearance': rm.clearance,
        'nodes': [[p.x, p.y, p.theta] for p in rm.nodes],
        'edges': edges,
        'region_nodes': {rid: list(nodes) for rid, nodes in sorted(rm.region_nodes.items())},
        'door_nodes': [[door_id, rid, node] for (door_id, rid), node in sorted(rm.door_nodes.items())],
    }
    return json.dumps(snapshot, indent=1)


def import_roadmap(text: str) -> Roadmap:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RoadmapError(f"snapshot line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if data.get('format') != SNAPSHOT_FORMAT:
        raise RoadmapError(f"unsupported snapshot format {data.get('format')!r}")

    rm = Roadmap(edge_step=data['edge_step'], k_neighbors=data['k_neighbors'], clearance=data.get('clearance', 0.0))
    for x, y, theta in data['nodes']:
        rm.add_node(Pose(x, y, theta))
    for edge_id, a, b, _length, dynamic in data['edges']:
        rm._next_edge_id = edge_id
        rm.add_edge(a, b, dynamic=dynamic)
    rm.region_nodes = {rid: list(nodes) for rid, nodes in data['region_nodes'].items()}
    rm.door_nodes = {(door_id, rid): node for door_id, rid, node in data['door_nodes']}
    return rm
