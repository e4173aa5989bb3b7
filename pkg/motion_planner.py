"""
Belief-space search over the roadmap.

Beliefs are pushed along roadmap edges with the EKF: one prediction per
edge control, then an update for every landmark visible from the node the
edge ends at. The search picks the next node by the configured cost, either
greedily (walk to the cheapest neighbor, skip cycles, backtrack on dead
ends) or best-first over accumulated cost (dijkstra).

Searches return ``(result, reason_code)``; ``result`` is None when no plan
exists and ``reason_code`` says why.
"""

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from belief_core import GaussianBelief, MotionNoiseParams, ekf_predict, ekf_update, simulate_observation
from roadmap import Roadmap, edge_controls
from world import World, landmarks_in_range


COST_MODES = ('euclidean', 'sigma_euclidean', 'petlon', 'mptp')
STRATEGIES = ('greedy', 'dijkstra')

MODE_DEFAULTS = {
    'euclidean': {'m_euc': 1.0},
    'sigma_euclidean': {'m_euc': 1.0, 'm_sigma': 1.0},
    'petlon': {'m_u': 1.0, 'm_g': 1.0},
    'mptp': {'m_u': 1.0, 'm_g': 1.0, 'm_sigma': 1.0},
}


class MotionPlanningError(ValueError):
    """Invalid motion query (unknown nodes, bad strategy, empty goal region)."""


# ===== COST =====

@dataclass(frozen=True)
class CostConfig:
    mode: str = 'mptp'
    m_u: float = 0.0
    m_g: float = 0.0
    m_sigma: float = 0.0
    m_euc: float = 0.0

    def __post_init__(self):
        mode = self.mode.replace('-', '_').lower()
        if mode not in COST_MODES:
            raise MotionPlanningError(f"unknown cost mode {self.mode!r}; expected one of {COST_MODES}")
        object.__setattr__(self, 'mode', mode)
        weights = (self.m_u, self.m_g, self.m_sigma, self.m_euc)
        if any(not math.isfinite(w) or w < 0.0 for w in weights):
            raise MotionPlanningError("cost weights must be finite and >= 0")
        if not any(w > 0.0 for w in weights):
            raise MotionPlanningError("at least one cost weight must be positive")

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "CostConfig":
        """Mode defaults with any explicitly given weight taking precedence."""
        key = mode.replace('-', '_').lower()
        weights = dict(MODE_DEFAULTS.get(key, {}))
        weights.update({name: value for name, value in overrides.items() if value is not None})
        return cls(mode=key, **weights)


def step_cost(cfg: CostConfig, b_after: GaussianBelief, controls, goal_point) -> float:
    distance = sum(abs(u.d_trans) for u in controls)
    if cfg.mode == 'euclidean':
        return cfg.m_euc * distance
    if cfg.mode == 'sigma_euclidean':
        return cfg.m_euc * distance + cfg.m_sigma * b_after.trace

    to_goal = math.hypot(goal_point[0] - b_after.mean.x, goal_point[1] - b_after.mean.y)
    cost = cfg.m_u * distance + cfg.m_g * to_goal
    if cfg.mode == 'mptp':
        cost += cfg.m_sigma * b_after.trace
    return cost


# ===== RESULTS =====

@dataclass(frozen=True, eq=False)
class MotionPlan:
    node_path: tuple
    beliefs: tuple
    cost: float
    goal_trace: float
    controls: tuple
    step_costs: tuple = ()
    poses: tuple = ()

    @property
    def start(self) -> int:
        return self.node_path[0]

    @property
    def goal(self) -> int:
        return self.node_path[-1]


@dataclass
class SearchStats:
    """Deterministic effort counters; used where wall-clock time would break reproducibility."""

    searches: int = 0
    expanded: int = 0
    propagations: int = 0

    def merge(self, other: "SearchStats") -> None:
        self.searches += other.searches
        self.expanded += other.expanded
        self.propagations += other.propagations


# ===== PROPAGATION =====

def _propagate(b, rm: Roadmap, start: int, end: int, w: World, noise: MotionNoiseParams, rng):
    controls = edge_controls(rm, start, end, rm.edge_step)
    belief = b
    for u in controls:
        belief = ekf_predict(belief, u, noise)
    for landmark in landmarks_in_range(w, belief.mean):
        z = simulate_observation(rng, belief.mean, landmark, w.sensor)
        if z is not None:
            belief = ekf_update(belief, z, landmark, w.sensor)
    return belief, controls


def propagate_edge(b: GaussianBelief, rm: Roadmap, start: int, end: int, w: World, noise: MotionNoiseParams, rng) -> GaussianBelief:
    belief, _ = _propagate(b, rm, start, end, w, noise, rng)
    return belief


# ===== SEARCH =====

def _build_plan(rm, path, beliefs, controls, costs) -> MotionPlan:
    return MotionPlan(
        node_path=tuple(path),
        beliefs=tuple(beliefs),
        cost=float(sum(costs)),
        goal_trace=beliefs[-1].trace,
        controls=tuple(u for chunk in controls for u in chunk),
        step_costs=tuple(costs),
        poses=tuple(rm.pose(node) for node in path),
    )


@dataclass
class _Frame:
    node: int
    belief: GaussianBelief
    cost: float
    controls: list
    candidates: object = None


def _greedy(rm, w, start_node, b0, goal_node, cfg, rng, noise, stats):
    goal = rm.pose(goal_node)
    goal_point = (goal.x, goal.y)
    visited = {start_node}
    stack = [_Frame(start_node, b0, 0.0, [])]

    while stack:
        frame = stack[-1]
        if frame.node == goal_node:
            return _build_plan(
                rm,
                [f.node for f in stack],
                [f.belief for f in stack],
                [f.controls for f in stack[1:]],
                [f.cost for f in stack[1:]],
            ), None

        if frame.candidates is None:
            stats.expanded += 1
            scored = []
            for neighbor in rm.neighbors(frame.node):
                if neighbor in visited:
                    continue
                belief, controls = _propagate(frame.belief, rm, frame.node, neighbor, w, noise, rng)
                stats.propagations += 1
                scored.append((step_cost(cfg, belief, controls, goal_point), neighbor, belief, controls))
            scored.sort(key=lambda item: (item[0], item[1]))
            frame.candidates = iter(scored)

        # next best neighbor that did not join the path meanwhile
        chosen = next((item for item in frame.candidates if item[1] not in visited), None)
        if chosen is None:
            stack.pop()
            continue
        cost, neighbor, belief, controls = chosen
        visited.add(neighbor)
        stack.append(_Frame(neighbor, belief, cost, controls))

    return None, 'unreachable'


def _dijkstra(rm, w, start_node, b0, goal_node, cfg, rng, noise, stats):
    goal = rm.pose(goal_node)
    goal_point = (goal.x, goal.y)
    counter = 0
    frontier = [(0.0, start_node, counter, None, b0, (), 0.0)]
    settled = {}

    while frontier:
        g, node, _, parent, belief, controls, cost = heapq.heappop(frontier)
        if node in settled:
            continue
        settled[node] = (parent, belief, controls, cost)
        if node == goal_node:
            path = [node]
            while settled[path[-1]][0] is not None:
                path.append(settled[path[-1]][0])
            path.reverse()
            entries = [settled[n] for n in path]
            return _build_plan(
                rm,
                path,
                [e[1] for e in entries],
                [list(e[2]) for e in entries[1:]],
                [e[3] for e in entries[1:]],
            ), None

        stats.expanded += 1
        for neighbor in rm.neighbors(node):
            if neighbor in settled:
                continue
            next_belief, next_controls = _propagate(belief, rm, node, neighbor, w, noise, rng)
            stats.propagations += 1
            edge_cost = step_cost(cfg, next_belief, next_controls, goal_point)
            counter += 1
            heapq.heappush(frontier, (g + edge_cost, neighbor, counter, node, next_belief, tuple(next_controls), edge_cost))

    return None, 'unreachable'


def belief_search(rm: Roadmap, w: World, start, goal_node: int, cfg: CostConfig, rng,
                  strategy: str = 'greedy', noise: MotionNoiseParams | None = None,
                  stats: SearchStats | None = None):
    """
    Search the roadmap in belief space from start=(node, belief) to goal_node.

    Returns:
        (MotionPlan, None) on success, (None, 'unreachable') when the goal
        cannot be reached.
    """
    start_node, b0 = start
    for node in (start_node, goal_node):
        if not 0 <= node < len(rm):
            raise MotionPlanningError(f"node {node} is not in the roadmap")
    if strategy not in STRATEGIES:
        raise MotionPlanningError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")

    noise = w.motion_noise if noise is None else noise
    stats = stats if stats is not None else SearchStats()
    stats.searches += 1
    search = _greedy if strategy == 'greedy' else _dijkstra
    return search(rm, w, start_node, b0, goal_node, cfg, rng, noise, stats)


def derive_rngs(rng, count: int) -> list:
    """Independent child generators, one per index, drawn from a single parent draw."""
    base = int(rng.integers(0, 2 ** 63 - 1))
    return [np.random.default_rng([base, index]) for index in range(count)]


def best_instantiation(rm: Roadmap, w: World, start, goal_region_id: str, cfg: CostConfig, rng,
                       strategy: str = 'greedy', noise: MotionNoiseParams | None = None,
                       workers: int = 1, stats: SearchStats | None = None):
    """
    Search to every instantiation of the goal region and keep the cheapest.

    Returns:
        ((node, MotionPlan), None) or (None, 'no_instantiations_reached').
    """
    goals = sorted(rm.region_nodes.get(goal_region_id, []))
    if not goals:
        raise MotionPlanningError(f"region {goal_region_id!r} has no roadmap instantiations")

    child_rngs = derive_rngs(rng, len(goals))
    child_stats = [SearchStats() for _ in goals]

    def run(index):
        plan, _ = belief_search(rm, w, start, goals[index], cfg, child_rngs[index], strategy, noise, child_stats[index])
        return plan

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            plans = list(pool.map(run, range(len(goals))))
    else:
        plans = [run(index) for index in range(len(goals))]

    if stats is not None:
        for item in child_stats:
            stats.merge(item)

    best = None
    for node, plan in zip(goals, plans):
        if plan is None:
            continue
        if best is None or plan.cost < best[1].cost:
            best = (node, plan)
    if best is None:
        return None, 'no_instantiations_reached'
    return best, None


def check_feasible(plan: MotionPlan, eta: float) -> bool:
    return plan.goal_trace < eta
