"""
Task and motion planning in belief space.

A uniform-cost search runs over task states. Actions whose effects take a
value from an indirect fluent ask the motion planner for it: the fluent the
action raised at start names where the robot goes, the motion search
answers with a cost and a goal covariance trace, and the action is kept
only if that trace is below eta. Door actions additionally open a dynamic
roadmap edge that lives on the search branch until the robot leaves the
room.

    plan(...)          -> (TMPlan, None) | (None, reason)
    plan_anytime(...)  -> generator of improving TMPlans, returns the final one
"""

import heapq
import itertools
import math
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from belief_core import BeliefError, GaussianBelief, MotionNoiseParams, Pose
from motion_planner import CostConfig, MotionPlan, SearchStats, belief_search, best_instantiation, check_feasible
from roadmap import PrmConfig, Roadmap, RoadmapError, add_door_edge, build_prm, insert_pose, remove_edge
from run_log import log_event
from task_pddl import (
    Domain,
    GroundedAction,
    Problem,
    TaskState,
    apply_end,
    apply_start,
    applicable,
    end_conditions_hold,
    goal_satisfied,
    ground,
    initial_state,
    metric_functions,
    metric_value,
    trigger_of,
)
from world import World


COST_TOLERANCE = 1e-9
SIGNATURE_DECIMALS = 6
TRACE_FLUENTS = ('bound',)


class TmpError(ValueError):
    """Planner inputs do not fit together (missing belief, unknown targets, negative costs)."""


# ===== RESULT TYPES =====

@dataclass(frozen=True, eq=False)
class PlanStep:
    action: GroundedAction
    motion: MotionPlan | None = None
    cost: float = 0.0
    roadmap_added: tuple = ()
    roadmap_removed: tuple = ()

    @property
    def motion_cost(self) -> float:
        return self.motion.cost if self.motion is not None else 0.0


@dataclass
class PlannerStats:
    expanded: int = 0
    generated: int = 0
    motion_queries: int = 0
    memo_hits: int = 0
    pruned: dict = field(default_factory=dict)
    motion: SearchStats = field(default_factory=SearchStats)
    seconds: float = 0.0

    def count_pruned(self, reason: str) -> None:
        self.pruned[reason] = self.pruned.get(reason, 0) + 1

    def snapshot(self) -> "PlannerStats":
        return replace(self, pruned=dict(self.pruned), motion=replace(self.motion))


@dataclass(frozen=True, eq=False)
class TMPlan:
    steps: tuple
    total_cost: float
    task_cost: float
    motion_cost: float
    makespan: float
    feasible: bool
    start_node: int
    initial_belief: GaussianBelief
    stats: PlannerStats | None = None

    @property
    def signatures(self) -> tuple:
        return tuple(step.action.signature for step in self.steps)

    @property
    def node_path(self) -> list:
        """Roadmap nodes visited in order, each motion joined at its start node."""
        path = [self.start_node]
        for step in self.steps:
            if step.motion is not None:
                path.extend(step.motion.node_path[1:])
        return path


@dataclass(frozen=True, eq=False)
class SearchNode:
    task_state: TaskState
    robot_node: int
    belief: GaussianBelief
    g_cost: float
    plan_prefix: tuple = ()
    roadmap_delta: tuple = ()


# ===== HELPERS =====

def query_rng(seed: int, node: int, target: str) -> np.random.Generator:
    """Generator for one motion query, a pure function of (seed, start node, target)."""
    return np.random.default_rng([int(seed), int(node), zlib.crc32(target.encode('utf-8'))])


def initial_belief_from_problem(p: Problem) -> GaussianBelief:
    data = p.metadata.get('initial_belief')
    if data is None:
        raise TmpError(f"problem {p.name!r} has no '; @initial_belief' directive")
    try:
        mean = Pose(*[float(v) for v in data['mean']])
        return GaussianBelief(mean, np.array(data['cov'], dtype=float))
    except (KeyError, TypeError, BeliefError) as e:
        raise TmpError(f"problem {p.name!r}: malformed initial belief ({e})") from e


def build_planning_roadmap(w: World, p: Problem, prm_cfg: PrmConfig) -> Roadmap:
    """PRM for the world with the initial belief mean inserted as a node."""
    rm = build_prm(w, prm_cfg)
    insert_pose(w, rm, initial_belief_from_problem(p).mean)
    return rm


def _belief_signature(b: GaussianBelief) -> tuple:
    mean = np.round(b.mean.as_array(), SIGNATURE_DECIMALS) + 0.0
    cov = np.round(b.cov, SIGNATURE_DECIMALS) + 0.0
    return tuple(mean.tolist()) + tuple(cov.ravel().tolist())


class _Budget:
    def __init__(self, time_bound: float | None, expansion_bound: int | None):
        self.deadline = None if time_bound is None else time.monotonic() + time_bound
        self.expansions_left = expansion_bound

    def spend(self) -> bool:
        """Charge one expansion; False once the budget is gone."""
        if self.deadline is not None and time.monotonic() >= self.deadline:
            return False
        if self.expansions_left is not None:
            if self.expansions_left <= 0:
                return False
            self.expansions_left -= 1
        return True


class _ClosedSet:
    """
    Expanded arrivals grouped by task key. A new arrival is dominated when an
    earlier one at the same key was no costlier and no less certain (trace).
    """

    def __init__(self, key_of):
        self.key_of = key_of
        self.arrivals = {}

    def admit(self, node: SearchNode) -> bool:
        trace = node.belief.trace
        seen = self.arrivals.setdefault(self.key_of(node), [])
        for g, t in seen:
            if g <= node.g_cost + COST_TOLERANCE and t <= trace + COST_TOLERANCE:
                return False
        seen.append((node.g_cost, trace))
        return True


# ===== SEARCH =====

class _TaskMotionSearch:
    def __init__(self, d: Domain, p: Problem, w: World, rm: Roadmap, cfg: CostConfig, eta: float,
                 seed: int, strategy: str, noise: MotionNoiseParams | None, workers: int):
        if not eta >= 0.0:
            raise TmpError(f"eta must be >= 0, got {eta!r}")
        self.domain = d
        self.problem = p
        self.world = w
        self.rm = rm
        self.cfg = cfg
        self.eta = eta
        self.seed = seed
        self.strategy = strategy
        self.noise = w.motion_noise if noise is None else noise
        self.workers = workers
        self.stats = PlannerStats()
        self.memo = {}
        self.counter = itertools.count()

        self.actions = ground(d, p)
        self.s0 = initial_state(d, p)
        self.metric0 = metric_value(p, self.s0)
        self.b0 = initial_belief_from_problem(p)
        self.start_node = insert_pose(w, rm, self.b0.mean)

        written = {v_dir for a in self.actions for v_dir, _ in a.attachments}
        self.ignored_fluents = frozenset(metric_functions(p) | written | d.indirect_functions)

        for obj, _ in p.objects:
            if w.has_region(obj) and not rm.region_nodes.get(obj):
                raise TmpError(f"region {obj!r} has no roadmap instantiations")

    # --- bookkeeping ---

    def root(self) -> SearchNode:
        return SearchNode(self.s0, self.start_node, self.b0, 0.0)

    def closed_key(self, node: SearchNode) -> tuple:
        return node.task_state.key(self.ignored_fluents), node.robot_node, node.roadmap_delta

    def g_of(self, s: TaskState, makespan: float) -> float:
        if self.problem.metric is None:
            return makespan
        return metric_value(self.problem, s) - self.metric0

    def build_plan(self, node: SearchNode) -> TMPlan:
        steps = node.plan_prefix
        motion_cost = sum(step.motion_cost for step in steps)
        return TMPlan(
            steps=steps,
            total_cost=node.g_cost,
            task_cost=node.g_cost - motion_cost,
            motion_cost=motion_cost,
            makespan=sum(step.action.duration for step in steps),
            feasible=all(check_feasible(s.motion, self.eta) for s in steps if s.motion is not None),
            start_node=self.start_node,
            initial_belief=self.b0,
            stats=self.stats.snapshot(),
        )

    # --- semantic attachment ---

    def _motion_query(self, node: SearchNode, target: str, run):
        key = (node.robot_node, _belief_signature(node.belief), target, node.roadmap_delta)
        if key in self.memo:
            self.stats.memo_hits += 1
            return self.memo[key]
        self.stats.motion_queries += 1
        with self.rm.overlay(node.roadmap_delta):
            outcome = run(query_rng(self.seed, node.robot_node, target))
        self.memo[key] = outcome
        return outcome

    def _door_attachment(self, node: SearchNode, room: str, door_id: str):
        goal_node = self.rm.door_nodes.get((door_id, room))
        if goal_node is None:
            raise TmpError(f"door {door_id!r} has no front node in region {room!r}")
        if any(goal_node in pair for pair in node.roadmap_delta):
            return None, 'door_already_open'

        def run(rng):
            motion, reason = belief_search(self.rm, self.world, (node.robot_node, node.belief), goal_node,
                                           self.cfg, rng, self.strategy, self.noise, self.stats.motion)
            if motion is None:
                return None, reason
            if not check_feasible(motion, self.eta):
                return None, 'trace_bound'
            try:
                edge_id = add_door_edge(self.rm, goal_node, self.world.door(door_id), self.world)
            except RoadmapError:
                return None, 'door_blocked'
            pair = self.rm.edge_index[edge_id]
            remove_edge(self.rm, edge_id)
            return (motion, pair), None

        outcome, reason = self._motion_query(node, f"door:{door_id}:{room}", run)
        if outcome is None:
            return None, reason
        motion, pair = outcome
        return (motion, node.roadmap_delta + (pair,), (pair,), ()), None

    def _region_attachment(self, node: SearchNode, region_id: str):
        def run(rng):
            best, reason = best_instantiation(self.rm, self.world, (node.robot_node, node.belief), region_id,
                                              self.cfg, rng, self.strategy, self.noise, self.workers,
                                              self.stats.motion)
            if best is None:
                return None, reason
            _, motion = best
            if not check_feasible(motion, self.eta):
                return None, 'trace_bound'
            return motion, None

        motion, reason = self._motion_query(node, f"region:{region_id}", run)
        if motion is None:
            return None, reason
        # leaving the room closes every door opened on this branch
        return (motion, (), (), node.roadmap_delta), None

    def semantic_attachment(self, node: SearchNode, a: GroundedAction, s_mid: TaskState):
        """
        Values for the action's indirect fluents from a motion query.

        Returns:
            ((values, motion, delta, added, removed), None) or (None, reason).
        """
        trigger = trigger_of(node.task_state, s_mid)
        if trigger is None:
            raise TmpError(f"{a.signature} reads an indirect fluent but raises no trigger fluent")
        target = trigger.args[-1]
        if self.world.has_door(target):
            result, reason = self._door_attachment(node, trigger.args[0], target)
        elif self.world.has_region(target):
            result, reason = self._region_attachment(node, target)
        else:
            raise TmpError(f"trigger {trigger} names neither a region nor a door of the world")
        if result is None:
            return None, reason

        motion, delta, added, removed = result
        values = {
            v_ind: (motion.goal_trace if v_ind in TRACE_FLUENTS else motion.cost)
            for _, v_ind in a.attachments
        }
        return (values, motion, delta, added, removed), None

    # --- expansion ---

    def expand(self, node: SearchNode) -> list:
        children = []
        makespan = sum(step.action.duration for step in node.plan_prefix)
        for a in self.actions:
            if not applicable(node.task_state, a):
                continue
            s_mid = apply_start(node.task_state, a)
            robot_node, belief, delta = node.robot_node, node.belief, node.roadmap_delta
            values, motion, added, removed = {}, None, (), ()

            if a.has_attachment:
                outcome, reason = self.semantic_attachment(node, a, s_mid)
                if outcome is None:
                    self.stats.count_pruned(reason)
                    continue
                values, motion, delta, added, removed = outcome
                robot_node, belief = motion.goal, motion.beliefs[-1]

            if not end_conditions_hold(s_mid, a):
                continue
            s_end = apply_end(s_mid, a, values)
            g = self.g_of(s_end, makespan + a.duration)
            if g < node.g_cost - COST_TOLERANCE:
                raise TmpError(f"{a.signature} decreases the metric; step costs must be >= 0")

            step = PlanStep(a, motion, g - node.g_cost, added, removed)
            children.append(SearchNode(s_end, robot_node, belief, g, node.plan_prefix + (step,), delta))
            self.stats.generated += 1
        return children

    def uniform_cost(self, budget: _Budget, incumbent_cost: float = math.inf):
        """Best-first over g; returns (goal node, None) or (None, reason)."""
        frontier = [(0.0, next(self.counter), self.root())]
        closed = _ClosedSet(self.closed_key)
        while frontier:
            g, _, node = heapq.heappop(frontier)
            if goal_satisfied(self.problem, node.task_state):
                return node, None
            if not closed.admit(node):
                self.stats.count_pruned('dominated')
                continue
            if not budget.spend():
                return None, 'timeout'
            self.stats.expanded += 1
            for child in self.expand(node):
                if child.g_cost > incumbent_cost + COST_TOLERANCE:
                    continue
                heapq.heappush(frontier, (child.g_cost, next(self.counter), child))
        return None, 'frontier_exhausted'

    def greedy_dive(self, budget: _Budget):
        """Depth-first, cheapest step first; the first goal found seeds the incumbent."""
        stack = [iter([self.root()])]
        closed = _ClosedSet(self.closed_key)
        while stack:
            node = next(stack[-1], None)
            if node is None:
                stack.pop()
                continue
            if goal_satisfied(self.problem, node.task_state):
                return node, None
            if not closed.admit(node):
                self.stats.count_pruned('dominated')
                continue
            if not budget.spend():
                return None, 'timeout'
            self.stats.expanded += 1
            children = self.expand(node)
            children.sort(key=lambda child: child.g_cost - node.g_cost)
            stack.append(iter(children))
        return None, 'frontier_exhausted'


# ===== ENTRY POINTS =====

def plan(d: Domain, p: Problem, w: World, rm: Roadmap, cfg: CostConfig, eta: float, seed: int = 0,
         strategy: str = 'greedy', time_bound: float | None = None, noise: MotionNoiseParams | None = None,
         workers: int = 1, expansion_bound: int | None = None):
    """
    Uniform-cost task and motion planning.

    Returns:
        (TMPlan, None) when a plan is found, (None, reason) otherwise where
        reason is 'frontier_exhausted' or 'timeout'.
    """
    if time_bound is not None and time_bound <= 0.0:
        return None, 'timeout'

    started = time.perf_counter()
    search = _TaskMotionSearch(d, p, w, rm, cfg, eta, seed, strategy, noise, workers)
    log_event(f"plan start: problem={p.name} actions={len(search.actions)} roadmap={len(rm)} "
              f"mode={cfg.mode} strategy={strategy} eta={eta} seed={seed}")

    goal, reason = search.uniform_cost(_Budget(time_bound, expansion_bound))
    search.stats.seconds = time.perf_counter() - started

    if goal is None:
        log_event(f"plan none: problem={p.name} reason={reason} expanded={search.stats.expanded} "
                  f"pruned={search.stats.pruned}")
        return None, reason
    result = search.build_plan(goal)
    result.stats.seconds = search.stats.seconds
    log_event(f"plan found: problem={p.name} cost={result.total_cost:.6f} steps={len(result.steps)} "
              f"expanded={search.stats.expanded} motion_queries={search.stats.motion_queries} "
              f"memo_hits={search.stats.memo_hits}")
    return result, None


def plan_anytime(d: Domain, p: Problem, w: World, rm: Roadmap, cfg: CostConfig, eta: float, seed: int = 0,
                 strategy: str = 'greedy', time_bound: float | None = None, noise: MotionNoiseParams | None = None,
                 workers: int = 1, expansion_bound: int | None = None):
    """
    Yield strictly cheaper plans until the search space is exhausted or the
    budget runs out; the generator's return value is the final incumbent
    (None if no plan was found in time).
    """
    if (time_bound is not None and time_bound <= 0.0) or (expansion_bound is not None and expansion_bound <= 0):
        return None

    started = time.perf_counter()
    search = _TaskMotionSearch(d, p, w, rm, cfg, eta, seed, strategy, noise, workers)
    budget = _Budget(time_bound, expansion_bound)
    incumbent = None

    goal, _ = search.greedy_dive(budget)
    if goal is not None:
        incumbent = search.build_plan(goal)
        incumbent.stats.seconds = time.perf_counter() - started
        log_event(f"anytime incumbent: problem={p.name} cost={incumbent.total_cost:.6f} phase=dive")
        yield incumbent

    bound = incumbent.total_cost if incumbent is not None else math.inf
    goal, reason = search.uniform_cost(budget, bound)
    if goal is not None:
        refined = search.build_plan(goal)
        refined.stats.seconds = time.perf_counter() - started
        if incumbent is None or refined.total_cost < incumbent.total_cost - COST_TOLERANCE:
            log_event(f"anytime incumbent: problem={p.name} cost={refined.total_cost:.6f} phase=refine")
            yield refined
        incumbent = refined
    elif reason == 'timeout':
        log_event(f"anytime stopped: problem={p.name} budget exhausted")
    return incumbent


def collect_anytime(gen):
    """Drain a plan_anytime generator into (emitted plans, final incumbent)."""
    emissions = []
    while True:
        try:
            emissions.append(next(gen))
        except StopIteration as stop:
            return emissions, stop.value
