import math
from itertools import permutations

import numpy as np
import pytest

from belief_core import GaussianBelief
from conftest import read_fixture
from motion_planner import CostConfig, best_instantiation
from roadmap import PrmConfig, insert_pose
from sim_harness import monte_carlo
from task_pddl import initial_state, parse_problem
from tmp_planner import (
    SearchNode,
    TmpError,
    _ClosedSet,
    build_planning_roadmap,
    collect_anytime,
    initial_belief_from_problem,
    plan,
    plan_anytime,
    query_rng,
)
from world import region_of


COLLECT_COST = 4.0
LOOSE_ETA = 1000.0


def _order_outcomes(rm, w, problem, docs, cfg, seed, strategy):
    """(total cost, worst leg trace) per visiting order, replaying each leg exactly as the planner queries it."""
    b0 = initial_belief_from_problem(problem)
    start = insert_pose(w, rm, b0.mean)
    outcomes = []
    for order in permutations(docs):
        node, belief, total, worst = start, b0, 0.0, 0.0
        for target in (*order, "l"):
            rng = query_rng(seed, node, f"region:{target}")
            result, reason = best_instantiation(rm, w, (node, belief), target, cfg, rng, strategy,
                                                noise=w.motion_noise)
            assert reason is None
            _, motion = result
            total += motion.cost
            worst = max(worst, motion.goal_trace)
            if target != "l":
                total += COLLECT_COST
            node, belief = motion.goal, motion.beliefs[-1]
        outcomes.append((total, worst))
    return outcomes


def _oracle_cost(rm, w, problem, docs, cfg, seed, strategy):
    """Cheapest visiting order."""
    return min(total for total, _ in _order_outcomes(rm, w, problem, docs, cfg, seed, strategy))


# ===== OPTIMALITY =====

@pytest.mark.parametrize("mode", ["petlon", "mptp"])
def test_two_visits_match_enumeration(office_domain, office_mini_world, mini_problem, mini_roadmap, mode):
    problem = mini_problem(("c1", "c3"))
    rm = mini_roadmap(problem)
    cfg = CostConfig.for_mode(mode)

    result, reason = plan(office_domain, problem, office_mini_world, rm, cfg, LOOSE_ETA, seed=0)
    assert reason is None
    assert result.total_cost == pytest.approx(
        _oracle_cost(rm, office_mini_world, problem, ("c1", "c3"), cfg, 0, "greedy"), abs=1e-9
    )
    assert result.feasible
    assert len(result.steps) == 5
    assert result.signatures[-1].startswith("(goto_lift r ")
    assert result.task_cost == pytest.approx(2 * COLLECT_COST)
    assert result.makespan == pytest.approx(2 * 100 + 2 * 20 + 100)


@pytest.mark.slow
@pytest.mark.parametrize("docs", [("c1", "c3", "c5"), ("c1", "c2", "c4", "c5")])
def test_longer_tours_match_enumeration(office_domain, office_mini_world, mini_problem, mini_roadmap, docs):
    problem = mini_problem(docs)
    rm = mini_roadmap(problem)
    cfg = CostConfig.for_mode("petlon", m_g=0.0)

    result, reason = plan(office_domain, problem, office_mini_world, rm, cfg, LOOSE_ETA, seed=0,
                          strategy="dijkstra")
    assert reason is None
    expected = _oracle_cost(rm, office_mini_world, problem, docs, cfg, 0, "dijkstra")
    assert result.total_cost == pytest.approx(expected, abs=1e-9)


def test_plan_is_deterministic(office_domain, office_mini_world, mini_problem, mini_roadmap):
    problem = mini_problem()
    cfg = CostConfig.for_mode("mptp")
    first, _ = plan(office_domain, problem, office_mini_world, mini_roadmap(problem), cfg, LOOSE_ETA, seed=7)
    second, _ = plan(office_domain, problem, office_mini_world, mini_roadmap(problem), cfg, LOOSE_ETA, seed=7)
    assert first.signatures == second.signatures
    assert first.total_cost == second.total_cost
    assert first.node_path == second.node_path


def test_plan_steps_chain_motions(office_domain, office_mini_world, mini_problem, mini_roadmap):
    problem = mini_problem()
    rm = mini_roadmap(problem)
    result, _ = plan(office_domain, problem, office_mini_world, rm, CostConfig.for_mode("mptp"), LOOSE_ETA)
    motions = [step.motion for step in result.steps if step.motion is not None]
    assert len(motions) == 3
    assert motions[0].start == result.start_node
    for before, after in zip(motions, motions[1:]):
        assert after.start == before.goal
    assert region_of(office_mini_world, rm.pose(motions[-1].goal)) == "l"
    assert result.motion_cost == pytest.approx(sum(m.cost for m in motions))
    assert result.stats.motion_queries >= 3


# ===== INFEASIBILITY =====

def test_zero_eta_prunes_everything(office_domain, office_mini_world, mini_problem, mini_roadmap):
    problem = mini_problem()
    result, reason = plan(office_domain, problem, office_mini_world, mini_roadmap(problem),
                          CostConfig.for_mode("mptp"), 0.0)
    assert result is None
    assert reason == "frontier_exhausted"


def test_negative_eta_is_rejected(office_domain, office_mini_world, mini_problem, mini_roadmap):
    problem = mini_problem()
    with pytest.raises(TmpError):
        plan(office_domain, problem, office_mini_world, mini_roadmap(problem), CostConfig.for_mode("mptp"), -1.0)


def test_exhausted_budgets(office_domain, office_mini_world, mini_problem, mini_roadmap):
    problem = mini_problem()
    rm = mini_roadmap(problem)
    cfg = CostConfig.for_mode("mptp")
    assert plan(office_domain, problem, office_mini_world, rm, cfg, LOOSE_ETA, time_bound=0.0) == (None, "timeout")
    assert plan(office_domain, problem, office_mini_world, rm, cfg, LOOSE_ETA, expansion_bound=1) == (None, "timeout")


def test_problem_needs_initial_belief(office_domain):
    text = read_fixture("office_mini.problem.pddl").split("\n", 1)[1]
    with pytest.raises(TmpError):
        initial_belief_from_problem(parse_problem(text, office_domain))


@pytest.mark.parametrize("docs", [("c1", "c3"), pytest.param(("c1", "c3", "c5"), marks=pytest.mark.slow)])
def test_tight_eta_keeps_the_best_localized_order(office_domain, office_mini_world, mini_problem, mini_roadmap,
                                                  docs):
    problem = mini_problem(docs)
    rm = mini_roadmap(problem)
    cfg = CostConfig.for_mode("mptp")
    outcomes = _order_outcomes(rm, office_mini_world, problem, docs, cfg, 0, "greedy")
    eta = min(worst for _, worst in outcomes) + 1e-6
    cheapest_feasible = min(total for total, worst in outcomes if worst < eta)

    result, reason = plan(office_domain, problem, office_mini_world, rm, cfg, eta, seed=0)
    assert reason is None
    assert result.feasible
    assert result.total_cost <= cheapest_feasible + 1e-9
    assert all(step.motion.goal_trace < eta for step in result.steps if step.motion is not None)


def test_better_localized_arrival_is_not_dominated(office_domain, mini_problem):
    problem = mini_problem()
    state = initial_state(office_domain, problem)
    belief = initial_belief_from_problem(problem)
    closed = _ClosedSet(lambda node: (node.task_state.key(), node.robot_node, node.roadmap_delta))

    def arrival(g, scale):
        return SearchNode(state, 3, GaussianBelief(belief.mean, belief.cov * scale), g)

    assert closed.admit(arrival(10.0, 1.0))
    assert not closed.admit(arrival(10.0, 1.0))
    assert not closed.admit(arrival(12.0, 2.0))
    assert closed.admit(arrival(12.0, 0.5))
    assert closed.admit(arrival(8.0, 4.0))
    assert not closed.admit(arrival(13.0, 0.5))


def test_query_rng_is_keyed_by_node_and_target():
    draw = lambda seed, node, target: query_rng(seed, node, target).random()
    assert draw(0, 3, "region:c1") == draw(0, 3, "region:c1")
    assert draw(0, 3, "region:c1") != draw(0, 3, "region:c2")
    assert draw(0, 3, "region:c1") != draw(0, 4, "region:c1")
    assert draw(0, 3, "region:c1") != draw(1, 3, "region:c1")


# ===== DOORS =====

def test_corridor_plan_opens_doors_on_the_branch(corridor_world, corridor_domain, corridor_problem):
    rm = build_planning_roadmap(corridor_world, corridor_problem, PrmConfig(density_d=1.0, seed=0))
    static = rm.edge_pairs()
    eta = 0.75

    result, reason = plan(corridor_domain, corridor_problem, corridor_world, rm, CostConfig.for_mode("mptp"), eta)
    assert reason is None
    assert "(goto_door r2 d23)" in result.signatures

    open_doors = 0
    for step in result.steps:
        open_doors += len(step.roadmap_added) - len(step.roadmap_removed)
        assert open_doors >= 0
        if step.action.name == "goto_door":
            assert len(step.roadmap_added) == 1
            assert step.motion.goal_trace < eta
        if step.action.name == "goto_room":
            assert open_doors == 0
    assert open_doors == 0

    assert not rm.dynamic_edges
    assert rm.edge_pairs() == static


# ===== BELIEF-AWARE ROUTING =====

@pytest.fixture(scope="module")
def two_route_plans(two_route_world, corridor_domain, two_route_problem):
    plans = {}
    for mode in ("petlon", "mptp"):
        rm = build_planning_roadmap(two_route_world, two_route_problem,
                                    PrmConfig(density_d=1.5, seed=3, clearance=0.25))
        result, reason = plan(corridor_domain, two_route_problem, two_route_world, rm,
                              CostConfig.for_mode(mode, m_g=0.0), LOOSE_ETA, seed=3, strategy="dijkstra")
        assert reason is None
        plans[mode] = (rm, result)
    return plans


def _corridor_regions(world, rm, result):
    regions = set()
    for node in result.node_path:
        pose = rm.pose(node)
        if 4.0 < pose.x < 16.0:
            regions.add(region_of(world, pose))
    return regions


def test_distance_only_cost_takes_the_dark_corridor(two_route_world, two_route_plans):
    rm, result = two_route_plans["petlon"]
    assert _corridor_regions(two_route_world, rm, result) == {"dark"}


def test_uncertainty_cost_takes_the_lit_hall(two_route_world, two_route_plans):
    rm, result = two_route_plans["mptp"]
    assert _corridor_regions(two_route_world, rm, result) == {"hall"}
    petlon_trace = two_route_plans["petlon"][1].steps[-1].motion.goal_trace
    assert result.steps[-1].motion.goal_trace < petlon_trace


@pytest.mark.slow
def test_lit_route_survives_execution(two_route_world, two_route_plans):
    w = two_route_world
    mptp = monte_carlo(w, two_route_plans["mptp"][1], w.motion_noise, w.sensor, 100, 3)
    petlon = monte_carlo(w, two_route_plans["petlon"][1], w.motion_noise, w.sensor, 100, 3)
    assert mptp.success_rate >= 0.8
    assert petlon.success_rate <= 0.5


# ===== ANYTIME =====

def test_anytime_improves_and_converges(office_domain, office_mini_world, mini_problem, mini_roadmap):
    problem = mini_problem(("c1", "c3", "c5"))
    cfg = CostConfig.for_mode("mptp")
    emissions, final = collect_anytime(
        plan_anytime(office_domain, problem, office_mini_world, mini_roadmap(problem), cfg, LOOSE_ETA, seed=2)
    )
    assert emissions
    costs = [p.total_cost for p in emissions]
    assert all(later < earlier for earlier, later in zip(costs, costs[1:]))

    exact, _ = plan(office_domain, problem, office_mini_world, mini_roadmap(problem), cfg, LOOSE_ETA, seed=2)
    assert final.total_cost == pytest.approx(exact.total_cost, abs=1e-9)
    assert final.total_cost <= costs[-1]


def test_anytime_without_budget_yields_nothing(office_domain, office_mini_world, mini_problem, mini_roadmap):
    problem = mini_problem()
    emissions, final = collect_anytime(
        plan_anytime(office_domain, problem, office_mini_world, mini_roadmap(problem),
                     CostConfig.for_mode("mptp"), LOOSE_ETA, expansion_bound=0)
    )
    assert emissions == []
    assert final is None


def test_anytime_dive_gives_an_early_plan(office_domain, office_mini_world, mini_problem, mini_roadmap):
    problem = mini_problem()
    emissions, final = collect_anytime(
        plan_anytime(office_domain, problem, office_mini_world, mini_roadmap(problem),
                     CostConfig.for_mode("mptp"), LOOSE_ETA, expansion_bound=6)
    )
    # five actions deep: the dive reaches a goal before the best-first pass starts
    assert len(emissions) >= 1
    assert final is not None
    assert np.isfinite(final.total_cost)
