"""
Monte Carlo execution of task-motion plans and the benchmark runner.

Execution replays the planned node path open-loop at the task level: the
robot steers from its current estimate toward each planned node, the true
pose follows noisy controls, and the EKF runs alongside with observations
taken from the true pose. A collision ends the trial.

Scenario file (JSON, paths relative to the file):

    {
      "name": "office_table",
      "defaults": {"world": "office.world.json", "domain": "office.domain.pddl",
                   "eta": 3.0, "k_neighbors": 6, "edge_step": 0.5, "region_samples": 3,
                   "clearance": 0.0, "strategy": "greedy", "seeds": [0], "trials": 0,
                   "weights": {"m_u": 1.0}},
      "runs": [{"id": "c2_d1_mptp", "problem": "office_c2.problem.pddl",
                "density": 1.0, "cost_mode": "mptp"}],
      "sweep": {"problems": {"c2": "office_c2.problem.pddl"},
                "densities": [1.0, 1.5, 2.0], "cost_modes": ["petlon", "mptp"]},
      "anytime": {"problem": "office_c4.problem.pddl", "density": 1.0,
                  "cost_mode": "mptp", "expansion_bounds": [1, 2, 4, 8]}
    }
"""

import json
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from belief_core import (
    BeliefError,
    Control,
    GaussianBelief,
    MotionNoiseParams,
    NumericalDegeneracyError,
    Pose,
    SensorParams,
    ekf_predict,
    ekf_update,
    motion_noise_cov,
    motion_step,
    simulate_observation,
    wrap_angle,
)
from motion_planner import CostConfig
from roadmap import PrmConfig, discretize_motion
from run_log import log_event
from task_pddl import parse_domain, parse_problem
from tmp_planner import TMPlan, build_planning_roadmap, collect_anytime, plan, plan_anytime
from world import World, is_free, landmarks_in_range, load_world, segment_free


DEFAULT_STEP = 0.5
NO_PLAN = '-'


class ScenarioError(ValueError):
    """Scenario file is malformed or references missing fixtures."""


# ===== EXECUTION =====

@dataclass(frozen=True, eq=False)
class ExecutionTrace:
    true_poses: tuple
    estimated_beliefs: tuple
    collided: bool
    collision_index: int | None
    executed_cost: float
    arrival_indices: tuple = ()


@dataclass(frozen=True)
class TrialStats:
    trials: int
    successes: int
    success_rate: float
    mean_executed_cost: float
    mean_planning_time: float = 0.0
    std_planning_time: float = 0.0


def sample_pose(rng: np.random.Generator, b: GaussianBelief) -> Pose:
    """Draw from the belief; exact mean when the covariance is zero."""
    values, vectors = np.linalg.eigh(b.cov)
    scale = np.sqrt(np.clip(values, 0.0, None))
    offset = vectors @ (scale * rng.standard_normal(3))
    return Pose.from_array(b.mean.as_array() + offset)


def perturb_control(rng: np.random.Generator, u: Control, noise: MotionNoiseParams) -> Control:
    sd = np.sqrt(np.diag(motion_noise_cov(u, noise)))
    draw = rng.standard_normal(3)
    return Control(
        u.d_rot1 + float(sd[0] * draw[0]),
        max(0.0, u.d_trans + float(sd[1] * draw[1])),
        u.d_rot2 + float(sd[2] * draw[2]),
    )


def plan_targets(tm_plan: TMPlan) -> list:
    """Poses the robot must reach, in order, skipping each motion's start node."""
    targets = []
    for step in tm_plan.steps:
        if step.motion is not None:
            targets.extend(step.motion.poses[1:])
    return targets


def _observe(w: World, est: GaussianBelief, true_pose: Pose, sensor: SensorParams, rng) -> GaussianBelief:
    for landmark in landmarks_in_range(w, true_pose):
        z = simulate_observation(rng, true_pose, landmark, sensor)
        if z is None:
            continue
        try:
            est = ekf_update(est, z, landmark, sensor)
        except (BeliefError, NumericalDegeneracyError):
            # estimate sits on the landmark; skip this reading
            continue
    return est


def execute_plan(w: World, tm_plan: TMPlan, noise: MotionNoiseParams, sensor: SensorParams, seed,
                 step: float = DEFAULT_STEP) -> ExecutionTrace:
    if not tm_plan.feasible:
        raise ValueError("cannot execute an infeasible plan")
    rng = np.random.default_rng(seed)
    true_pose = sample_pose(rng, tm_plan.initial_belief)
    est = tm_plan.initial_belief
    true_poses = [true_pose]
    beliefs = [est]
    arrivals = [0]
    executed = 0.0

    for target in plan_targets(tm_plan):
        for u in discretize_motion(est.mean, target, step):
            actual = perturb_control(rng, u, noise)
            next_pose = motion_step(true_pose, actual)
            executed += actual.d_trans
            est = ekf_predict(est, u, noise)
            true_poses.append(next_pose)
            beliefs.append(est)
            swept = segment_free(w, (true_pose.x, true_pose.y), (next_pose.x, next_pose.y))
            if not (swept and is_free(w, next_pose)):
                return ExecutionTrace(tuple(true_poses), tuple(beliefs), True, len(true_poses) - 1,
                                      executed, tuple(arrivals))
            true_pose = next_pose

        est = _observe(w, est, true_pose, sensor, rng)
        beliefs[-1] = est
        arrivals.append(len(true_poses) - 1)

    return ExecutionTrace(tuple(true_poses), tuple(beliefs), False, None, executed, tuple(arrivals))


def nees(trace: ExecutionTrace) -> list:
    """Normalized estimation error squared per step; steps with singular covariance are skipped."""
    values = []
    for true_pose, belief in zip(trace.true_poses, trace.estimated_beliefs):
        error = true_pose.as_array() - belief.mean.as_array()
        error[2] = wrap_angle(float(error[2]))
        try:
            values.append(float(error @ np.linalg.solve(belief.cov, error)))
        except np.linalg.LinAlgError:
            continue
    return values


def run_trials(w: World, tm_plan: TMPlan, noise: MotionNoiseParams, sensor: SensorParams, trials: int,
               master_seed: int, workers: int = 1, step: float = DEFAULT_STEP) -> list:
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    def run(index):
        return execute_plan(w, tm_plan, noise, sensor, [int(master_seed), index], step)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(trials)))
    return [run(index) for index in range(trials)]


def summarize_trials(traces, planning_times=()) -> TrialStats:
    successes = sum(1 for t in traces if not t.collided)
    times = list(planning_times)
    return TrialStats(
        trials=len(traces),
        successes=successes,
        success_rate=successes / len(traces),
        mean_executed_cost=statistics.fmean(t.executed_cost for t in traces),
        mean_planning_time=statistics.fmean(times) if times else 0.0,
        std_planning_time=statistics.pstdev(times) if len(times) > 1 else 0.0,
    )


def monte_carlo(w: World, tm_plan: TMPlan, noise: MotionNoiseParams, sensor: SensorParams, trials: int,
                master_seed: int, workers: int = 1) -> TrialStats:
    traces = run_trials(w, tm_plan, noise, sensor, trials, master_seed, workers)
    planning = [tm_plan.stats.seconds] if tm_plan.stats is not None else []
    stats = summarize_trials(traces, planning)
    log_event(f"monte carlo: trials={stats.trials} successes={stats.successes} seed={master_seed}")
    return stats


# ===== BENCHMARK =====

@dataclass
class BenchmarkResult:
    name: str
    rows: list = field(default_factory=list)
    timing_rows: list = field(default_factory=list)
    anytime_rows: list = field(default_factory=list)


def _resolve(base: Path, name: str) -> Path:
    path = (base / name).resolve()
    if not path.is_file():
        raise ScenarioError(f"missing fixture {name!r} (looked in {base})")
    return path


class _Fixtures:
    """Loads each referenced file once per benchmark."""

    def __init__(self, base: Path):
        self.base = base
        self.worlds = {}
        self.domains = {}
        self.problems = {}

    def world(self, name: str) -> World:
        if name not in self.worlds:
            self.worlds[name] = load_world(_resolve(self.base, name).read_text(encoding='utf-8'))
        return self.worlds[name]

    def domain(self, name: str):
        if name not in self.domains:
            self.domains[name] = parse_domain(_resolve(self.base, name).read_text(encoding='utf-8'))
        return self.domains[name]

    def problem(self, name: str, domain_name: str):
        key = (name, domain_name)
        if key not in self.problems:
            text = _resolve(self.base, name).read_text(encoding='utf-8')
            self.problems[key] = parse_problem(text, self.domain(domain_name))
        return self.problems[key]


def _expand_runs(scenario: dict) -> list:
    runs = [dict(run) for run in scenario.get('runs', [])]
    sweep = scenario.get('sweep')
    if sweep:
        missing = [key for key in ('problems', 'densities', 'cost_modes') if key not in sweep]
        if missing:
            raise ScenarioError(f"sweep block lacks {', '.join(missing)}")
        for label, problem in sweep['problems'].items():
            for density in sweep['densities']:
                for mode in sweep['cost_modes']:
                    runs.append({
                        'id': f"{label}_d{density:g}_{mode}",
                        'problem': problem,
                        'density': density,
                        'cost_mode': mode,
                    })
    return runs


def _settings(defaults: dict, run: dict) -> dict:
    settings = {
        'eta': 3.0,
        'k_neighbors': 6,
        'edge_step': DEFAULT_STEP,
        'region_samples': 3,
        'clearance': 0.0,
        'strategy': 'greedy',
        'seeds': [0],
        'trials': 0,
        'weights': {},
        'density': 1.0,
        'cost_mode': 'mptp',
    }
    settings.update(defaults)
    settings.update(run)
    for key in ('world', 'domain', 'problem'):
        if key not in settings:
            raise ScenarioError(f"run {run.get('id', '?')!r} does not name a {key}")
    return settings


def _plan_once(fixtures: _Fixtures, s: dict, seed: int):
    w = fixtures.world(s['world'])
    d = fixtures.domain(s['domain'])
    p = fixtures.problem(s['problem'], s['domain'])
    prm_cfg = PrmConfig(density_d=float(s['density']), k_neighbors=int(s['k_neighbors']),
                        edge_step=float(s['edge_step']), seed=seed,
                        region_samples=int(s['region_samples']), clearance=float(s['clearance']))
    cfg = CostConfig.for_mode(s['cost_mode'], **s['weights'])
    rm = build_planning_roadmap(w, p, prm_cfg)
    return w, d, p, rm, cfg


def _fmt(value) -> float | str:
    return NO_PLAN if value is None else round(float(value), 6)


def _mean(values):
    return statistics.fmean(values) if values else None


def run_benchmark(scenario_path) -> BenchmarkResult:
    path = Path(scenario_path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        scenario = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path.name} line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc

    defaults = scenario.get('defaults', {})
    runs = _expand_runs(scenario)
    if not runs and not scenario.get('anytime'):
        raise ScenarioError(f"scenario {path.name} lists no runs")

    fixtures = _Fixtures(path.parent)
    result = BenchmarkResult(name=scenario.get('name', path.stem))
    log_event(f"benchmark start: {result.name} runs={len(runs)}")

    for run in runs:
        s = _settings(defaults, run)
        costs, lengths, traces, expanded, queries, times, rates, reasons = [], [], [], [], [], [], [], []
        for seed in s['seeds']:
            w, d, p, rm, cfg = _plan_once(fixtures, s, int(seed))
            started = time.perf_counter()
            tm_plan, reason = plan(d, p, w, rm, cfg, float(s['eta']), int(seed), s['strategy'])
            times.append(time.perf_counter() - started)
            if tm_plan is None:
                reasons.append(reason)
                continue
            costs.append(tm_plan.total_cost)
            lengths.append(len(tm_plan.steps))
            last = [step.motion for step in tm_plan.steps if step.motion is not None]
            traces.append(last[-1].goal_trace if last else tm_plan.initial_belief.trace)
            expanded.append(tm_plan.stats.expanded)
            queries.append(tm_plan.stats.motion_queries)
            if int(s['trials']) > 0:
                stats = monte_carlo(w, tm_plan, w.motion_noise, w.sensor, int(s['trials']), int(seed))
                rates.append(stats.success_rate)

        run_id = s.get('id') or f"{Path(s['problem']).stem}_d{s['density']:g}_{s['cost_mode']}"
        result.rows.append({
            'scenario': run_id,
            'cost_mode': CostConfig.for_mode(s['cost_mode'], **s['weights']).mode,
            'density': float(s['density']),
            'eta': float(s['eta']),
            'seeds': len(s['seeds']),
            'plans_found': len(costs),
            'feasible': bool(costs),
            'plan_cost': _fmt(_mean(costs)),
            'plan_length': _fmt(_mean(lengths)),
            'goal_trace': _fmt(_mean(traces)),
            'expanded': _fmt(_mean(expanded)),
            'motion_queries': _fmt(_mean(queries)),
            'success_rate': _fmt(_mean(rates)) if int(s['trials']) > 0 else '',
            'reason': ','.join(sorted(set(reasons))),
        })
        result.timing_rows.append({
            'scenario': run_id,
            'time_mean_s': round(statistics.fmean(times), 6),
            'time_std_s': round(statistics.pstdev(times), 6) if len(times) > 1 else 0.0,
        })
        log_event(f"benchmark row: {run_id} plans={len(costs)}/{len(s['seeds'])}")

    anytime = scenario.get('anytime')
    if anytime:
        s = _settings(defaults, anytime)
        seed = int(s['seeds'][0])
        bounds = anytime.get('expansion_bounds')
        key = 'expansion_bound'
        if bounds is None:
            bounds, key = anytime.get('time_bounds', []), 'time_bound'
        for bound in bounds:
            w, d, p, rm, cfg = _plan_once(fixtures, s, seed)
            emissions, final = collect_anytime(
                plan_anytime(d, p, w, rm, cfg, float(s['eta']), seed, s['strategy'], **{key: bound})
            )
            result.anytime_rows.append({
                'bound': bound,
                'bound_kind': key,
                'emissions': len(emissions),
                'cost': _fmt(final.total_cost if final is not None else None),
                'plan_length': len(final.steps) if final is not None else NO_PLAN,
            })

    log_event(f"benchmark done: {result.name} rows={len(result.rows)} anytime={len(result.anytime_rows)}")
    return result


def cost_column(rows, column: str = 'cost') -> list:
    """Numeric view of a result column; no-plan markers become inf."""
    return [math.inf if row[column] == NO_PLAN else float(row[column]) for row in rows]
