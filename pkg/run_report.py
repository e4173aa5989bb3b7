"""
Result files: versioned CSV tables, the Excel benchmark report, plan files
and the human-readable plan summary.

Plan file (JSON):

    {"format": 1, "problem": "office_c2", "domain": "office", "world_fingerprint": "<sha256>",
     "cost_mode": "mptp", "eta": 3.0, "seed": 0,
     "total_cost": 31.2, "task_cost": 8.0, "motion_cost": 23.2, "makespan": 340.0,
     "feasible": true, "start_node": 112,
     "initial_belief": {"mean": [x, y, theta], "cov": [[...], [...], [...]]},
     "steps": [{"action": "goto_region", "args": ["r1", "s", "c3"], "duration": 100.0,
                "cost": 7.5, "roadmap_added": [], "roadmap_removed": [],
                "motion": {"node_path": [...], "poses": [[x, y, theta], ...],
                           "means": [...], "covs": [...], "cost": 7.5, "goal_trace": 0.12}}]}
"""

import json
import os
from datetime import datetime
from pathlib import Path

import numpy as np
import openpyxl
import pandas as pd

from belief_core import GaussianBelief, Pose
from motion_planner import MotionPlan
from path_config import REPORT_FOLDER
from task_pddl import GroundedAction
from tmp_planner import PlanStep, TMPlan
from world import World


TABLE_HEADER = '# belief-tmp table v1'
PLAN_FORMAT = 1
MAX_COLUMN_WIDTH = 40

BENCHMARK_COLUMNS = [
    'scenario', 'cost_mode', 'density', 'eta', 'seeds', 'plans_found', 'feasible',
    'plan_cost', 'plan_length', 'goal_trace', 'expanded', 'motion_queries', 'success_rate', 'reason',
]
TIMING_COLUMNS = ['scenario', 'time_mean_s', 'time_std_s']
ANYTIME_COLUMNS = ['bound', 'bound_kind', 'emissions', 'cost', 'plan_length']
TRACE_COLUMNS = [
    'trial', 'step', 'true_x', 'true_y', 'true_theta',
    'est_x', 'est_y', 'est_theta', 'trace', 'arrival', 'collided',
]


class PlanFileError(ValueError):
    """Plan file is unreadable or does not belong to the given world."""


# ===== CSV =====

def write_table_csv(rows, path, columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows), columns=columns)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(TABLE_HEADER + '\n')
        frame.to_csv(f, index=False, float_format='%.6f', lineterminator='\n')
    return path


def read_table_csv(path) -> pd.DataFrame:
    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline().rstrip('\n')
    if header != TABLE_HEADER:
        raise ValueError(f"{path}: expected {TABLE_HEADER!r}, got {header!r}")
    return pd.read_csv(path, skiprows=1)


def trace_rows(traces) -> list:
    rows = []
    for trial, trace in enumerate(traces):
        arrivals = set(trace.arrival_indices)
        for step, (true_pose, belief) in enumerate(zip(trace.true_poses, trace.estimated_beliefs)):
            rows.append({
                'trial': trial,
                'step': step,
                'true_x': true_pose.x,
                'true_y': true_pose.y,
                'true_theta': true_pose.theta,
                'est_x': belief.mean.x,
                'est_y': belief.mean.y,
                'est_theta': belief.mean.theta,
                'trace': belief.trace,
                'arrival': step in arrivals,
                'collided': trace.collided and step == trace.collision_index,
            })
    return rows


# ===== EXCEL =====

def _fit_columns(sheet) -> None:
    for column in sheet.columns:
        max_length = 0
        column_letter = column[0].column_letter
        for cell in column:
            value = '' if cell.value is None else str(cell.value)
            max_length = max(max_length, len(value))
        sheet.column_dimensions[column_letter].width = min(max_length + 2, MAX_COLUMN_WIDTH)


def save_benchmark_report(result, report_path=None):
    """Write the benchmark workbook; returns its path, or None if saving failed."""
    try:
        if report_path is None:
            os.makedirs(REPORT_FOLDER, exist_ok=True)
            report_path = os.path.join(
                REPORT_FOLDER,
                f"benchmark_{result.name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.xlsx"
            )

        wb = openpyxl.Workbook()
        ws = wb.active
        ws.title = "Benchmark"
        ws.append(BENCHMARK_COLUMNS)
        for row in result.rows:
            ws.append([row.get(column, '') for column in BENCHMARK_COLUMNS])

        ws_timing = wb.create_sheet("Timing")
        ws_timing.append(TIMING_COLUMNS)
        for row in result.timing_rows:
            ws_timing.append([row.get(column, '') for column in TIMING_COLUMNS])

        ws_none = wb.create_sheet("No Plan")
        ws_none.append(['scenario', 'cost_mode', 'density', 'eta', 'reason'])
        for row in result.rows:
            if row.get('feasible'):
                continue
            ws_none.append([row['scenario'], row['cost_mode'], row['density'], row['eta'], row.get('reason', '')])

        sheets = [ws, ws_timing, ws_none]
        if result.anytime_rows:
            ws_anytime = wb.create_sheet("Anytime")
            ws_anytime.append(ANYTIME_COLUMNS)
            for row in result.anytime_rows:
                ws_anytime.append([row.get(column, '') for column in ANYTIME_COLUMNS])
            sheets.append(ws_anytime)

        for sheet in sheets:
            _fit_columns(sheet)

        wb.save(report_path)
        wb.close()
        return report_path
    except Exception as e:
        print(f"❌ Error saving benchmark report: {e}")
        return None


def summarize_rows(rows) -> dict:
    """Counts for notifications: totals, feasibility, per-mode and per-reason breakdowns."""
    by_mode = {}
    reasons = {}
    feasible = 0
    for row in rows:
        by_mode[row['cost_mode']] = by_mode.get(row['cost_mode'], 0) + 1
        if row.get('feasible'):
            feasible += 1
        for reason in filter(None, str(row.get('reason', '')).split(',')):
            reasons[reason] = reasons.get(reason, 0) + 1
    return {
        'rows': len(rows),
        'feasible': feasible,
        'no_plan': len(rows) - feasible,
        'by_mode': dict(sorted(by_mode.items())),
        'reasons': dict(sorted(reasons.items())),
    }


# ===== PLANS =====

def region_sequence(tm_plan: TMPlan, w: World | None = None, start_region: str | None = None) -> list:
    sequence = [start_region] if start_region else []
    for step in tm_plan.steps:
        if step.motion is None:
            continue
        target = step.action.args[-1] if step.action.args else None
        if target is None or (w is not None and not w.has_region(target)):
            continue
        sequence.append(target)
    return sequence


def format_plan_summary(tm_plan: TMPlan, w: World | None = None, start_region: str | None = None) -> str:
    lines = [
        f"Plan: {' → '.join(region_sequence(tm_plan, w, start_region)) or '(no motion)'}",
        f"Total cost: {tm_plan.total_cost:.3f} (task {tm_plan.task_cost:.3f}, motion {tm_plan.motion_cost:.3f})",
        f"Makespan: {tm_plan.makespan:g}  Feasible: {'yes' if tm_plan.feasible else 'no'}",
        "Steps:",
    ]
    for index, step in enumerate(tm_plan.steps, start=1):
        line = f"  {index}. {step.action.signature}  cost {step.cost:.3f}"
        if step.motion is not None:
            traces = ' '.join(f"{b.trace:.4f}" for b in step.motion.beliefs)
            line += f"  nodes {len(step.motion.node_path)}  trace [{traces}]"
        if step.roadmap_added:
            line += f"  +edge {list(step.roadmap_added[0])}"
        if step.roadmap_removed:
            line += f"  -edges {[list(pair) for pair in step.roadmap_removed]}"
        lines.append(line)
    return '\n'.join(lines)


def _belief_dict(b: GaussianBelief) -> dict:
    return {'mean': [b.mean.x, b.mean.y, b.mean.theta], 'cov': np.asarray(b.cov).tolist()}


def _belief_from(data) -> GaussianBelief:
    return GaussianBelief(Pose(*data['mean']), np.array(data['cov'], dtype=float), check=False)


def plan_to_dict(tm_plan: TMPlan, **header) -> dict:
    steps = []
    for step in tm_plan.steps:
        entry = {
            'action': step.action.name,
            'args': list(step.action.args),
            'duration': step.action.duration,
            'cost': step.cost,
            'roadmap_added': [list(pair) for pair in step.roadmap_added],
            'roadmap_removed': [list(pair) for pair in step.roadmap_removed],
            'motion': None,
        }
        if step.motion is not None:
            m = step.motion
            entry['motion'] = {
                'node_path': list(m.node_path),
                'poses': [[p.x, p.y, p.theta] for p in m.poses],
                'means': [[b.mean.x, b.mean.y, b.mean.theta] for b in m.beliefs],
                'covs': [np.asarray(b.cov).tolist() for b in m.beliefs],
                'step_costs': list(m.step_costs),
                'cost': m.cost,
                'goal_trace': m.goal_trace,
            }
        steps.append(entry)

    data = {'format': PLAN_FORMAT}
    data.update(header)
    data.update({
        'total_cost': tm_plan.total_cost,
        'task_cost': tm_plan.task_cost,
        'motion_cost': tm_plan.motion_cost,
        'makespan': tm_plan.makespan,
        'feasible': tm_plan.feasible,
        'start_node': tm_plan.start_node,
        'initial_belief': _belief_dict(tm_plan.initial_belief),
        'steps': steps,
    })
    return data


def save_plan(tm_plan: TMPlan, path, **header) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(plan_to_dict(tm_plan, **header), indent=1, sort_keys=True)
    path.write_text(text + '\n', encoding='utf-8')
    return path


def load_plan(path, world_fingerprint: str | None = None):
    """
    Read a plan file back into a TMPlan (actions carry name, args and duration only).

    Returns:
        (TMPlan, header dict)
    """
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise PlanFileError(f"cannot read plan file {path}: {e}") from e
    if data.get('format') != PLAN_FORMAT:
        raise PlanFileError(f"unsupported plan format {data.get('format')!r}")
    if world_fingerprint is not None and data.get('world_fingerprint') not in (None, world_fingerprint):
        raise PlanFileError("plan was computed for a different world")

    try:
        steps = []
        for entry in data['steps']:
            action = GroundedAction(entry['action'], tuple(entry['args']), float(entry['duration']))
            motion = None
            if entry.get('motion') is not None:
                m = entry['motion']
                beliefs = tuple(
                    _belief_from({'mean': mean, 'cov': cov}) for mean, cov in zip(m['means'], m['covs'])
                )
                motion = MotionPlan(
                    node_path=tuple(m['node_path']),
                    beliefs=beliefs,
                    cost=float(m['cost']),
                    goal_trace=float(m['goal_trace']),
                    controls=(),
                    step_costs=tuple(m.get('step_costs', ())),
                    poses=tuple(Pose(*p) for p in m['poses']),
                )
            steps.append(PlanStep(
                action=action,
                motion=motion,
                cost=float(entry['cost']),
                roadmap_added=tuple(tuple(pair) for pair in entry['roadmap_added']),
                roadmap_removed=tuple(tuple(pair) for pair in entry['roadmap_removed']),
            ))
        tm_plan = TMPlan(
            steps=tuple(steps),
            total_cost=float(data['total_cost']),
            task_cost=float(data['task_cost']),
            motion_cost=float(data['motion_cost']),
            makespan=float(data['makespan']),
            feasible=bool(data['feasible']),
            start_node=int(data['start_node']),
            initial_belief=_belief_from(data['initial_belief']),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise PlanFileError(f"malformed plan file {path}: {e}") from e

    header = {k: v for k, v in data.items() if k not in ('steps', 'initial_belief')}
    return tm_plan, header
