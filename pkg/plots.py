"""
SVG figures: execution traces with covariance ellipses, benchmark scatter,
anytime curves and roadmap views.

Output is byte-stable for identical inputs: the SVG hash salt is pinned and
the Date metadata is dropped.
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
from matplotlib.patches import Ellipse, Polygon as PolygonPatch  # noqa: E402

from sim_harness import NO_PLAN  # noqa: E402


SVG_SALT = 'belief-tmp'
MODE_COLORS = {
    'euclidean': 'tab:gray',
    'sigma_euclidean': 'tab:purple',
    'petlon': 'tab:orange',
    'mptp': 'tab:blue',
}


def covariance_ellipse(cov, n_sigma: float = 2.0):
    """
    Full axis lengths and orientation of the n-sigma ellipse of the x-y block.

    Returns:
        (width, height, angle_deg) with width along the major axis.
    """
    block = np.asarray(cov, dtype=float)[:2, :2]
    values, vectors = np.linalg.eigh(block)
    values = np.clip(values, 0.0, None)
    major = vectors[:, 1]
    width = 2.0 * n_sigma * math.sqrt(values[1])
    height = 2.0 * n_sigma * math.sqrt(values[0])
    angle = math.degrees(math.atan2(major[1], major[0]))
    return width, height, angle


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({'svg.hashsalt': SVG_SALT}):
        fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return path


def _draw_world(ax, w) -> None:
    xmin, ymin, xmax, ymax = w.bounds
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect('equal')
    for polygon in w.obstacles:
        ax.add_patch(PolygonPatch(polygon, closed=True, facecolor='0.35', edgecolor='none'))
    for region in w.regions:
        ax.add_patch(PolygonPatch(region.polygon, closed=True, fill=False, edgecolor='tab:green', lw=0.6, ls='--'))
        cx, cy = region.geometry.centroid.x, region.geometry.centroid.y
        ax.text(cx, cy, region.id, ha='center', va='center', fontsize=7, color='tab:green')
    for door in w.doors:
        (x0, y0), (x1, y1) = door.endpoints()
        ax.plot([x0, x1], [y0, y1], color='tab:red' if door.automatic else 'tab:olive', lw=2)
    if w.landmarks:
        ax.scatter([l.x for l in w.landmarks], [l.y for l in w.landmarks], marker='*', s=60, color='gold',
                   edgecolors='k', linewidths=0.4, zorder=5)


def plot_traces(w, tm_plan, traces, path, n_sigma: float = 2.0):
    """
    True-pose traces over the world with the planned covariance ellipse at every node.

    Returns:
        (path, ellipses) where ellipses lists (x, y, width, height, angle_deg) as drawn.
    """
    fig, ax = plt.subplots(figsize=(8, 6))
    _draw_world(ax, w)

    for trace in traces:
        xs = [p.x for p in trace.true_poses]
        ys = [p.y for p in trace.true_poses]
        ax.plot(xs, ys, color='tab:red' if trace.collided else 'tab:blue', lw=0.6, alpha=0.5)
        if trace.collided:
            hit = trace.true_poses[trace.collision_index]
            ax.plot(hit.x, hit.y, marker='x', color='tab:red', ms=4)

    beliefs = [tm_plan.initial_belief]
    for step in tm_plan.steps:
        if step.motion is not None:
            beliefs.extend(step.motion.beliefs[1:])

    ellipses = []
    for belief in beliefs:
        width, height, angle = covariance_ellipse(belief.cov, n_sigma)
        ax.add_patch(Ellipse((belief.mean.x, belief.mean.y), width=width, height=height, angle=angle,
                             fill=False, edgecolor='k', lw=0.6))
        ellipses.append((belief.mean.x, belief.mean.y, width, height, angle))

    ax.set_title(f"{len(traces)} trial(s), {sum(1 for t in traces if t.collided)} collision(s)")
    return _save(fig, path), ellipses


def plot_benchmark(rows, path) -> Path:
    """Plan cost against search effort, one series per cost mode."""
    fig, ax = plt.subplots(figsize=(6, 4))
    modes = sorted({row['cost_mode'] for row in rows})
    for mode in modes:
        points = [
            (float(row['expanded']), float(row['plan_cost']))
            for row in rows
            if row['cost_mode'] == mode and row['plan_cost'] != NO_PLAN
        ]
        if points:
            xs, ys = zip(*points)
            ax.scatter(xs, ys, label=mode, color=MODE_COLORS.get(mode), s=18)
    ax.set_xlabel('expanded search nodes')
    ax.set_ylabel('plan cost')
    if modes:
        ax.legend(fontsize=7)
    return _save(fig, path)


def plot_anytime(rows, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    points = [(float(row['bound']), float(row['cost'])) for row in rows if row['cost'] != NO_PLAN]
    if points:
        xs, ys = zip(*points)
        ax.step(xs, ys, where='post', color='tab:blue')
        ax.scatter(xs, ys, color='tab:blue', s=14)
    kind = rows[0]['bound_kind'] if rows else 'bound'
    ax.set_xlabel(kind.replace('_', ' '))
    ax.set_ylabel('incumbent cost')
    return _save(fig, path)


def plot_roadmap(w, rm, path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 6))
    _draw_world(ax, w)

    segments = []
    dynamic = []
    for edge_id, (a, b) in sorted(rm.edge_index.items()):
        pa, pb = rm.pose(a), rm.pose(b)
        (dynamic if edge_id in rm.dynamic_edges else segments).append([(pa.x, pa.y), (pb.x, pb.y)])
    ax.add_collection(LineCollection(segments, colors='0.6', linewidths=0.3))
    if dynamic:
        ax.add_collection(LineCollection(dynamic, colors='tab:red', linewidths=1.0))

    positions = rm.positions()
    if len(positions):
        ax.scatter(positions[:, 0], positions[:, 1], s=3, color='0.2', zorder=3)
    instantiated = sorted({n for nodes in rm.region_nodes.values() for n in nodes})
    if instantiated:
        ax.scatter(positions[instantiated, 0], positions[instantiated, 1], s=12, color='tab:green', zorder=4)
    fronts = sorted(rm.door_nodes.values())
    if fronts:
        ax.scatter(positions[fronts, 0], positions[fronts, 1], s=14, color='tab:red', zorder=4)
    ax.set_title(f"{len(rm)} nodes, {len(rm.edge_index)} edges")
    return _save(fig, path)
