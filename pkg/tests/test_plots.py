import math

import numpy as np
import pytest

from plots import covariance_ellipse, plot_anytime, plot_benchmark, plot_roadmap, plot_traces
from roadmap import PrmConfig, build_prm
from sim_harness import NO_PLAN, run_trials


def test_axis_aligned_ellipse():
    width, height, angle = covariance_ellipse(np.diag([4.0, 1.0, 0.3]), 2.0)
    assert (width, height) == pytest.approx((8.0, 4.0))
    assert math.sin(math.radians(angle)) == pytest.approx(0.0, abs=1e-9)


def test_rotated_ellipse():
    width, height, angle = covariance_ellipse([[2.5, 1.5, 0.0], [1.5, 2.5, 0.0], [0.0, 0.0, 1.0]], 1.0)
    assert (width, height) == pytest.approx((4.0, 2.0))
    assert angle % 180.0 == pytest.approx(45.0)


def test_degenerate_ellipse():
    width, height, _ = covariance_ellipse(np.zeros((3, 3)))
    assert (width, height) == (0.0, 0.0)


def test_trace_figure_is_byte_stable(tmp_path, office_mini_world, mini_plan):
    w = office_mini_world
    traces = run_trials(w, mini_plan, w.motion_noise, w.sensor, 3, 0)
    first, ellipses = plot_traces(w, mini_plan, traces, tmp_path / "a.svg")
    second, _ = plot_traces(w, mini_plan, traces, tmp_path / "b.svg")
    assert first.read_bytes() == second.read_bytes()
    motions = [s.motion for s in mini_plan.steps if s.motion is not None]
    assert len(ellipses) == 1 + sum(len(m.beliefs) - 1 for m in motions)


def test_summary_figures(tmp_path, office_mini_world):
    rows = [
        {"cost_mode": "petlon", "expanded": 12, "plan_cost": 20.0},
        {"cost_mode": "mptp", "expanded": 30, "plan_cost": 18.5},
        {"cost_mode": "mptp", "expanded": 40, "plan_cost": NO_PLAN},
    ]
    assert plot_benchmark(rows, tmp_path / "bench.svg").stat().st_size > 0
    anytime = [
        {"bound": 1, "bound_kind": "expansion_bound", "cost": NO_PLAN},
        {"bound": 4, "bound_kind": "expansion_bound", "cost": 25.0},
        {"bound": 16, "bound_kind": "expansion_bound", "cost": 21.0},
    ]
    assert plot_anytime(anytime, tmp_path / "anytime.svg").stat().st_size > 0
    rm = build_prm(office_mini_world, PrmConfig(density_d=0.5, seed=0))
    path = plot_roadmap(office_mini_world, rm, tmp_path / "roadmap.svg")
    assert "<svg" in path.read_text(encoding="utf-8")
