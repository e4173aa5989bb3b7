"""
Command-line entry point: plan, simulate, benchmark and roadmap.

Exit codes are the same for every command: 0 plan found, 2 no plan, 1 error.

Usage:
    python cli.py plan --world fixtures/office.world.json --domain fixtures/office.domain.pddl \\
        --problem fixtures/office_c2.problem.pddl --cost-mode mptp --eta 3 --out out/office
    python cli.py simulate --world fixtures/office.world.json --plan out/office/office_c2.plan.json --trials 25
    python cli.py benchmark fixtures/table1.scenario.json --out out/table1
    python cli.py roadmap --world fixtures/office.world.json --density 1.5 --out out/roadmap

Every option can also come from a JSON file given with --config (keys are the
RunConfig field names); flags on the command line take precedence. Without a
seed from either source BELIEF_TMP_SEED is used, then 0.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from motion_planner import COST_MODES, STRATEGIES, CostConfig
from path_config import ConfigError, get_env_seed, get_output_root
from plots import plot_anytime, plot_benchmark, plot_roadmap, plot_traces
from roadmap import PrmConfig, build_prm, export_roadmap, insert_pose
from run_log import log_event
from run_report import (
    ANYTIME_COLUMNS,
    BENCHMARK_COLUMNS,
    TIMING_COLUMNS,
    TRACE_COLUMNS,
    format_plan_summary,
    load_plan,
    save_benchmark_report,
    save_plan,
    summarize_rows,
    trace_rows,
    write_table_csv,
)
from sim_harness import run_benchmark, run_trials, summarize_trials
from task_pddl import parse_domain, parse_problem
from tmp_planner import build_planning_roadmap, initial_belief_from_problem, plan
from unified_telegram import client_from_env
from world import fingerprint, load_world, region_of


EXIT_PLAN = 0
EXIT_ERROR = 1
EXIT_NO_PLAN = 2

MODE_CHOICES = sorted(set(COST_MODES) | {mode.replace('_', '-') for mode in COST_MODES})


# ===== CONFIG =====

@dataclass
class RunConfig:
    world: str | None = None
    domain: str | None = None
    problem: str | None = None
    cost_mode: str = 'mptp'
    m_u: float | None = None
    m_g: float | None = None
    m_sigma: float | None = None
    m_euc: float | None = None
    eta: float = 3.0
    density: float = 1.0
    k_neighbors: int = 6
    seed: int | None = None
    strategy: str = 'greedy'
    time_bound: float | None = None
    trials: int = 1
    out: str | None = None
    region_samples: int = 3
    edge_step: float = 0.5
    clearance: float = 0.0
    workers: int = 1
    expansion_bound: int | None = None

    @classmethod
    def from_sources(cls, file_values: dict, flag_values: dict) -> "RunConfig":
        """Dataclass defaults, then the --config file, then explicit flags."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(file_values) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = dict(file_values)
        values.update({k: v for k, v in flag_values.items() if k in known and v is not None})
        cfg = cls(**values)
        if cfg.seed is None:
            env_seed = get_env_seed()
            cfg.seed = env_seed if env_seed is not None else 0
        if cfg.out is None:
            cfg.out = str(get_output_root())
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.eta >= 0.0:
            raise ConfigError(f"eta must be >= 0, got {self.eta!r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    def require(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"--{name} is required")
            if not Path(value).is_file():
                raise ConfigError(f"{name} file not found: {value}")

    def cost_config(self) -> CostConfig:
        return CostConfig.for_mode(self.cost_mode, m_u=self.m_u, m_g=self.m_g,
                                   m_sigma=self.m_sigma, m_euc=self.m_euc)

    def prm_config(self) -> PrmConfig:
        return PrmConfig(density_d=self.density, k_neighbors=self.k_neighbors, edge_step=self.edge_step,
                         seed=self.seed, region_samples=self.region_samples, clearance=self.clearance)


def _read_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


class _Parser(argparse.ArgumentParser):
    """Usage errors must exit 1, not argparse's 2 (which means no plan here)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--world")
    common.add_argument("--domain")
    common.add_argument("--problem")
    common.add_argument("--cost-mode", dest="cost_mode", choices=MODE_CHOICES)
    common.add_argument("--mu", dest="m_u", type=float, help="control effort weight")
    common.add_argument("--mg", dest="m_g", type=float, help="distance-to-goal weight")
    common.add_argument("--msigma", dest="m_sigma", type=float, help="covariance trace weight")
    common.add_argument("--meuc", dest="m_euc", type=float, help="euclidean length weight")
    common.add_argument("--eta", type=float, help="goal covariance trace bound (m^2)")
    common.add_argument("--density", type=float, help="roadmap nodes per m^2 of free space")
    common.add_argument("--k", dest="k_neighbors", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--strategy", choices=STRATEGIES)
    common.add_argument("--time-bound", dest="time_bound", type=float)
    common.add_argument("--expansion-bound", dest="expansion_bound", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--out")
    common.add_argument("--region-samples", dest="region_samples", type=int)
    common.add_argument("--edge-step", dest="edge_step", type=float)
    common.add_argument("--clearance", type=float)
    common.add_argument("--workers", type=int)

    parser = _Parser(description="Belief-space task and motion planning")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("plan", parents=[common], help="plan and write the plan file")
    simulate = commands.add_parser("simulate", parents=[common], help="Monte Carlo execution of a plan file")
    simulate.add_argument("--plan", dest="plan_file", required=True)
    benchmark = commands.add_parser("benchmark", parents=[common], help="run a scenario file")
    benchmark.add_argument("scenario")
    commands.add_parser("roadmap", parents=[common], help="build a roadmap snapshot and its figure")
    return parser


# ===== COMMANDS =====

def _load_inputs(cfg: RunConfig):
    cfg.require('world', 'domain', 'problem')
    world_text = Path(cfg.world).read_text(encoding='utf-8')
    w = load_world(world_text)
    d = parse_domain(Path(cfg.domain).read_text(encoding='utf-8'))
    p = parse_problem(Path(cfg.problem).read_text(encoding='utf-8'), d)
    log_event(f"inputs: world={cfg.world} ({fingerprint(world_text)[:12]}) domain={d.name} problem={p.name}")
    return w, d, p, fingerprint(world_text)


def cmd_plan(cfg: RunConfig, client=None) -> int:
    w, d, p, world_fp = _load_inputs(cfg)
    cost_cfg = cfg.cost_config()
    rm = build_planning_roadmap(w, p, cfg.prm_config())
    log_event(f"roadmap: nodes={len(rm)} edges={len(rm.edge_index)} density={cfg.density} seed={cfg.seed}")

    tm_plan, reason = plan(d, p, w, rm, cost_cfg, cfg.eta, cfg.seed, cfg.strategy, cfg.time_bound,
                           workers=cfg.workers, expansion_bound=cfg.expansion_bound)
    if tm_plan is None:
        print(f"No plan for {p.name}: {reason}")
        if client:
            client.notify_no_plan(p.name, reason)
        return EXIT_NO_PLAN

    out = Path(cfg.out)
    plan_path = save_plan(
        tm_plan, out / f"{p.name}.plan.json",
        problem=p.name, domain=d.name, world_fingerprint=world_fp, cost_mode=cost_cfg.mode,
        eta=cfg.eta, seed=cfg.seed, strategy=cfg.strategy, density=cfg.density,
    )
    summary = format_plan_summary(tm_plan, w, region_of(w, tm_plan.initial_belief.mean))
    summary_path = out / f"{p.name}.summary.txt"
    summary_path.write_text(summary + '\n', encoding='utf-8')
    print(summary)
    print(f"✅ Plan written to {plan_path}")
    log_event(f"plan written: {plan_path}")
    if client:
        client.notify_plan(summary, p.name, tm_plan.total_cost)
    return EXIT_PLAN


def cmd_simulate(cfg: RunConfig, plan_file: str, client=None) -> int:
    cfg.require('world')
    world_text = Path(cfg.world).read_text(encoding='utf-8')
    w = load_world(world_text)
    tm_plan, header = load_plan(plan_file, fingerprint(world_text))
    if not tm_plan.feasible:
        raise ConfigError(f"{plan_file} holds an infeasible plan")

    traces = run_trials(w, tm_plan, w.motion_noise, w.sensor, cfg.trials, cfg.seed, cfg.workers)
    stats = summarize_trials(traces)

    out = Path(cfg.out)
    stem = Path(plan_file).name.split('.')[0]
    csv_path = write_table_csv(trace_rows(traces), out / f"{stem}.traces.csv", TRACE_COLUMNS)
    svg_path, _ = plot_traces(w, tm_plan, traces, out / f"{stem}.traces.svg")
    print(f"Trials: {stats.trials}  successes: {stats.successes}  success rate: {stats.success_rate:.3f}  "
          f"mean executed distance: {stats.mean_executed_cost:.3f}")
    print(f"✅ Traces written to {csv_path} and {svg_path}")
    log_event(f"simulate: plan={plan_file} trials={stats.trials} successes={stats.successes} "
              f"seed={cfg.seed} outputs={csv_path},{svg_path}")
    if client:
        client.notify_simulation(header.get('problem', stem), stats)
    return EXIT_PLAN


def cmd_benchmark(cfg: RunConfig, scenario: str, client=None) -> int:
    result = run_benchmark(scenario)
    out = Path(cfg.out)
    write_table_csv(result.rows, out / f"{result.name}.csv", BENCHMARK_COLUMNS)
    write_table_csv(result.timing_rows, out / f"{result.name}_timing.csv", TIMING_COLUMNS)
    if result.rows:
        plot_benchmark(result.rows, out / f"{result.name}.svg")
    if result.anytime_rows:
        write_table_csv(result.anytime_rows, out / f"{result.name}_anytime.csv", ANYTIME_COLUMNS)
        plot_anytime(result.anytime_rows, out / f"{result.name}_anytime.svg")
    report_path = save_benchmark_report(result)

    breakdown = summarize_rows(result.rows)
    print(f"Benchmark {result.name}: {breakdown['rows']} row(s), {breakdown['feasible']} with a plan")
    print(f"✅ Results written to {out}")
    log_event(f"benchmark outputs: {out} report={report_path}")
    if client:
        client.notify_benchmark(result.name, breakdown, report_path)

    found = breakdown['feasible'] > 0 or any(row['emissions'] > 0 for row in result.anytime_rows)
    return EXIT_PLAN if found else EXIT_NO_PLAN


def cmd_roadmap(cfg: RunConfig, client=None) -> int:
    cfg.require('world')
    w = load_world(Path(cfg.world).read_text(encoding='utf-8'))
    rm = build_prm(w, cfg.prm_config())
    if cfg.problem is not None:
        cfg.require('domain', 'problem')
        d = parse_domain(Path(cfg.domain).read_text(encoding='utf-8'))
        p = parse_problem(Path(cfg.problem).read_text(encoding='utf-8'), d)
        insert_pose(w, rm, initial_belief_from_problem(p).mean)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(cfg.world).name.split('.')[0]
    snapshot = out / f"{stem}_roadmap.json"
    snapshot.write_text(export_roadmap(rm) + '\n', encoding='utf-8')
    figure = plot_roadmap(w, rm, out / f"{stem}_roadmap.svg")
    print(f"Roadmap: {len(rm)} nodes, {len(rm.edge_index)} edges")
    print(f"✅ Roadmap written to {snapshot} and {figure}")
    log_event(f"roadmap: world={cfg.world} nodes={len(rm)} outputs={snapshot},{figure}")
    return EXIT_PLAN


# ===== MAIN =====

def main(argv=None, client=None) -> int:
    command = 'cli'
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        flags = vars(args)
        cfg = RunConfig.from_sources(_read_config_file(flags.pop('config', None)), flags)
        if client is None:
            client = client_from_env()
        log_event(f"command {command}: {json.dumps(asdict(cfg), sort_keys=True)}")

        if command == 'plan':
            return cmd_plan(cfg, client)
        if command == 'simulate':
            return cmd_simulate(cfg, args.plan_file, client)
        if command == 'benchmark':
            return cmd_benchmark(cfg, args.scenario, client)
        return cmd_roadmap(cfg, client)

    except (ValueError, RuntimeError, OSError) as e:
        print(f"❌ {command} failed: {e}")
        log_event(f"command {command} failed: {type(e).__name__}: {e}")
        if client:
            client.notify_error(command, str(e))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
