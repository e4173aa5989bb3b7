import pytest

import path_config
import run_report
from motion_planner import CostConfig
from path_config import FIXTURE_FOLDER
from roadmap import PrmConfig
from task_pddl import parse_domain, parse_problem
from tmp_planner import build_planning_roadmap, plan
from world import load_world


MINI_BELIEF = (
    '; @initial_belief {"mean": [1.0, 3.0, 0.0], '
    '"cov": [[0.01, 0.0, 0.0], [0.0, 0.01, 0.0], [0.0, 0.0, 0.0025]]}'
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run scenario-length tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session", autouse=True)
def _isolated_outputs(tmp_path_factory):
    """Logs and xlsx reports go to a temp folder for the whole session."""
    root = tmp_path_factory.mktemp("run")
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(path_config, "LOG_FOLDER", root / "logs")
        mp.setattr(run_report, "REPORT_FOLDER", str(root / "reports"))
        mp.delenv("TELEGRAM_ENABLED", raising=False)
        mp.delenv("BELIEF_TMP_SEED", raising=False)
        mp.delenv("BELIEF_TMP_OUT", raising=False)
        yield root


def read_fixture(name: str) -> str:
    return (FIXTURE_FOLDER / name).read_text(encoding="utf-8")


def mini_problem_text(docs) -> str:
    gets = "\n".join(f"         (= (get {c}) 1)" for c in docs)
    goals = " ".join(f"(collected {c})" for c in docs)
    return (
        f"{MINI_BELIEF}\n"
        f"(define (problem office_mini_{'_'.join(docs)})\n"
        f"  (:domain office)\n"
        f"  (:objects r - robot s - start l - lift c1 c2 c3 c4 c5 - cubicle)\n"
        f"  (:init (robot_in r s)\n"
        f"         (= (pending) {len(docs)})\n"
        f"{gets})\n"
        f"  (:goal (and {goals} (reached l)))\n"
        f"  (:metric minimize (act-cost)))\n"
    )


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURE_FOLDER


@pytest.fixture(scope="session")
def office_world():
    return load_world(read_fixture("office.world.json"))


@pytest.fixture(scope="session")
def office_mini_world():
    return load_world(read_fixture("office_mini.world.json"))


@pytest.fixture(scope="session")
def corridor_world():
    return load_world(read_fixture("corridor.world.json"))


@pytest.fixture(scope="session")
def two_route_world():
    return load_world(read_fixture("two_route.world.json"))


@pytest.fixture(scope="session")
def office_domain():
    return parse_domain(read_fixture("office.domain.pddl"))


@pytest.fixture(scope="session")
def corridor_domain():
    return parse_domain(read_fixture("corridor.domain.pddl"))


@pytest.fixture(scope="session")
def corridor_problem(corridor_domain):
    return parse_problem(read_fixture("corridor.problem.pddl"), corridor_domain)


@pytest.fixture(scope="session")
def two_route_problem(corridor_domain):
    return parse_problem(read_fixture("two_route.problem.pddl"), corridor_domain)


@pytest.fixture
def mini_problem(office_domain):
    """Factory: office_mini problem collecting the given cubicles."""

    def make(docs=("c1", "c3")):
        return parse_problem(mini_problem_text(docs), office_domain)

    return make


@pytest.fixture
def mini_roadmap(office_mini_world):
    """Factory: small roadmap of the office_mini world with the problem's start inserted."""

    def make(problem, density=1.0, seed=0):
        return build_planning_roadmap(office_mini_world, problem, PrmConfig(density_d=density, seed=seed))

    return make


@pytest.fixture(scope="session")
def mini_plan(office_domain, office_mini_world):
    """Planned two-cubicle tour on office_mini, shared by execution and report tests."""
    problem = parse_problem(mini_problem_text(("c1", "c3")), office_domain)
    rm = build_planning_roadmap(office_mini_world, problem, PrmConfig(density_d=1.0, seed=0))
    result, reason = plan(office_domain, problem, office_mini_world, rm, CostConfig.for_mode("mptp"), 1000.0)
    assert reason is None
    return result
