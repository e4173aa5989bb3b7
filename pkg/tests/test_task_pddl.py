import pytest

from conftest import read_fixture
from task_pddl import (
    FluentTerm,
    PddlSemanticError,
    PddlSyntaxError,
    TaskError,
    apply,
    apply_start,
    applicable,
    format_domain,
    format_problem,
    goal_satisfied,
    ground,
    initial_state,
    metric_value,
    parse_domain,
    parse_metadata,
    parse_problem,
    trigger_of,
    type_is_subtype,
)


TINY_DOMAIN = """(define (domain tiny)
  (:types place)
  (:predicates (here ?p - place))
  (:durative-action go
    :parameters (?p - place)
    :duration (= ?duration 1)
    :condition (at start {condition})
    :effect (at end (here ?p))))
"""


@pytest.fixture(scope="module")
def office_c2(office_domain):
    return parse_problem(read_fixture("office_c2.problem.pddl"), office_domain)


def _action(actions, signature):
    return next(a for a in actions if a.signature == signature)


# ===== PARSING =====

def test_office_domain_shape(office_domain):
    assert office_domain.name == "office"
    assert [a.name for a in office_domain.actions] == ["goto_region", "collect_document", "goto_lift"]
    assert office_domain.is_subtype("cubicle", "region")
    assert not office_domain.is_subtype("robot", "region")
    assert office_domain.action("goto_region").duration == 100.0


def test_type_hierarchy_walk():
    parents = {"cubicle": "region", "region": "object", "loop_a": "loop_b", "loop_b": "loop_a"}
    assert type_is_subtype(parents, "cubicle", "region")
    assert type_is_subtype(parents, "cubicle", "object")
    assert type_is_subtype(parents, "robot", "object")
    assert not type_is_subtype(parents, "region", "cubicle")
    assert not type_is_subtype(parents, "loop_a", "region")


def test_problem_objects_checked_against_the_domain_hierarchy(office_domain, office_c2):
    for obj, type_name in office_c2.object_types.items():
        assert office_domain.is_subtype(type_name, "object"), obj
    assert office_domain.is_subtype(office_c2.object_types["c7"], "region")


def test_indirect_functions(office_domain, corridor_domain):
    assert office_domain.indirect_functions == {"external", "bound"}
    assert corridor_domain.indirect_functions == {"external"}
    assert {"connected", "hasdoor"} <= corridor_domain.static_predicates


def test_problem_metadata_and_init(office_c2):
    assert office_c2.metadata["initial_belief"]["mean"] == [1.8, 6.0, 0.0]
    assert office_c2.object_types["c7"] == "cubicle"
    assert dict(office_c2.init_fluents)[FluentTerm("pending")] == 2.0
    assert len(office_c2.goal) == 3


def test_metadata_directive_errors_carry_line():
    assert parse_metadata("(define)\n; @note [1, 2]\n") == {"note": [1, 2]}
    with pytest.raises(PddlSyntaxError) as info:
        parse_metadata("\n\n; @initial_belief {oops}\n")
    assert info.value.line == 3


def test_single_literal_goal(corridor_domain):
    text = read_fixture("corridor.problem.pddl").replace("(:goal (and (visited r2) (visited r3)))", "(:goal (visited r3))")
    problem = parse_problem(text, corridor_domain)
    assert len(problem.goal) == 1
    assert problem.goal[0].atom.args == ("r3",)


def test_unbalanced_parentheses():
    with pytest.raises(PddlSyntaxError) as info:
        parse_domain("(define (domain broken)\n  (:types place)\n  (:predicates (here ?p - place))\n")
    assert info.value.line is not None


@pytest.mark.parametrize("condition", ["(near ?p)", "(here)", "(here ?q)"])
def test_semantic_errors_in_conditions(condition):
    with pytest.raises(PddlSemanticError) as info:
        parse_domain(TINY_DOMAIN.format(condition=condition))
    assert info.value.line == 7


def test_unknown_constructs_are_syntax_errors():
    with pytest.raises(PddlSyntaxError):
        parse_domain(TINY_DOMAIN.format(condition="(here ?p)").replace(":types", ":constants"))
    with pytest.raises(PddlSyntaxError):
        parse_domain(TINY_DOMAIN.format(condition="(here ?p)").replace("(= ?duration 1)", "(<= ?duration 1)"))


def test_problem_errors(office_domain, corridor_domain):
    text = read_fixture("office_c2.problem.pddl")
    with pytest.raises(PddlSemanticError):
        parse_problem(text, corridor_domain)
    with pytest.raises(PddlSemanticError):
        parse_problem(text.replace("(= (get c7) 1)", "(= (get s) 1)"), office_domain)
    with pytest.raises(PddlSyntaxError):
        parse_problem(text.replace("(:goal (and", "(:goals (and"), office_domain)


def test_pretty_printed_model_reparses(office_domain, office_c2):
    assert parse_domain(format_domain(office_domain)) == office_domain
    again = parse_problem(format_problem(office_c2), office_domain)
    assert again == office_c2
    assert again.metadata == office_c2.metadata


# ===== GROUNDING =====

def test_attachments_mark_external_actions(office_domain, office_c2, corridor_domain, corridor_problem):
    office = ground(office_domain, office_c2)
    assert {a.name for a in office if a.has_attachment} == {"goto_region", "goto_lift"}
    goto = _action(office, "(goto_region r s c3)")
    assert goto.attachments == (("act-cost", "external"), ("goal-trace", "bound"))

    corridor = ground(corridor_domain, corridor_problem)
    assert {a.name for a in corridor if a.has_attachment} == {"goto_room", "goto_door"}


def test_static_predicates_prune_groundings(corridor_domain, corridor_problem):
    actions = ground(corridor_domain, corridor_problem)
    assert sum(a.name == "goto_room" for a in actions) == 8
    assert sorted(a.signature for a in actions if a.name == "goto_door") == [
        "(goto_door r1 d12)", "(goto_door r2 d12)", "(goto_door r2 d23)", "(goto_door r3 d23)",
    ]


# ===== SEMANTICS =====

def test_collect_sequence_updates_metric(office_domain, office_c2):
    actions = ground(office_domain, office_c2)
    s0 = initial_state(office_domain, office_c2)
    assert s0.value("act-cost") == 0.0

    s1 = apply(s0, _action(actions, "(goto_region r s c3)"), {"external": 2.5, "bound": 0.1})
    assert s1.holds("robot_in", "r", "c3")
    assert s1.holds("awaiting")
    assert s1.value("triggered", "s", "c3") == 0.0
    assert s1.value("external") == 2.5

    # awaiting blocks every navigation until the document is collected
    assert not applicable(s1, _action(actions, "(goto_region r c3 c7)"))

    s2 = apply(s1, _action(actions, "(collect_document r c3)"))
    assert s2.value("act-cost") == pytest.approx(6.5)
    assert s2.value("pending") == 1.0
    assert s2.value("goal-trace") == pytest.approx(0.1)
    assert metric_value(office_c2, s2) == pytest.approx(6.5)
    assert not goal_satisfied(office_c2, s2)


def test_goal_reached_after_full_sequence(office_domain, office_c2):
    actions = ground(office_domain, office_c2)
    s = initial_state(office_domain, office_c2)
    for signature, values in [
        ("(goto_region r s c7)", {"external": 1.0, "bound": 0.0}),
        ("(collect_document r c7)", None),
        ("(goto_region r c7 c3)", {"external": 2.0, "bound": 0.0}),
        ("(collect_document r c3)", None),
        ("(goto_lift r c3 l)", {"external": 3.0}),
    ]:
        s = apply(s, _action(actions, signature), values)
    assert goal_satisfied(office_c2, s)
    assert metric_value(office_c2, s) == pytest.approx(14.0)


def test_missing_attachment_value(office_domain, office_c2):
    actions = ground(office_domain, office_c2)
    s0 = initial_state(office_domain, office_c2)
    with pytest.raises(TaskError, match="bound"):
        apply(s0, _action(actions, "(goto_region r s c3)"), {"external": 1.0})


def test_inapplicable_action(office_domain, office_c2):
    actions = ground(office_domain, office_c2)
    s0 = initial_state(office_domain, office_c2)
    with pytest.raises(TaskError):
        apply(s0, _action(actions, "(goto_lift r s l)"), {"external": 1.0})


def test_trigger_of_reports_raised_fluent(office_domain, office_c2):
    actions = ground(office_domain, office_c2)
    s0 = initial_state(office_domain, office_c2)
    s_mid = apply_start(s0, _action(actions, "(goto_region r s c3)"))
    assert trigger_of(s0, s_mid) == FluentTerm("triggered", ("s", "c3"))
    assert trigger_of(s0, s0) is None


def test_state_key_can_ignore_fluents(office_domain, office_c2):
    actions = ground(office_domain, office_c2)
    s0 = initial_state(office_domain, office_c2)
    goto = _action(actions, "(goto_region r s c3)")
    cheap = apply(s0, goto, {"external": 1.0, "bound": 0.2})
    dear = apply(s0, goto, {"external": 5.0, "bound": 0.4})
    assert cheap != dear
    ignored = {"act-cost", "goal-trace", "external", "bound"}
    assert cheap.key(ignored) == dear.key(ignored)
