"""
PDDL subset for navigation tasks: typed objects, predicates, numeric
fluents and durative actions whose effects may hand a value over to an
external module.

Supported constructs (anything else is rejected with a line/column):

    domain:  (:requirements ...) (:types a b - parent ...)
             (:predicates (p ?x - t ...) ...)
             (:functions (f ?x - t ...) [- number] ...)
             (:durative-action NAME :parameters (...) :duration (= ?duration N)
                               :condition C :effect E)
    C:       (and T ...) | T       with T = (at start X) | (over all X) | (at end X)
    X:       (p ?x ...) | (not (p ?x ...)) | (OP expr expr), OP in > >= < <= =
    E:       (and (at start|end Y) ...) with Y = atom | (not atom)
             | (increase|decrease|assign (f ...) expr)
    expr:    number | (f ...) | (+|-|*|/ expr expr)

    problem: (:domain D) (:objects o1 o2 - t ...) (:init atoms (= (f o) N) ...)
             (:goal (and X ...)) [(:metric minimize expr)]

Problem metadata rides in comment directives, one JSON value per line:

    ; @initial_belief {"mean": [1.0, 7.0, 0.0], "cov": [[...], [...], [...]]}

A 0-ary function that no effect ever writes is an indirect variable; an
effect ``(increase (v_dir) (v_ind))`` marks the action as one whose value
comes from outside the task model.
"""

import itertools
import json
import math
import operator
import re
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType

from pyparsing import Forward, ParseException, Regex, Suppress, ZeroOrMore, col, lineno, rest_of_line


COMPARATORS = {
    '>': operator.gt,
    '>=': operator.ge,
    '<': operator.lt,
    '<=': operator.le,
    '=': operator.eq,
}
ARITHMETIC = ('+', '-', '*', '/')
ROOT_TYPE = 'object'
TIMINGS = {('at', 'start'): 'start', ('over', 'all'): 'all', ('at', 'end'): 'end'}
TIMING_WORDS = {'start': 'at start', 'all': 'over all', 'end': 'at end'}
METADATA_RE = re.compile(r'^[ \t]*;+[ \t]*@([A-Za-z_][\w-]*)[ \t]+(.*?)[ \t]*$', re.MULTILINE)


class PddlSyntaxError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class PddlSemanticError(ValueError):
    """Undeclared symbol, arity or type mismatch."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class TaskError(ValueError):
    """Applying an action or evaluating an expression is not possible in a state."""


# ===== S-EXPRESSIONS =====

class Symbol(str):
    """Lower-cased token that remembers where it came from."""

    def __new__(cls, text: str, line: int = 0, column: int = 0):
        obj = super().__new__(cls, text.lower())
        obj.line = line
        obj.column = column
        return obj


class SList:
    """Parenthesized list with the position of its opening bracket."""

    __slots__ = ('items', 'line', 'column')

    def __init__(self, items, line: int, column: int):
        self.items = list(items)
        self.line = line
        self.column = column

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, index):
        return self.items[index]

    @property
    def head(self) -> str | None:
        if self.items and isinstance(self.items[0], Symbol):
            return str(self.items[0])
        return None


def _symbol_action(s, loc, toks):
    return Symbol(toks[0], lineno(loc, s), col(loc, s))


def _list_action(s, loc, toks):
    return SList(toks, lineno(loc, s), col(loc, s))


_TOKEN = Regex(r"[^\s();]+").set_parse_action(_symbol_action)
_SEXPR = Forward()
_SEXPR <<= (Suppress("(") + ZeroOrMore(_TOKEN | _SEXPR) + Suppress(")")).set_parse_action(_list_action)
_SEXPR.ignore(";" + rest_of_line)


def read_sexpr(text: str) -> SList:
    try:
        result = _SEXPR.parse_string(text, parse_all=True)
    except ParseException as exc:
        raise PddlSyntaxError(exc.msg, exc.lineno, exc.col) from exc
    return result[0]


def _fail(message: str, at) -> PddlSyntaxError:
    return PddlSyntaxError(message, getattr(at, 'line', None), getattr(at, 'column', None))


def _semantic(message: str, at) -> PddlSemanticError:
    return PddlSemanticError(message, getattr(at, 'line', None), getattr(at, 'column', None))


def _expect_list(item, what: str) -> SList:
    if not isinstance(item, SList):
        raise _fail(f"expected {what}, got {item!r}", item)
    return item


def _expect_symbol(item, what: str) -> Symbol:
    if not isinstance(item, Symbol):
        raise _fail(f"expected {what}, got a list", item)
    return item


def _number(item) -> float | None:
    if not isinstance(item, Symbol):
        return None
    try:
        value = float(item)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


# ===== MODEL =====

def type_is_subtype(parents: dict, child: str, ancestor: str) -> bool:
    """Walk child's parent chain; every type descends from 'object'. Cycles end the walk."""
    current = child
    seen = set()
    while current is not None and current not in seen:
        if current == ancestor:
            return True
        seen.add(current)
        current = parents.get(current)
    return ancestor == ROOT_TYPE


@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: tuple = ()

    def __str__(self):
        return f"({' '.join((self.predicate, *self.args))})"


@dataclass(frozen=True, order=True)
class FluentTerm:
    name: str
    args: tuple = ()

    def __str__(self):
        return f"({' '.join((self.name, *self.args))})"


@dataclass(frozen=True)
class BinaryExpr:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class PropCondition:
    atom: Atom
    positive: bool = True


@dataclass(frozen=True)
class Comparison:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class AddEffect:
    atom: Atom


@dataclass(frozen=True)
class DeleteEffect:
    atom: Atom


@dataclass(frozen=True)
class NumericEffect:
    op: str  # 'increase', 'decrease' or 'assign'
    target: FluentTerm
    value: object


@dataclass(frozen=True)
class Timed:
    when: str  # 'start', 'all' or 'end'
    item: object


@dataclass(frozen=True)
class DurativeAction:
    name: str
    parameters: tuple  # ((variable, type), ...)
    duration: float
    conditions: tuple = ()
    effects: tuple = ()


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple = ()
    types: tuple = ()  # ((type, parent), ...)
    predicates: tuple = ()  # ((name, ((variable, type), ...)), ...)
    functions: tuple = ()
    actions: tuple = ()

    @cached_property
    def type_parents(self) -> dict:
        return dict(self.types)

    @cached_property
    def predicate_map(self) -> dict:
        return dict(self.predicates)

    @cached_property
    def function_map(self) -> dict:
        return dict(self.functions)

    def action(self, name: str) -> DurativeAction:
        for action in self.actions:
            if action.name == name:
                return action
        raise KeyError(name)

    @cached_property
    def written_functions(self) -> frozenset:
        return frozenset(
            t.item.target.name
            for action in self.actions for t in action.effects
            if isinstance(t.item, NumericEffect)
        )

    @cached_property
    def indirect_functions(self) -> frozenset:
        """0-ary functions no effect writes; their values come from outside."""
        return frozenset(
            name for name, params in self.functions
            if not params and name not in self.written_functions
        )

    @cached_property
    def static_predicates(self) -> frozenset:
        changed = {
            t.item.atom.predicate
            for action in self.actions for t in action.effects
            if isinstance(t.item, (AddEffect, DeleteEffect))
        }
        return frozenset(name for name, _ in self.predicates if name not in changed)

    def is_subtype(self, child: str, ancestor: str) -> bool:
        return type_is_subtype(self.type_parents, child, ancestor)


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: tuple = ()  # ((object, type), ...)
    init_propositions: frozenset = frozenset()
    init_fluents: tuple = ()  # ((FluentTerm, value), ...)
    goal: tuple = ()
    metric: object = None
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    @cached_property
    def object_types(self) -> dict:
        return dict(self.objects)


@dataclass(frozen=True)
class GroundedAction:
    name: str
    args: tuple
    duration: float
    start_conditions: tuple = ()
    overall_conditions: tuple = ()
    end_conditions: tuple = ()
    start_effects: tuple = ()
    end_effects: tuple = ()
    attachments: tuple = ()  # ((v_dir, v_ind), ...)

    @property
    def signature(self) -> str:
        return f"({' '.join((self.name, *self.args))})"

    @property
    def has_attachment(self) -> bool:
        return bool(self.attachments)


@dataclass(frozen=True, eq=False)
class TaskState:
    propositions: frozenset
    fluents: MappingProxyType

    def __post_init__(self):
        if not isinstance(self.fluents, MappingProxyType):
            object.__setattr__(self, 'fluents', MappingProxyType(dict(self.fluents)))

    def __eq__(self, other):
        if not isinstance(other, TaskState):
            return NotImplemented
        return self.propositions == other.propositions and dict(self.fluents) == dict(other.fluents)

    def __hash__(self):
        return hash(self.key())

    def holds(self, predicate: str, *args) -> bool:
        return Atom(predicate, tuple(args)) in self.propositions

    def value(self, name: str, *args) -> float:
        term = FluentTerm(name, tuple(args))
        if term not in self.fluents:
            raise TaskError(f"undefined fluent {term}")
        return self.fluents[term]

    def key(self, exclude=frozenset()) -> tuple:
        """Hashable identity, optionally ignoring fluents by name."""
        kept = tuple(sorted((t, v) for t, v in self.fluents.items() if t.name not in exclude))
        return self.propositions, kept


# ===== DOMAIN PARSING =====

def _typed_list(items, what: str, allow_untyped: bool) -> list:
    """Parse `a b - t c - u d` into [(a, t), (b, t), (c, u), (d, object)]."""
    result = []
    pending = []
    iterator = iter(items)
    for item in iterator:
        token = _expect_symbol(item, what)
        if token == '-':
            type_name = next(iterator, None)
            if type_name is None or not pending:
                raise _fail(f"dangling '-' in {what}", token)
            type_name = _expect_symbol(type_name, "type name")
            result.extend((name, str(type_name)) for name in pending)
            pending = []
        else:
            pending.append(token)
    if pending:
        if not allow_untyped:
            raise _semantic(f"untyped {what} {str(pending[0])!r}", pending[0])
        result.extend((name, ROOT_TYPE) for name in pending)
    return result


def _parse_declarations(section: SList, what: str) -> list:
    declarations = []
    items = section.items[1:]
    index = 0
    while index < len(items):
        item = items[index]
        if isinstance(item, Symbol) and item == '-':
            # "- number" after a function declaration
            if index + 1 >= len(items) or items[index + 1] != 'number':
                raise _fail(f"only '- number' may follow a {what} declaration", item)
            index += 2
            continue
        decl = _expect_list(item, f"{what} declaration")
        name = _expect_symbol(decl[0], f"{what} name") if len(decl) else None
        if name is None:
            raise _fail(f"empty {what} declaration", decl)
        params = _typed_list(decl.items[1:], f"{what} parameter", allow_untyped=True)
        for var, _ in params:
            if not var.startswith('?'):
                raise _fail(f"{what} parameter {str(var)!r} must start with '?'", var)
        declarations.append((str(name), tuple((str(v), t) for v, t in params)))
        index += 1
    return declarations


class _Scope:
    """Resolves the arguments of atoms and fluent terms and type-checks them."""

    def __init__(self, domain_parts: dict, variables: dict | None = None, objects: dict | None = None):
        self.types = domain_parts['types']
        self.predicates = domain_parts['predicates']
        self.functions = domain_parts['functions']
        self.variables = variables or {}
        self.objects = objects or {}

    def is_subtype(self, child: str, ancestor: str) -> bool:
        return type_is_subtype(self.types, child, ancestor)

    def _args(self, symbol, args, declared, kind):
        if len(args) != len(declared):
            raise _semantic(
                f"{kind} {str(symbol)!r} expects {len(declared)} argument(s), got {len(args)}", symbol
            )
        resolved = []
        for arg, (_, expected) in zip(args, declared):
            arg = _expect_symbol(arg, "argument")
            if arg.startswith('?'):
                actual = self.variables.get(arg)
                if actual is None:
                    raise _semantic(f"unknown variable {str(arg)!r} in {kind} {str(symbol)!r}", arg)
            else:
                actual = self.objects.get(arg)
                if actual is None:
                    raise _semantic(f"unknown object {str(arg)!r} in {kind} {str(symbol)!r}", arg)
            if not self.is_subtype(actual, expected):
                raise _semantic(
                    f"type mismatch in {kind} {str(symbol)!r}: {str(arg)!r} is {actual}, expected {expected}", arg
                )
            resolved.append(str(arg))
        return tuple(resolved)

    def atom(self, node) -> Atom:
        node = _expect_list(node, "atom")
        name = _expect_symbol(node[0], "predicate") if len(node) else None
        if name is None:
            raise _fail("empty atom", node)
        if name not in self.predicates:
            raise _semantic(f"undeclared predicate {str(name)!r}", name)
        return Atom(str(name), self._args(name, node.items[1:], self.predicates[name], "predicate"))

    def term(self, node) -> FluentTerm:
        node = _expect_list(node, "fluent term")
        name = _expect_symbol(node[0], "function") if len(node) else None
        if name is None:
            raise _fail("empty fluent term", node)
        if name not in self.functions:
            raise _semantic(f"undeclared function {str(name)!r}", name)
        return FluentTerm(str(name), self._args(name, node.items[1:], self.functions[name], "function"))

    def expression(self, node):
        value = _number(node)
        if value is not None:
            return value
        if isinstance(node, Symbol):
            raise _fail(f"expected a number or a fluent term, got {str(node)!r}", node)
        if node.head in ARITHMETIC:
            if len(node) != 3:
                raise _fail(f"operator {node.head!r} takes two operands", node)
            return BinaryExpr(node.head, self.expression(node[1]), self.expression(node[2]))
        return self.term(node)

    def condition(self, node):
        node = _expect_list(node, "condition")
        if node.head == 'not':
            if len(node) != 2:
                raise _fail("'not' takes one atom", node)
            return PropCondition(self.atom(node[1]), positive=False)
        if node.head in COMPARATORS:
            if len(node) != 3:
                raise _fail(f"comparison {node.head!r} takes two operands", node)
            return Comparison(node.head, self.expression(node[1]), self.expression(node[2]))
        return PropCondition(self.atom(node))

    def effect(self, node):
        node = _expect_list(node, "effect")
        if node.head == 'not':
            if len(node) != 2:
                raise _fail("'not' takes one atom", node)
            return DeleteEffect(self.atom(node[1]))
        if node.head in ('increase', 'decrease', 'assign'):
            if len(node) != 3:
                raise _fail(f"{node.head!r} takes a fluent and a value", node)
            return NumericEffect(node.head, self.term(node[1]), self.expression(node[2]))
        return AddEffect(self.atom(node))


def _conjuncts(node) -> list:
    node = _expect_list(node, "formula")
    if node.head == 'and':
        return node.items[1:]
    return [node]


def _timed(node, allowed: tuple, parse_item) -> Timed:
    node = _expect_list(node, "timed formula")
    if len(node) != 3 or not isinstance(node[0], Symbol) or not isinstance(node[1], Symbol):
        raise _fail("expected (at start ...), (over all ...) or (at end ...)", node)
    when = TIMINGS.get((str(node[0]), str(node[1])))
    if when not in allowed:
        raise _fail(f"unsupported timing '{node[0]} {node[1]}'", node)
    return Timed(when, parse_item(node[2]))


def _parse_action(node: SList, parts: dict) -> DurativeAction:
    if len(node) < 2:
        raise _fail("durative action without a name", node)
    name = _expect_symbol(node[1], "action name")
    fields = {}
    items = node.items[2:]
    if len(items) % 2:
        raise _fail(f"action {str(name)!r}: keyword without a value", node)
    for key, value in zip(items[::2], items[1::2]):
        key = _expect_symbol(key, "action keyword")
        if key not in (':parameters', ':duration', ':condition', ':effect'):
            raise _fail(f"unknown action keyword {str(key)!r}", key)
        if key in fields:
            raise _fail(f"duplicate {str(key)} in action {str(name)!r}", key)
        fields[str(key)] = value

    params = _typed_list(_expect_list(fields.get(':parameters', SList([], node.line, node.column)), "parameters"),
                         "parameter", allow_untyped=True)
    variables = {}
    for var, type_name in params:
        if not var.startswith('?'):
            raise _fail(f"parameter {str(var)!r} must start with '?'", var)
        if type_name != ROOT_TYPE and type_name not in parts['types']:
            raise _semantic(f"undeclared type {type_name!r} in action {str(name)!r}", var)
        if var in variables:
            raise _semantic(f"duplicate parameter {str(var)!r} in action {str(name)!r}", var)
        variables[var] = type_name
    scope = _Scope(parts, variables=variables)

    if ':duration' not in fields:
        raise _fail(f"action {str(name)!r} has no :duration", node)
    duration_node = _expect_list(fields[':duration'], "duration")
    duration = _number(duration_node[2]) if len(duration_node) == 3 else None
    if duration_node.head != '=' or len(duration_node) != 3 or duration_node[1] != '?duration' or duration is None:
        raise _fail("duration must read (= ?duration N)", duration_node)
    if duration < 0.0:
        raise _semantic(f"action {str(name)!r} has a negative duration", duration_node)

    conditions = ()
    if ':condition' in fields:
        conditions = tuple(
            _timed(c, ('start', 'all', 'end'), scope.condition) for c in _conjuncts(fields[':condition'])
        )
    effects = ()
    if ':effect' in fields:
        effects = tuple(_timed(e, ('start', 'end'), scope.effect) for e in _conjuncts(fields[':effect']))

    return DurativeAction(
        name=str(name),
        parameters=tuple((str(v), t) for v, t in params),
        duration=duration,
        conditions=conditions,
        effects=effects,
    )


def _header(node: SList, keyword: str, what: str) -> str:
    if len(node) < 2 or node.head != 'define':
        raise _fail(f"expected (define ({keyword} NAME) ...)", node)
    head = _expect_list(node[1], f"{keyword} header")
    if len(head) != 2 or head.head != keyword:
        raise _fail(f"expected ({keyword} NAME)", head)
    return str(_expect_symbol(head[1], f"{what} name"))


def parse_domain(text: str) -> Domain:
    root = read_sexpr(text)
    name = _header(root, 'domain', "domain")

    parts = {'types': {}, 'predicates': {}, 'functions': {}}
    requirements = ()
    types = []
    predicates = []
    functions = []
    action_nodes = []
    for section in root.items[2:]:
        section = _expect_list(section, "domain section")
        head = section.head
        if head == ':requirements':
            requirements = tuple(str(_expect_symbol(r, "requirement")) for r in section.items[1:])
        elif head == ':types':
            types = [(str(t), str(p)) for t, p in _typed_list(section.items[1:], "type", allow_untyped=True)]
            parts['types'] = dict(types)
        elif head == ':predicates':
            predicates = _parse_declarations(section, "predicate")
            parts['predicates'] = {n: p for n, p in predicates}
        elif head == ':functions':
            functions = _parse_declarations(section, "function")
            parts['functions'] = {n: p for n, p in functions}
        elif head == ':durative-action':
            action_nodes.append(section)
        else:
            raise _fail(f"unknown domain construct {head!r}", section)

    for type_name, parent in types:
        if parent != ROOT_TYPE and parent not in parts['types']:
            raise PddlSemanticError(f"type {type_name!r} has undeclared parent {parent!r}")
    for kind, declarations in (("predicate", predicates), ("function", functions)):
        for decl_name, params in declarations:
            for _, type_name in params:
                if type_name != ROOT_TYPE and type_name not in parts['types']:
                    raise PddlSemanticError(f"{kind} {decl_name!r} uses undeclared type {type_name!r}")

    actions = tuple(_parse_action(node, parts) for node in action_nodes)
    names = [a.name for a in actions]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise PddlSemanticError(f"duplicate action {duplicates[0]!r}")

    return Domain(
        name=name,
        requirements=requirements,
        types=tuple(types),
        predicates=tuple(predicates),
        functions=tuple(functions),
        actions=actions,
    )


# ===== PROBLEM PARSING =====

def parse_metadata(text: str) -> dict:
    metadata = {}
    for match in METADATA_RE.finditer(text):
        line = text.count('\n', 0, match.start()) + 1
        try:
            metadata[match.group(1).lower()] = json.loads(match.group(2))
        except json.JSONDecodeError as exc:
            raise PddlSyntaxError(f"directive @{match.group(1)}: {exc.msg}", line, exc.colno) from exc
    return metadata


def parse_problem(text: str, d: Domain) -> Problem:
    root = read_sexpr(text)
    name = _header(root, 'problem', "problem")
    parts = {'types': d.type_parents, 'predicates': d.predicate_map, 'functions': d.function_map}

    sections = {}
    for section in root.items[2:]:
        section = _expect_list(section, "problem section")
        if section.head not in (':domain', ':objects', ':init', ':goal', ':metric'):
            raise _fail(f"unknown problem construct {section.head!r}", section)
        if section.head in sections:
            raise _fail(f"duplicate {section.head} section", section)
        sections[section.head] = section

    if ':domain' not in sections or len(sections[':domain']) != 2:
        raise _fail("problem must name its domain with (:domain NAME)", root)
    domain_name = str(_expect_symbol(sections[':domain'][1], "domain name"))
    if domain_name != d.name:
        raise PddlSemanticError(f"problem is for domain {domain_name!r}, not {d.name!r}")

    objects = []
    if ':objects' in sections:
        objects = _typed_list(sections[':objects'].items[1:], "object", allow_untyped=False)
    object_types = {}
    for obj, type_name in objects:
        if type_name != ROOT_TYPE and type_name not in d.type_parents:
            raise _semantic(f"object {str(obj)!r} has undeclared type {type_name!r}", obj)
        if obj in object_types:
            raise _semantic(f"duplicate object {str(obj)!r}", obj)
        object_types[str(obj)] = type_name
    scope = _Scope(parts, objects=object_types)

    propositions = set()
    fluents = []
    if ':init' in sections:
        for item in sections[':init'].items[1:]:
            item = _expect_list(item, "initial fact")
            if item.head == '=':
                if len(item) != 3:
                    raise _fail("fluent initialization reads (= (f ...) N)", item)
                value = _number(item[2])
                if value is None:
                    raise _semantic("fluent initial value must be numeric", item[2] if isinstance(item[2], Symbol) else item)
                fluents.append((scope.term(item[1]), value))
            else:
                propositions.add(scope.atom(item))

    if ':goal' not in sections or len(sections[':goal']) != 2:
        raise _fail("problem requires a (:goal ...)", root)
    goal = tuple(scope.condition(c) for c in _conjuncts(sections[':goal'][1]))
    if not goal:
        raise _semantic("goal required: the goal is empty", sections[':goal'])

    metric = None
    if ':metric' in sections:
        node = sections[':metric']
        if len(node) != 3 or node[1] != 'minimize':
            raise _fail("metric must read (:metric minimize EXPR)", node)
        metric = scope.expression(node[2])

    return Problem(
        name=name,
        domain_name=domain_name,
        objects=tuple((str(o), t) for o, t in objects),
        init_propositions=frozenset(propositions),
        init_fluents=tuple(fluents),
        goal=goal,
        metric=metric,
        metadata=parse_metadata(text),
    )


# ===== GROUNDING =====

def objects_of_type(d: Domain, p: Problem, type_name: str) -> list:
    return [obj for obj, t in p.objects if d.is_subtype(t, type_name)]


def _bind(node, binding: dict):
    if isinstance(node, Atom):
        return Atom(node.predicate, tuple(binding.get(a, a) for a in node.args))
    if isinstance(node, FluentTerm):
        return FluentTerm(node.name, tuple(binding.get(a, a) for a in node.args))
    if isinstance(node, BinaryExpr):
        return BinaryExpr(node.op, _bind(node.left, binding), _bind(node.right, binding))
    if isinstance(node, PropCondition):
        return PropCondition(_bind(node.atom, binding), node.positive)
    if isinstance(node, Comparison):
        return Comparison(node.op, _bind(node.left, binding), _bind(node.right, binding))
    if isinstance(node, AddEffect):
        return AddEffect(_bind(node.atom, binding))
    if isinstance(node, DeleteEffect):
        return DeleteEffect(_bind(node.atom, binding))
    if isinstance(node, NumericEffect):
        return NumericEffect(node.op, _bind(node.target, binding), _bind(node.value, binding))
    return node


def _statically_false(conditions, static: frozenset, init: frozenset) -> bool:
    for cond in conditions:
        if isinstance(cond, PropCondition) and cond.atom.predicate in static:
            if (cond.atom in init) != cond.positive:
                return True
    return False


def _attachments(d: Domain, effects) -> tuple:
    pairs = []
    for eff in effects:
        if (
            isinstance(eff, NumericEffect)
            and eff.op == 'increase'
            and isinstance(eff.value, FluentTerm)
            and eff.value.name in d.indirect_functions
        ):
            pairs.append((eff.target.name, eff.value.name))
    return tuple(pairs)


def ground(d: Domain, p: Problem) -> list:
    """Instantiate every action over its typed objects, dropping statically impossible ones."""
    grounded = []
    for action in d.actions:
        names = [v for v, _ in action.parameters]
        choices = [objects_of_type(d, p, t) for _, t in action.parameters]
        for combo in itertools.product(*choices):
            binding = dict(zip(names, combo))
            by_time = {'start': [], 'all': [], 'end': []}
            for timed in action.conditions:
                by_time[timed.when].append(_bind(timed.item, binding))
            conditions = by_time['start'] + by_time['all'] + by_time['end']
            if _statically_false(conditions, d.static_predicates, p.init_propositions):
                continue
            start_effects = tuple(_bind(t.item, binding) for t in action.effects if t.when == 'start')
            end_effects = tuple(_bind(t.item, binding) for t in action.effects if t.when == 'end')
            grounded.append(GroundedAction(
                name=action.name,
                args=tuple(combo),
                duration=action.duration,
                start_conditions=tuple(by_time['start']),
                overall_conditions=tuple(by_time['all']),
                end_conditions=tuple(by_time['end']),
                start_effects=start_effects,
                end_effects=end_effects,
                attachments=_attachments(d, start_effects + end_effects),
            ))
    return grounded


# ===== STATES =====

def initial_state(d: Domain, p: Problem) -> TaskState:
    fluents = {}
    for name, params in d.functions:
        choices = [objects_of_type(d, p, t) for _, t in params]
        for combo in itertools.product(*choices):
            fluents[FluentTerm(name, tuple(combo))] = 0.0
    for term, value in p.init_fluents:
        fluents[term] = float(value)
    return TaskState(frozenset(p.init_propositions), fluents)


def evaluate(expr, s: TaskState, values: dict | None = None) -> float:
    if isinstance(expr, (int, float)):
        return float(expr)
    if isinstance(expr, FluentTerm):
        if values is not None and not expr.args and expr.name in values:
            return float(values[expr.name])
        if expr not in s.fluents:
            raise TaskError(f"undefined fluent {expr}")
        return s.fluents[expr]
    if isinstance(expr, BinaryExpr):
        left = evaluate(expr.left, s, values)
        right = evaluate(expr.right, s, values)
        if expr.op == '+':
            return left + right
        if expr.op == '-':
            return left - right
        if expr.op == '*':
            return left * right
        if right == 0.0:
            raise TaskError("division by zero in expression")
        return left / right
    raise TaskError(f"cannot evaluate {expr!r}")


def holds(cond, s: TaskState) -> bool:
    if isinstance(cond, PropCondition):
        return (cond.atom in s.propositions) == cond.positive
    return COMPARATORS[cond.op](evaluate(cond.left, s), evaluate(cond.right, s))


def applicable(s: TaskState, a: GroundedAction) -> bool:
    return all(holds(c, s) for c in a.start_conditions + a.overall_conditions)


def end_conditions_hold(s_mid: TaskState, a: GroundedAction) -> bool:
    return all(holds(c, s_mid) for c in a.end_conditions)


def _apply_effects(s: TaskState, effects, values: dict | None) -> TaskState:
    propositions = set(s.propositions)
    for eff in effects:
        if isinstance(eff, DeleteEffect):
            propositions.discard(eff.atom)
    for eff in effects:
        if isinstance(eff, AddEffect):
            propositions.add(eff.atom)

    fluents = dict(s.fluents)
    for eff in effects:
        if not isinstance(eff, NumericEffect):
            continue
        if eff.target not in fluents:
            raise TaskError(f"effect writes undefined fluent {eff.target}")
        amount = evaluate(eff.value, s, values)
        if eff.op == 'increase':
            fluents[eff.target] += amount
        elif eff.op == 'decrease':
            fluents[eff.target] -= amount
        else:
            fluents[eff.target] = amount
    return TaskState(frozenset(propositions), fluents)


def apply_start(s: TaskState, a: GroundedAction, attachment_values: dict | None = None) -> TaskState:
    if not applicable(s, a):
        raise TaskError(f"{a.signature} is not applicable")
    return _apply_effects(s, a.start_effects, attachment_values)


def apply_end(s_mid: TaskState, a: GroundedAction, attachment_values: dict | None = None) -> TaskState:
    values = dict(attachment_values or {})
    missing = sorted({v_ind for _, v_ind in a.attachments if v_ind not in values})
    if missing:
        raise TaskError(f"{a.signature}: missing attachment value for {', '.join(missing)}")
    if not end_conditions_hold(s_mid, a):
        raise TaskError(f"{a.signature}: end conditions do not hold")

    s_end = _apply_effects(s_mid, a.end_effects, values)
    # keep the latest externally computed values visible for reporting
    fluents = dict(s_end.fluents)
    for _, v_ind in a.attachments:
        term = FluentTerm(v_ind)
        if term in fluents:
            fluents[term] = float(values[v_ind])
    return TaskState(s_end.propositions, fluents)


def apply(s: TaskState, a: GroundedAction, attachment_values: dict | None = None) -> TaskState:
    """Start then end effects in one step (sequential execution)."""
    return apply_end(apply_start(s, a, attachment_values), a, attachment_values)


def goal_satisfied(p: Problem, s: TaskState) -> bool:
    return all(holds(c, s) for c in p.goal)


def metric_value(p: Problem, s: TaskState) -> float:
    if p.metric is None:
        return 0.0
    return evaluate(p.metric, s)


def metric_functions(p: Problem) -> frozenset:
    names = set()

    def collect(expr):
        if isinstance(expr, FluentTerm):
            names.add(expr.name)
        elif isinstance(expr, BinaryExpr):
            collect(expr.left)
            collect(expr.right)

    collect(p.metric)
    return frozenset(names)


def trigger_of(s_before: TaskState, s_mid: TaskState) -> FluentTerm | None:
    """Fluent that an action's start effects raised from 0 to a positive value."""
    for term in sorted(s_mid.fluents):
        if term.args and s_before.fluents.get(term, 0.0) == 0.0 and s_mid.fluents[term] > 0.0:
            return term
    return None


# ===== PRETTY PRINTING =====

def _num(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def format_expression(expr) -> str:
    if isinstance(expr, (int, float)):
        return _num(expr)
    if isinstance(expr, FluentTerm):
        return str(expr)
    return f"({expr.op} {format_expression(expr.left)} {format_expression(expr.right)})"


def format_condition(cond) -> str:
    if isinstance(cond, PropCondition):
        return str(cond.atom) if cond.positive else f"(not {cond.atom})"
    return f"({cond.op} {format_expression(cond.left)} {format_expression(cond.right)})"


def format_effect(eff) -> str:
    if isinstance(eff, AddEffect):
        return str(eff.atom)
    if isinstance(eff, DeleteEffect):
        return f"(not {eff.atom})"
    return f"({eff.op} {eff.target} {format_expression(eff.value)})"


def _conjunction(parts) -> str:
    return f"(and {' '.join(parts)})" if parts else "(and)"


def _format_typed(pairs) -> str:
    return ' '.join(f"{name} - {type_name}" for name, type_name in pairs)


def format_domain(d: Domain) -> str:
    lines = [f"(define (domain {d.name})"]
    if d.requirements:
        lines.append(f"  (:requirements {' '.join(d.requirements)})")
    if d.types:
        lines.append(f"  (:types {_format_typed(d.types)})")
    for keyword, declarations in ((':predicates', d.predicates), (':functions', d.functions)):
        if not declarations:
            continue
        lines.append(f"  ({keyword}")
        for name, params in declarations:
            inner = f" {_format_typed(params)}" if params else ""
            lines.append(f"    ({name}{inner})")
        lines[-1] += ")"
    for action in d.actions:
        conditions = [f"({TIMING_WORDS[t.when]} {format_condition(t.item)})" for t in action.conditions]
        effects = [f"({TIMING_WORDS[t.when]} {format_effect(t.item)})" for t in action.effects]
        lines.append(f"  (:durative-action {action.name}")
        lines.append(f"    :parameters ({_format_typed(action.parameters)})")
        lines.append(f"    :duration (= ?duration {_num(action.duration)})")
        lines.append(f"    :condition {_conjunction(conditions)}")
        lines.append(f"    :effect {_conjunction(effects)})")
    lines.append(")")
    return '\n'.join(lines) + '\n'


def format_problem(p: Problem) -> str:
    lines = [f"; @{key} {json.dumps(value, sort_keys=True)}" for key, value in sorted(p.metadata.items())]
    lines.append(f"(define (problem {p.name})")
    lines.append(f"  (:domain {p.domain_name})")
    if p.objects:
        lines.append(f"  (:objects {_format_typed(p.objects)})")
    init = [str(atom) for atom in sorted(p.init_propositions)]
    init.extend(f"(= {term} {_num(value)})" for term, value in p.init_fluents)
    lines.append(f"  (:init {' '.join(init)})")
    lines.append(f"  (:goal {_conjunction([format_condition(c) for c in p.goal])})")
    if p.metric is not None:
        lines.append(f"  (:metric minimize {format_expression(p.metric)})")
    lines.append(")")
    return '\n'.join(lines) + '\n'
