"""
Parser for the STRIPS subset of PDDL used by the task planner.

Supported: `(:requirements ...)`, `(:types ...)` with `- parent` typing,
`(:predicates ...)`, `(:action ...)` with `:parameters`, `:precondition` and
`:effect` built from `and`, `not` and predicate atoms. Problems support
`(:domain ...)`, `(:objects ...)`, `(:init ...)`, a positive conjunctive
`(:goal ...)` and a `(:feasibility p1 p2 ...)` block naming predicates that the
grounder treats as always true.

Lexing is done with pyparsing so every error carries a line and column.
Symbols are case-insensitive and are lowercased on read.
"""

import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import pyparsing as pp


class PddlError(Exception):
    """Base exception for PDDL parsing and grounding."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class PddlSyntaxError(PddlError):
    pass


class UndeclaredSymbolError(PddlError):
    pass


class ArityError(PddlError):
    pass


class TypeMismatchError(PddlError):
    pass


class StateSpaceOverflowError(PddlError):
    pass


class GoalUnreachableError(PddlError):
    pass


ROOT_TYPE = "object"

_SYMBOL_RE = re.compile(r"[A-Za-z0-9_?:][A-Za-z0-9_\-?:.]*")

_TOKEN = (
    pp.Literal("(")
    | pp.Literal(")")
    | pp.Regex(_SYMBOL_RE.pattern)
    | pp.Literal("-")
    | pp.Regex(r"\S")
)
_TOKEN.ignore(pp.Regex(r";.*"))


class Symbol(str):
    """A lowercased token that remembers where it was read."""

    line: int = 0
    column: int = 0

    def __new__(cls, text: str, line: int = 0, column: int = 0):
        obj = super().__new__(cls, text.lower())
        obj.line = line
        obj.column = column
        return obj


class SExpr(list):
    def __init__(self, line: int = 0, column: int = 0):
        super().__init__()
        self.line = line
        self.column = column

    @property
    def head(self) -> Optional[Symbol]:
        if self and isinstance(self[0], Symbol):
            return self[0]
        return None


def read_sexpr(text: str) -> SExpr:
    """Read exactly one top-level s-expression."""
    root = SExpr(1, 1)
    stack = [root]
    for tokens, start, _end in _TOKEN.scan_string(text):
        token = tokens[0]
        line, column = pp.lineno(start, text), pp.col(start, text)
        if token == "(":
            node = SExpr(line, column)
            stack[-1].append(node)
            stack.append(node)
        elif token == ")":
            if len(stack) == 1:
                raise PddlSyntaxError("Unbalanced ')'", line, column)
            stack.pop()
        elif token == "-" or _SYMBOL_RE.fullmatch(token):
            stack[-1].append(Symbol(token, line, column))
        else:
            raise PddlSyntaxError(f"Unexpected character '{token}'", line, column)

    if len(stack) > 1:
        raise PddlSyntaxError("Unclosed '('", stack[-1].line, stack[-1].column)
    if len(root) != 1 or not isinstance(root[0], SExpr):
        raise PddlSyntaxError("Expected a single (define ...) form", 1, 1)
    return root[0]


@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: Tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"({' '.join((self.predicate,) + self.args)})"

    def substitute(self, binding: Dict[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


@dataclass(frozen=True)
class Literal:
    atom: Atom
    positive: bool = True

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"(not {self.atom})"


@dataclass(frozen=True)
class TypedName:
    name: str
    type: str = ROOT_TYPE


@dataclass(frozen=True)
class Predicate:
    name: str
    parameters: Tuple[TypedName, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.parameters)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: Tuple[TypedName, ...] = ()
    precondition: Tuple[Literal, ...] = ()
    effect: Tuple[Literal, ...] = ()

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    @property
    def add_effects(self) -> Tuple[Atom, ...]:
        return tuple(l.atom for l in self.effect if l.positive)

    @property
    def del_effects(self) -> Tuple[Atom, ...]:
        return tuple(l.atom for l in self.effect if not l.positive)


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: Tuple[str, ...] = ()
    types: Tuple[str, ...] = ()
    type_parents: Dict[str, str] = field(default_factory=dict)
    predicates: Tuple[Predicate, ...] = ()
    actions: Tuple[ActionSchema, ...] = ()

    def predicate(self, name: str) -> Optional[Predicate]:
        return next((p for p in self.predicates if p.name == name), None)

    def action(self, name: str) -> Optional[ActionSchema]:
        return next((a for a in self.actions if a.name == name), None)

    def is_subtype(self, child: str, parent: str) -> bool:
        seen = set()
        current = child
        while current not in seen:
            if current == parent:
                return True
            seen.add(current)
            if current == ROOT_TYPE:
                break
            current = self.type_parents.get(current, ROOT_TYPE)
        return parent == ROOT_TYPE


@dataclass(frozen=True)
class Problem:
    name: str
    domain: str
    objects: Tuple[TypedName, ...] = ()
    init: frozenset = frozenset()
    goal: frozenset = frozenset()
    feasibility: Tuple[str, ...] = ()

    def object_type(self, name: str) -> Optional[str]:
        return next((o.type for o in self.objects if o.name == name), None)

    def objects_of_type(self, domain: Domain, type_name: str) -> List[str]:
        return sorted(o.name for o in self.objects if domain.is_subtype(o.type, type_name))


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _expect_symbol(item, what: str, parent: SExpr) -> Symbol:
    if not isinstance(item, Symbol):
        line = getattr(item, "line", parent.line)
        column = getattr(item, "column", parent.column)
        raise PddlSyntaxError(f"Expected {what}", line, column)
    return item


def _expect_list(item, what: str, parent: SExpr) -> SExpr:
    if not isinstance(item, SExpr):
        line = getattr(item, "line", parent.line)
        column = getattr(item, "column", parent.column)
        raise PddlSyntaxError(f"Expected {what}", line, column)
    return item


def _typed_list(items: Iterable, parent: SExpr) -> List[Tuple[Symbol, str]]:
    """Parse `a b - t c` into [(a, t), (b, t), (c, object)]."""
    result: List[Tuple[Symbol, str]] = []
    pending: List[Symbol] = []
    items = list(items)
    i = 0
    while i < len(items):
        item = _expect_symbol(items[i], "a name", parent)
        if item == "-":
            if i + 1 >= len(items) or not pending:
                raise PddlSyntaxError("Dangling '-' in typed list", item.line, item.column)
            type_name = _expect_symbol(items[i + 1], "a type name", parent)
            result.extend((name, str(type_name)) for name in pending)
            pending = []
            i += 2
            continue
        pending.append(item)
        i += 1
    result.extend((name, ROOT_TYPE) for name in pending)
    return result


def _header(expr: SExpr, keyword: str) -> Symbol:
    """Parse `(define (<keyword> NAME) ...)` and return NAME."""
    if expr.head != "define":
        raise PddlSyntaxError("Expected (define ...)", expr.line, expr.column)
    if len(expr) < 2:
        raise PddlSyntaxError(f"Expected ({keyword} <name>)", expr.line, expr.column)
    header = _expect_list(expr[1], f"({keyword} <name>)", expr)
    if header.head != keyword or len(header) != 2:
        raise PddlSyntaxError(f"Expected ({keyword} <name>)", header.line, header.column)
    return _expect_symbol(header[1], f"{keyword} name", header)


def _check_atom_types(
    domain: Domain,
    predicate: Predicate,
    args: List[Symbol],
    arg_types: List[str],
    where: SExpr,
):
    for arg, arg_type, param in zip(args, arg_types, predicate.parameters):
        if not domain.is_subtype(arg_type, param.type):
            raise TypeMismatchError(
                f"Argument '{arg}' of type '{arg_type}' does not match "
                f"'{param.type}' in predicate '{predicate.name}'",
                arg.line or where.line,
                arg.column or where.column,
            )


def _parse_atom(domain: Domain, expr: SExpr, resolve) -> Atom:
    """Parse `(p a1 a2)`; `resolve(symbol)` returns the argument's type."""
    name = _expect_symbol(expr.head if expr else None, "a predicate name", expr)
    predicate = domain.predicate(name)
    if predicate is None:
        raise UndeclaredSymbolError(f"Undeclared predicate '{name}'", name.line, name.column)
    args = [_expect_symbol(a, "an argument", expr) for a in expr[1:]]
    if len(args) != predicate.arity:
        raise ArityError(
            f"Predicate '{name}' expects {predicate.arity} argument(s), got {len(args)}",
            expr.line,
            expr.column,
        )
    arg_types = [resolve(a) for a in args]
    _check_atom_types(domain, predicate, args, arg_types, expr)
    return Atom(str(name), tuple(str(a) for a in args))


def _parse_literals(domain: Domain, expr: SExpr, resolve, allow_negative: bool = True) -> Tuple[Literal, ...]:
    if not expr:
        return ()
    head = expr.head
    if head == "and":
        literals: List[Literal] = []
        for child in expr[1:]:
            literals.extend(
                _parse_literals(domain, _expect_list(child, "a literal", expr), resolve, allow_negative)
            )
        return tuple(literals)
    if head == "not":
        if not allow_negative:
            raise PddlSyntaxError("Negative literals are not allowed here", expr.line, expr.column)
        if len(expr) != 2:
            raise PddlSyntaxError("(not ...) takes exactly one atom", expr.line, expr.column)
        inner = _expect_list(expr[1], "an atom", expr)
        return (Literal(_parse_atom(domain, inner, resolve), positive=False),)
    return (Literal(_parse_atom(domain, expr, resolve)),)


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


def _parse_action(domain: Domain, expr: SExpr) -> ActionSchema:
    if len(expr) < 2:
        raise PddlSyntaxError("Expected an action name", expr.line, expr.column)
    name = _expect_symbol(expr[1], "an action name", expr)

    parameters: Tuple[TypedName, ...] = ()
    precondition_expr: Optional[SExpr] = None
    effect_expr: Optional[SExpr] = None

    body = expr[2:]
    if len(body) % 2:
        raise PddlSyntaxError(f"Action '{name}' has a keyword without a value", expr.line, expr.column)
    for keyword, value in zip(body[0::2], body[1::2]):
        keyword = _expect_symbol(keyword, "an action keyword", expr)
        value = _expect_list(value, f"a list after {keyword}", expr)
        if keyword == ":parameters":
            parameters = tuple(TypedName(str(n), t) for n, t in _typed_list(value, value))
            for p in parameters:
                if not p.name.startswith("?"):
                    raise PddlSyntaxError(f"Parameter '{p.name}' must start with '?'", value.line, value.column)
                if p.type != ROOT_TYPE and p.type not in domain.types:
                    raise UndeclaredSymbolError(f"Undeclared type '{p.type}'", value.line, value.column)
        elif keyword == ":precondition":
            precondition_expr = value
        elif keyword == ":effect":
            effect_expr = value
        else:
            raise PddlSyntaxError(f"Unknown keyword '{keyword}'", keyword.line, keyword.column)

    variables = {p.name: p.type for p in parameters}

    def resolve(symbol: Symbol) -> str:
        if symbol not in variables:
            raise UndeclaredSymbolError(
                f"Variable '{symbol}' is not a parameter of action '{name}'",
                symbol.line,
                symbol.column,
            )
        return variables[symbol]

    precondition = _parse_literals(domain, precondition_expr, resolve) if precondition_expr is not None else ()
    effect = _parse_literals(domain, effect_expr, resolve) if effect_expr is not None else ()
    return ActionSchema(str(name), parameters, precondition, effect)


def parse_domain(text: str) -> Domain:
    expr = read_sexpr(text)
    name = _header(expr, "domain")

    requirements: Tuple[str, ...] = ()
    types: List[str] = []
    type_parents: Dict[str, str] = {}
    predicates: List[Predicate] = []
    action_exprs: List[SExpr] = []

    for section in expr[2:]:
        section = _expect_list(section, "a domain section", expr)
        keyword = _expect_symbol(section.head, "a section keyword", section)
        if keyword == ":requirements":
            requirements = tuple(str(_expect_symbol(r, "a requirement", section)) for r in section[1:])
        elif keyword == ":types":
            for type_name, parent in _typed_list(section[1:], section):
                types.append(str(type_name))
                if parent != ROOT_TYPE:
                    type_parents[str(type_name)] = parent
        elif keyword == ":predicates":
            for item in section[1:]:
                item = _expect_list(item, "a predicate declaration", section)
                pname = _expect_symbol(item.head, "a predicate name", item)
                params = tuple(TypedName(str(n), t) for n, t in _typed_list(item[1:], item))
                if any(p.name == pname for p in predicates):
                    raise PddlSyntaxError(f"Duplicate predicate '{pname}'", pname.line, pname.column)
                predicates.append(Predicate(str(pname), params))
        elif keyword == ":action":
            action_exprs.append(section)
        else:
            raise PddlSyntaxError(f"Unknown keyword '{keyword}'", keyword.line, keyword.column)

    for parent in type_parents.values():
        if parent != ROOT_TYPE and parent not in types:
            raise UndeclaredSymbolError(f"Undeclared parent type '{parent}'", expr.line, expr.column)

    domain = Domain(str(name), requirements, tuple(types), type_parents, tuple(predicates), ())
    actions: List[ActionSchema] = []
    for action_expr in action_exprs:
        action = _parse_action(domain, action_expr)
        if any(a.name == action.name for a in actions):
            raise PddlSyntaxError(f"Duplicate action '{action.name}'", action_expr.line, action_expr.column)
        actions.append(action)

    return Domain(str(name), requirements, tuple(types), type_parents, tuple(predicates), tuple(actions))


# ---------------------------------------------------------------------------
# Problem
# ---------------------------------------------------------------------------


def parse_problem(text: str, domain: Domain) -> Problem:
    expr = read_sexpr(text)
    name = _header(expr, "problem")

    domain_name = domain.name
    objects: List[TypedName] = []
    init_expr: Optional[SExpr] = None
    goal_expr: Optional[SExpr] = None
    feasibility: List[str] = []

    for section in expr[2:]:
        section = _expect_list(section, "a problem section", expr)
        keyword = _expect_symbol(section.head, "a section keyword", section)
        if keyword == ":domain":
            domain_name = str(_expect_symbol(section[1] if len(section) > 1 else None, "a domain name", section))
            if domain_name != domain.name:
                raise UndeclaredSymbolError(
                    f"Problem refers to domain '{domain_name}', expected '{domain.name}'",
                    section.line,
                    section.column,
                )
        elif keyword == ":objects":
            for obj, type_name in _typed_list(section[1:], section):
                if type_name != ROOT_TYPE and type_name not in domain.types:
                    raise UndeclaredSymbolError(f"Undeclared type '{type_name}'", obj.line, obj.column)
                if any(o.name == obj for o in objects):
                    raise PddlSyntaxError(f"Duplicate object '{obj}'", obj.line, obj.column)
                objects.append(TypedName(str(obj), type_name))
        elif keyword == ":init":
            init_expr = section
        elif keyword == ":goal":
            goal_expr = section
        elif keyword == ":feasibility":
            for item in section[1:]:
                pname = _expect_symbol(item, "a predicate name", section)
                if domain.predicate(pname) is None:
                    raise UndeclaredSymbolError(f"Undeclared predicate '{pname}'", pname.line, pname.column)
                feasibility.append(str(pname))
        else:
            raise PddlSyntaxError(f"Unknown keyword '{keyword}'", keyword.line, keyword.column)

    object_types = {o.name: o.type for o in objects}

    def resolve(symbol: Symbol) -> str:
        if symbol not in object_types:
            raise UndeclaredSymbolError(f"Undeclared object '{symbol}'", symbol.line, symbol.column)
        return object_types[symbol]

    init = set()
    if init_expr is not None:
        for item in init_expr[1:]:
            item = _expect_list(item, "a ground atom", init_expr)
            init.add(_parse_atom(domain, item, resolve))

    goal = set()
    if goal_expr is not None:
        if len(goal_expr) > 2:
            raise PddlSyntaxError("(:goal ...) takes a single formula", goal_expr.line, goal_expr.column)
        if len(goal_expr) == 2:
            formula = _expect_list(goal_expr[1], "a goal formula", goal_expr)
            goal = {l.atom for l in _parse_literals(domain, formula, resolve, allow_negative=False)}

    return Problem(
        str(name),
        domain_name,
        tuple(objects),
        frozenset(init),
        frozenset(goal),
        tuple(feasibility),
    )


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------


def _format_typed(names: Iterable[TypedName]) -> str:
    parts = []
    for item in names:
        parts.append(item.name if item.type == ROOT_TYPE else f"{item.name} - {item.type}")
    return " ".join(parts)


def _format_literals(literals: Tuple[Literal, ...]) -> str:
    if not literals:
        return "()"
    if len(literals) == 1:
        return str(literals[0])
    return "(and " + " ".join(str(l) for l in literals) + ")"


def format_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        typed = [TypedName(t, domain.type_parents.get(t, ROOT_TYPE)) for t in domain.types]
        lines.append(f"  (:types {_format_typed(typed)})")
    if domain.predicates:
        lines.append("  (:predicates")
        for predicate in domain.predicates:
            params = _format_typed(predicate.parameters)
            lines.append(f"    ({predicate.name}{' ' + params if params else ''})")
        lines.append("  )")
    for action in domain.actions:
        lines.append(f"  (:action {action.name}")
        lines.append(f"    :parameters ({_format_typed(action.parameters)})")
        lines.append(f"    :precondition {_format_literals(action.precondition)}")
        lines.append(f"    :effect {_format_literals(action.effect)}")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"


def format_problem(problem: Problem) -> str:
    lines = [f"(define (problem {problem.name})", f"  (:domain {problem.domain})"]
    if problem.objects:
        lines.append(f"  (:objects {_format_typed(problem.objects)})")
    lines.append("  (:init")
    for atom in sorted(problem.init):
        lines.append(f"    {atom}")
    lines.append("  )")
    goal = tuple(Literal(a) for a in sorted(problem.goal))
    lines.append(f"  (:goal {_format_literals(goal)})")
    if problem.feasibility:
        lines.append(f"  (:feasibility {' '.join(problem.feasibility)})")
    lines.append(")")
    return "\n".join(lines) + "\n"
