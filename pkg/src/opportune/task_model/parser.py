"""Recursive-descent parser for the supported PDDL subset and plan text.

Anything outside the subset (ADL conditionals, continuous effects, derived
predicates, plain :action blocks, ...) is a parse error carrying the source
position, never silently skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

from opportune.errors import PddlParseError, TaskError
from opportune.task_model.model import (
    ActionSchema,
    Atom,
    Domain,
    Expr,
    Instance,
    Literal,
    NumericEffect,
    Plan,
    PlanStep,
    PlanningTask,
    PredicateSchema,
    ROOT_TYPE,
    TimedCondition,
    TimedEffect,
    TypeExpr,
    TypeHierarchy,
    type_compatible,
)

SUPPORTED_REQUIREMENTS = {
    ":strips",
    ":typing",
    ":fluents",
    ":numeric-fluents",
    ":durative-actions",
    ":duration-inequalities",
    ":timed-initial-literals",
    ":equality",
}

ARITH_OPS = {"+", "-", "*", "/"}


@dataclass(frozen=True)
class SAtom:
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class SList:
    items: tuple
    line: int
    col: int


def _tokenize(text: str):
    """Yield (token, line, col); tokens are parens or bare symbols."""
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield ch, line, col
            col += 1
            i += 1
        else:
            start, start_col = i, col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            yield text[start:i], line, start_col


def _read(text: str) -> list:
    """Parse text into a list of top-level s-expressions."""
    stack: list[list] = [[]]
    positions: list[tuple[int, int]] = []
    last_line, last_col = 1, 1
    for token, line, col in _tokenize(text):
        last_line, last_col = line, col
        if token == "(":
            stack.append([])
            positions.append((line, col))
        elif token == ")":
            if len(stack) == 1:
                raise PddlParseError("unbalanced ')'", line, col)
            items = stack.pop()
            pline, pcol = positions.pop()
            stack[-1].append(SList(tuple(items), pline, pcol))
        else:
            stack[-1].append(SAtom(token, line, col))
    if len(stack) != 1:
        line, col = positions[-1]
        raise PddlParseError("unclosed '('", line, col)
    if not stack[0]:
        raise PddlParseError("empty input", last_line, last_col)
    return stack[0]


def _err(node, message: str) -> PddlParseError:
    return PddlParseError(message, node.line, node.col)


def _expect_list(node, what: str) -> SList:
    if not isinstance(node, SList):
        raise _err(node, f"expected {what}, got {node.text!r}")
    return node


def _expect_atom(node, what: str) -> SAtom:
    if not isinstance(node, SAtom):
        raise _err(node, f"expected {what}")
    return node


def _keyword(node) -> str | None:
    if isinstance(node, SList) and node.items and isinstance(node.items[0], SAtom):
        return node.items[0].text.lower()
    return None


def _parse_number(tok: SAtom):
    try:
        value = float(tok.text)
    except ValueError:
        raise _err(tok, f"expected a number, got {tok.text!r}") from None
    return int(value) if value.is_integer() else value


def _parse_typed_list(items, *, variables: bool, node) -> list[tuple[str, TypeExpr]]:
    """Parse ``x y - type z - (either a b)`` lists; untyped trailers get the root type."""
    out: list[tuple[str, TypeExpr]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        item = items[i]
        if isinstance(item, SAtom) and item.text == "-":
            if not pending:
                raise _err(item, "'-' without preceding names")
            i += 1
            if i >= len(items):
                raise _err(item, "'-' without a following type")
            texpr = _parse_type_expr(items[i])
            out.extend((name, texpr) for name in pending)
            pending = []
            i += 1
        else:
            tok = _expect_atom(item, "a name")
            if variables and not tok.text.startswith("?"):
                raise _err(tok, f"expected a variable (got {tok.text!r})")
            if not variables and tok.text.startswith("?"):
                raise _err(tok, f"unexpected variable {tok.text!r}")
            pending.append(tok.text)
            i += 1
    out.extend((name, (ROOT_TYPE,)) for name in pending)
    return out


def _parse_type_expr(node) -> TypeExpr:
    if isinstance(node, SAtom):
        return (node.text,)
    head = _keyword(node)
    if head != "either":
        raise _err(node, "expected a type name or (either ...)")
    if len(node.items) < 2:
        raise _err(node, "(either ...) needs at least one type")
    return tuple(_expect_atom(t, "a type name").text for t in node.items[1:])


def _parse_expr(node, *, allow_vars: bool) -> Expr:
    if isinstance(node, SAtom):
        if node.text.startswith("?"):
            raise _err(node, "bare variable is not a numeric expression")
        return ("num", _parse_number(node))
    if not node.items:
        raise _err(node, "empty expression")
    head = _expect_atom(node.items[0], "an operator or function name")
    if head.text in ARITH_OPS:
        if len(node.items) != 3:
            raise _err(node, f"operator {head.text!r} takes exactly two operands")
        return (
            head.text,
            _parse_expr(node.items[1], allow_vars=allow_vars),
            _parse_expr(node.items[2], allow_vars=allow_vars),
        )
    if head.text.lower() == "total-time":
        if len(node.items) != 1:
            raise _err(node, "(total-time) takes no arguments")
        return ("total-time",)
    args = []
    for arg in node.items[1:]:
        tok = _expect_atom(arg, "a fluent argument")
        if tok.text.startswith("?") and not allow_vars:
            raise _err(tok, "variables are not allowed here")
        args.append(tok.text)
    return ("fluent", head.text, *args)


def _parse_literal(node) -> Literal:
    lst = _expect_list(node, "a literal")
    if not lst.items:
        raise _err(lst, "empty literal")
    head = _expect_atom(lst.items[0], "a predicate name")
    if head.text.lower() == "not":
        if len(lst.items) != 2:
            raise _err(lst, "(not ...) takes exactly one literal")
        inner = _parse_literal(lst.items[1])
        if not inner.positive:
            raise _err(lst, "double negation is not supported")
        return inner.negated()
    args = tuple(_expect_atom(a, "an argument").text for a in lst.items[1:])
    return Literal((head.text, *args))


class _DomainParser:
    def __init__(self, root: SList):
        self.root = root
        self.requirements: tuple[str, ...] = ()
        self.types = TypeHierarchy()
        self.predicates: dict[str, PredicateSchema] = {}
        self.functions: dict[str, PredicateSchema] = {}
        self.actions: dict[str, ActionSchema] = {}

    def parse(self) -> Domain:
        items = self.root.items
        if len(items) < 2 or _keyword(items[1]) != "domain":
            raise _err(self.root, "expected (define (domain NAME) ...)")
        name = _expect_atom(items[1].items[1], "a domain name").text
        handlers = {
            ":requirements": self._parse_requirements,
            ":types": self._parse_types,
            ":predicates": self._parse_predicates,
            ":functions": self._parse_functions,
            ":durative-action": self._parse_action,
        }
        for block in items[2:]:
            lst = _expect_list(block, "a domain block")
            head = _keyword(lst)
            if head not in handlers:
                raise _err(lst, f"unsupported domain construct {head!r}")
            handlers[head](lst)
        return Domain(
            name=name,
            requirements=self.requirements,
            types=self.types,
            predicates=self.predicates,
            functions=self.functions,
            actions=self.actions,
        )

    def _parse_requirements(self, node: SList):
        reqs = []
        for item in node.items[1:]:
            tok = _expect_atom(item, "a requirement flag")
            if tok.text.lower() not in SUPPORTED_REQUIREMENTS:
                raise _err(tok, f"unsupported requirement {tok.text!r}")
            reqs.append(tok.text.lower())
        self.requirements = tuple(reqs)

    def _parse_types(self, node: SList):
        entries = _parse_typed_list(node.items[1:], variables=False, node=node)
        declared: dict[str, str] = {}
        for name, texpr in entries:
            if len(texpr) != 1:
                raise _err(node, "type declarations cannot use (either ...)")
            if name == ROOT_TYPE:
                raise _err(node, f"the root type {ROOT_TYPE!r} cannot be redeclared")
            if name in declared or name in self.types:
                raise _err(node, f"duplicate type declaration {name!r}")
            declared[name] = texpr[0]
        # a name used only as a parent is implicitly a type under the root
        for parent in list(declared.values()):
            if parent not in declared and parent not in self.types:
                declared[parent] = ROOT_TYPE
        try:
            self.types = TypeHierarchy({**self.types.entries, **declared})
        except TaskError as exc:
            raise _err(node, str(exc)) from None

    def _check_param_types(self, params, node):
        for _, texpr in params:
            for member in texpr:
                if member not in self.types:
                    raise _err(node, f"undeclared type {member!r}")

    def _parse_predicates(self, node: SList):
        for decl in node.items[1:]:
            lst = _expect_list(decl, "a predicate declaration")
            if not lst.items:
                raise _err(lst, "empty predicate declaration")
            name = _expect_atom(lst.items[0], "a predicate name").text
            if name in self.predicates:
                raise _err(lst, f"duplicate predicate {name!r}")
            params = tuple(_parse_typed_list(lst.items[1:], variables=True, node=lst))
            self._check_param_types(params, lst)
            self.predicates[name] = PredicateSchema(name, params)

    def _parse_functions(self, node: SList):
        items = list(node.items[1:])
        i = 0
        while i < len(items):
            lst = _expect_list(items[i], "a function declaration")
            name = _expect_atom(lst.items[0], "a function name").text
            if name in self.functions:
                raise _err(lst, f"duplicate function {name!r}")
            params = tuple(_parse_typed_list(lst.items[1:], variables=True, node=lst))
            self._check_param_types(params, lst)
            self.functions[name] = PredicateSchema(name, params)
            i += 1
            # tolerate the standard "- number" return-type suffix
            if i < len(items) and isinstance(items[i], SAtom) and items[i].text == "-":
                suffix = _expect_atom(items[i + 1], "a function return type")
                if suffix.text.lower() != "number":
                    raise _err(suffix, "functions may only be numeric")
                i += 2

    def _parse_action(self, node: SList):
        items = node.items
        name = _expect_atom(items[1], "an action name").text
        if name in self.actions:
            raise _err(node, f"duplicate action {name!r}")
        sections: dict[str, object] = {}
        i = 2
        while i < len(items):
            key = _expect_atom(items[i], "an action section keyword").text.lower()
            if key not in (":parameters", ":duration", ":condition", ":effect"):
                raise _err(items[i], f"unsupported action section {key!r}")
            if i + 1 >= len(items):
                raise _err(items[i], f"missing value for {key}")
            sections[key] = items[i + 1]
            i += 2
        for key in (":parameters", ":duration", ":condition", ":effect"):
            if key not in sections:
                raise _err(node, f"durative-action {name!r} lacks {key}")

        params_node = _expect_list(sections[":parameters"], "a parameter list")
        params = tuple(_parse_typed_list(params_node.items, variables=True, node=params_node))
        self._check_param_types(params, params_node)
        param_types = dict(params)

        duration = self._parse_duration(sections[":duration"])
        conditions = self._parse_conditions(sections[":condition"], name, param_types)
        effects, numeric = self._parse_effects(sections[":effect"], name, param_types)
        self.actions[name] = ActionSchema(
            name=name,
            params=params,
            duration=duration,
            conditions=conditions,
            effects=effects,
            numeric_effects=numeric,
        )

    def _parse_duration(self, node) -> Expr:
        lst = _expect_list(node, "(= ?duration EXPR)")
        if (
            len(lst.items) != 3
            or not isinstance(lst.items[0], SAtom)
            or lst.items[0].text != "="
            or not isinstance(lst.items[1], SAtom)
            or lst.items[1].text.lower() != "?duration"
        ):
            raise _err(lst, "duration must have the form (= ?duration EXPR)")
        return _parse_expr(lst.items[2], allow_vars=True)

    def _check_schema_literal(self, literal: Literal, param_types, node):
        pred = self.predicates.get(literal.atom[0])
        if pred is None:
            raise _err(node, f"unknown predicate {literal.atom[0]!r}")
        if len(literal.atom) - 1 != pred.arity:
            raise _err(node, f"predicate {literal.atom[0]!r} expects {pred.arity} arguments")
        for arg, (_, texpr) in zip(literal.atom[1:], pred.params):
            if not arg.startswith("?"):
                raise _err(node, f"constants in action literals are not supported ({arg!r})")
            if arg not in param_types:
                raise _err(node, f"unbound variable {arg!r}")
            var_type = param_types[arg]
            ok = any(
                type_compatible(vt, texpr, self.types) for vt in var_type
            )
            if not ok:
                raise _err(
                    node,
                    f"variable {arg!r} of type {'/'.join(var_type)} is not compatible "
                    f"with predicate {literal.atom[0]!r}",
                )

    def _parse_conditions(self, node, action: str, param_types) -> tuple[TimedCondition, ...]:
        out = []
        for part in self._flatten_and(node):
            lst = _expect_list(part, "(at start ...) or (over all ...)")
            tag = self._timing_tag(lst, {("at", "start"): "start", ("over", "all"): "overall"})
            literal = _parse_literal(lst.items[2])
            self._check_schema_literal(literal, param_types, lst)
            out.append(TimedCondition(tag, literal))
        return tuple(out)

    def _parse_effects(self, node, action: str, param_types):
        effects: list[TimedEffect] = []
        numeric: list[NumericEffect] = []
        for part in self._flatten_and(node):
            lst = _expect_list(part, "(at start ...) or (at end ...)")
            tag = self._timing_tag(lst, {("at", "start"): "start", ("at", "end"): "end"})
            payload = _expect_list(lst.items[2], "an effect")
            head = _keyword(payload)
            if head in ("increase", "decrease", "assign"):
                if len(payload.items) != 3:
                    raise _err(payload, f"({head} ...) takes a fluent and an expression")
                fluent = _parse_expr(payload.items[1], allow_vars=True)
                if fluent[0] != "fluent":
                    raise _err(payload, f"({head} ...) target must be a fluent")
                if fluent[1] not in self.functions:
                    raise _err(payload, f"unknown function {fluent[1]!r}")
                numeric.append(
                    NumericEffect(tag, head, fluent, _parse_expr(payload.items[2], allow_vars=True))
                )
            else:
                literal = _parse_literal(payload)
                self._check_schema_literal(literal, param_types, lst)
                effects.append(TimedEffect(tag, literal))
        return tuple(effects), tuple(numeric)

    @staticmethod
    def _flatten_and(node):
        lst = _expect_list(node, "a condition or effect")
        if _keyword(lst) == "and":
            return lst.items[1:]
        return [lst]

    @staticmethod
    def _timing_tag(lst: SList, mapping) -> str:
        if len(lst.items) != 3:
            raise _err(lst, "expected (at start X), (over all X) or (at end X)")
        first = _expect_atom(lst.items[0], "a timing keyword").text.lower()
        second = _expect_atom(lst.items[1], "a timing keyword").text.lower()
        tag = mapping.get((first, second))
        if tag is None:
            expected = " or ".join(f"({a} {b})" for a, b in mapping)
            raise _err(lst, f"expected timing {expected}, got ({first} {second})")
        return tag


class _ProblemParser:
    def __init__(self, root: SList, domain: Domain):
        self.root = root
        self.domain = domain
        self.objects: dict[str, str] = {}
        self.init_atoms: set[Atom] = set()
        self.fluents: dict[tuple, float] = {}
        self.timed: list[tuple[int, Literal]] = []
        self.goals: set[Atom] = set()
        self.metric: tuple[str, Expr] | None = None

    def parse(self) -> Instance:
        items = self.root.items
        if len(items) < 2 or _keyword(items[1]) != "problem":
            raise _err(self.root, "expected (define (problem NAME) ...)")
        name = _expect_atom(items[1].items[1], "a problem name").text
        domain_name = None
        handlers = {
            ":domain": self._parse_domain_ref,
            ":objects": self._parse_objects,
            ":init": self._parse_init,
            ":goal": self._parse_goal,
            ":metric": self._parse_metric,
        }
        for block in items[2:]:
            lst = _expect_list(block, "a problem block")
            head = _keyword(lst)
            if head not in handlers:
                raise _err(lst, f"unsupported problem construct {head!r}")
            result = handlers[head](lst)
            if head == ":domain":
                domain_name = result
        if domain_name is None:
            raise _err(self.root, "problem lacks a (:domain ...) block")
        instance = Instance(
            name=name,
            domain_name=domain_name,
            objects=self.objects,
            init_atoms=frozenset(self.init_atoms),
            fluents=self.fluents,
            timed_literals=tuple(
                sorted(self.timed, key=lambda tl: (tl[0], tl[1].atom, not tl[1].positive))
            ),
            goals=frozenset(self.goals),
            metric=self.metric,
        )
        self._validate(instance)
        return instance

    def _parse_domain_ref(self, node: SList) -> str:
        ref = _expect_atom(node.items[1], "a domain name").text
        if ref != self.domain.name:
            raise _err(node, f"problem references domain {ref!r}, expected {self.domain.name!r}")
        return ref

    def _parse_objects(self, node: SList):
        for name, texpr in _parse_typed_list(node.items[1:], variables=False, node=node):
            if len(texpr) != 1:
                raise _err(node, "objects cannot have (either ...) types")
            if texpr[0] not in self.domain.types:
                raise _err(node, f"object {name!r} has undeclared type {texpr[0]!r}")
            if name in self.objects:
                raise _err(node, f"duplicate object {name!r}")
            self.objects[name] = texpr[0]

    def _parse_init(self, node: SList):
        for entry in node.items[1:]:
            lst = _expect_list(entry, "an init entry")
            head = _keyword(lst)
            if head == "=":
                if len(lst.items) != 3:
                    raise _err(lst, "fluent assignment must be (= (f args) VALUE)")
                fluent = _parse_expr(lst.items[1], allow_vars=False)
                if fluent[0] != "fluent":
                    raise _err(lst, "assignment target must be a fluent")
                value = _parse_number(_expect_atom(lst.items[2], "a number"))
                self.fluents[tuple(fluent[1:])] = value
            elif head == "at" and len(lst.items) == 3 and isinstance(lst.items[1], SAtom) \
                    and not lst.items[1].text.startswith("?") \
                    and lst.items[1].text.replace(".", "", 1).lstrip("-").isdigit():
                time = _parse_number(lst.items[1])
                if not isinstance(time, int):
                    raise _err(lst, "timed initial literal times must be whole minutes")
                if time < 0:
                    raise _err(lst, "timed initial literal times must be non-negative")
                self.timed.append((time, _parse_literal(lst.items[2])))
            else:
                literal = _parse_literal(lst)
                if not literal.positive:
                    raise _err(lst, "negative init atoms are implied by the closed world")
                self.init_atoms.add(literal.atom)

    def _parse_goal(self, node: SList):
        if len(node.items) != 2:
            raise _err(node, "goal must be a single literal or (and ...)")
        for part in _DomainParser._flatten_and(node.items[1]):
            literal = _parse_literal(part)
            if not literal.positive:
                raise _err(node, "negative goals are not supported")
            self.goals.add(literal.atom)

    def _parse_metric(self, node: SList):
        if len(node.items) != 3:
            raise _err(node, "metric must be (:metric minimize|maximize EXPR)")
        direction = _expect_atom(node.items[1], "minimize or maximize").text.lower()
        if direction not in ("minimize", "maximize"):
            raise _err(node, f"unknown metric direction {direction!r}")
        self.metric = (direction, _parse_expr(node.items[2], allow_vars=False))

    def _validate(self, instance: Instance):
        task = PlanningTask(self.domain, instance)
        for atom in sorted(instance.init_atoms):
            task.validate_atom(atom)
        for key in instance.fluents:
            if key[0] not in self.domain.functions:
                raise TaskError(f"unknown function {key[0]!r} in init")
        for _, literal in instance.timed_literals:
            task.validate_atom(literal.atom)
        for atom in sorted(instance.goals):
            task.validate_atom(atom)
        t_start, t_end = instance.horizon
        for time, _ in instance.timed_literals:
            if time < t_start or (t_end is not None and time > t_end):
                raise TaskError(f"timed literal at {time} falls outside the horizon")


def parse_domain(text: str) -> Domain:
    """Parse PDDL domain text; raises PddlParseError with position on any defect."""
    forms = _read(text)
    if len(forms) != 1 or _keyword(forms[0]) != "define":
        node = forms[0]
        raise PddlParseError("expected a single (define ...) form", node.line, node.col)
    return _DomainParser(forms[0]).parse()


def parse_problem(text: str, domain: Domain) -> Instance:
    """Parse PDDL problem text and validate it against ``domain``."""
    forms = _read(text)
    if len(forms) != 1 or _keyword(forms[0]) != "define":
        node = forms[0]
        raise PddlParseError("expected a single (define ...) form", node.line, node.col)
    return _ProblemParser(forms[0], domain).parse()


def parse_task(domain_text: str, problem_text: str) -> PlanningTask:
    domain = parse_domain(domain_text)
    return PlanningTask(domain, parse_problem(problem_text, domain))


def parse_plan(text: str) -> Plan:
    """Parse plan text: one ``<start>: (<action> <args>) [<duration>]`` per line."""
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";")[0].strip()
        if not line:
            continue
        try:
            time_part, rest = line.split(":", 1)
            start = _to_minutes(time_part.strip())
            rest = rest.strip()
            if not rest.startswith("(") or "[" not in rest:
                raise ValueError
            action_part, dur_part = rest.rsplit("[", 1)
            action_part = action_part.strip()
            if not (action_part.startswith("(") and action_part.endswith(")")):
                raise ValueError
            tokens = action_part[1:-1].split()
            if not tokens:
                raise ValueError
            duration = _to_minutes(dur_part.rstrip("]").strip())
        except ValueError:
            raise PddlParseError(f"malformed plan step {line!r}", lineno, 1) from None
        steps.append(PlanStep(start, tokens[0], tuple(tokens[1:]), duration))
    steps.sort(key=lambda s: s.start)
    return Plan(tuple(steps))


def _to_minutes(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"non-integral minutes {text!r}")
    return int(value)


def parse_atom(text: str) -> Atom:
    """Parse a ground atom written as ``(pred arg1 arg2)``."""
    stripped = text.strip()
    if not (stripped.startswith("(") and stripped.endswith(")")):
        raise PddlParseError(f"malformed atom {text!r}")
    tokens = stripped[1:-1].split()
    if not tokens or any(t in "()" for t in tokens):
        raise PddlParseError(f"malformed atom {text!r}")
    return tuple(tokens)
