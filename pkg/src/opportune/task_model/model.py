"""Data model for planning tasks: typed objects, schemas, instances and plans.

All values are immutable; mutating operations (``add_type``, ``add_object``,
state extensions) return new values so that concurrent planner evaluations
can share snapshots safely. Times are integer minutes from midnight.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from opportune.errors import TaskError

ROOT_TYPE = "object"

# A ground atom is (predicate, arg1, ..., argN); a type expression is a
# non-empty tuple of type names (singleton = plain type, longer = either-set).
Atom = tuple[str, ...]
TypeExpr = tuple[str, ...]

# Numeric expressions are nested tuples:
#   ("num", value) | ("fluent", name, *args) | ("total-time",)
#   | (op, left, right) with op in {"+", "-", "*", "/"}
Expr = tuple


@dataclass(frozen=True)
class Literal:
    atom: Atom
    positive: bool = True

    def negated(self) -> "Literal":
        return Literal(self.atom, not self.positive)


@dataclass(frozen=True)
class TypeHierarchy:
    """Single-inheritance type tree rooted at "object".

    ``entries`` maps every declared type to its parent; the root maps to None
    and is always present.
    """

    entries: Mapping[str, str | None] = field(default_factory=lambda: {ROOT_TYPE: None})

    def __post_init__(self):
        entries = dict(self.entries)
        entries.setdefault(ROOT_TYPE, None)
        if entries[ROOT_TYPE] is not None:
            raise TaskError(f"root type {ROOT_TYPE!r} cannot have a parent")
        for name, parent in entries.items():
            if name != ROOT_TYPE and parent not in entries:
                raise TaskError(f"type {name!r} has undeclared parent {parent!r}")
        object.__setattr__(self, "entries", entries)
        # acyclicity: walk every chain to the root
        for name in entries:
            self.ancestors(name)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def parent(self, name: str) -> str | None:
        if name not in self.entries:
            raise TaskError(f"unknown type {name!r}")
        return self.entries[name]

    def ancestors(self, name: str) -> tuple[str, ...]:
        """The chain from ``name`` (inclusive) up to the root."""
        if name not in self.entries:
            raise TaskError(f"unknown type {name!r}")
        chain = [name]
        seen = {name}
        cur = self.entries[name]
        while cur is not None:
            if cur in seen:
                raise TaskError(f"type hierarchy contains a cycle through {cur!r}")
            chain.append(cur)
            seen.add(cur)
            cur = self.entries.get(cur)
        return tuple(chain)

    def is_subtype(self, sub: str, sup: str) -> bool:
        return sup in self.ancestors(sub)

    def siblings(self, name: str) -> tuple[str, ...]:
        """Types sharing ``name``'s parent, excluding ``name`` itself."""
        parent = self.parent(name)
        return tuple(
            sorted(t for t, p in self.entries.items() if p == parent and t != name)
        )

    def add(self, name: str, parent: str = ROOT_TYPE) -> "TypeHierarchy":
        if name in self.entries:
            raise TaskError(f"type {name!r} already declared")
        if parent not in self.entries:
            raise TaskError(f"unknown parent type {parent!r}")
        return TypeHierarchy({**self.entries, name: parent})


def type_compatible(object_type: str, type_expr: TypeExpr, types: TypeHierarchy) -> bool:
    """True iff ``object_type`` is, or descends from, any member of ``type_expr``."""
    for member in type_expr:
        if member not in types:
            raise TaskError(f"unknown type {member!r} in type expression")
    return any(types.is_subtype(object_type, member) for member in type_expr)


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    params: tuple[tuple[str, TypeExpr], ...]

    def __post_init__(self):
        names = [p for p, _ in self.params]
        if len(names) != len(set(names)):
            raise TaskError(f"duplicate parameter name in predicate {self.name!r}")

    @property
    def arity(self) -> int:
        return len(self.params)


# Functions share the schema shape of predicates (name + typed parameters).
FunctionSchema = PredicateSchema


@dataclass(frozen=True)
class TimedCondition:
    when: str  # "start" | "overall"
    literal: Literal


@dataclass(frozen=True)
class TimedEffect:
    when: str  # "start" | "end"
    literal: Literal


@dataclass(frozen=True)
class NumericEffect:
    when: str  # "start" | "end"
    op: str  # "increase" | "decrease" | "assign"
    fluent: Expr  # ("fluent", name, *args)
    expr: Expr


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, TypeExpr], ...]
    duration: Expr
    conditions: tuple[TimedCondition, ...]
    effects: tuple[TimedEffect, ...]
    numeric_effects: tuple[NumericEffect, ...] = ()

    def param_type(self, var: str) -> TypeExpr:
        for name, texpr in self.params:
            if name == var:
                return texpr
        raise TaskError(f"action {self.name!r} has no parameter {var!r}")


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple[str, ...]
    types: TypeHierarchy
    predicates: Mapping[str, PredicateSchema]
    functions: Mapping[str, FunctionSchema]
    actions: Mapping[str, ActionSchema]

    def add_type(self, name: str, parent: str = ROOT_TYPE) -> "Domain":
        return replace(self, types=self.types.add(name, parent))


def derive_horizon(timed_literals) -> tuple[int, int | None]:
    """Default activity window: starts at 0; ends at the last scheduled
    literal (open-ended when there are none)."""
    times = [t for t, _ in timed_literals]
    return (0, max(times) if times else None)


@dataclass(frozen=True)
class Instance:
    name: str
    domain_name: str
    objects: Mapping[str, str]
    init_atoms: frozenset[Atom]
    fluents: Mapping[tuple, float]  # key: (function, arg1, ..., argN)
    timed_literals: tuple[tuple[int, Literal], ...]
    goals: frozenset[Atom]
    metric: tuple[str, Expr] | None = None  # ("minimize"|"maximize", expr)
    horizon: tuple[int, int | None] | None = None  # derived when omitted

    def __post_init__(self):
        if self.horizon is None:
            object.__setattr__(self, "horizon", derive_horizon(self.timed_literals))

    def add_object(self, name: str, type_name: str) -> "Instance":
        if name in self.objects:
            raise TaskError(f"object {name!r} already declared")
        return replace(self, objects={**self.objects, name: type_name})

    def extend_state(
        self,
        atoms: Iterable[Atom] = (),
        fluents: Mapping[tuple, float] | None = None,
        timed_literals: Iterable[tuple[int, Literal]] = (),
    ) -> "Instance":
        new_timed = sorted(
            set(self.timed_literals) | set(timed_literals),
            key=lambda tl: (tl[0], tl[1].atom, not tl[1].positive),
        )
        return replace(
            self,
            init_atoms=self.init_atoms | frozenset(atoms),
            fluents={**self.fluents, **(fluents or {})},
            timed_literals=tuple(new_timed),
        )

    def add_goal(self, atom: Atom) -> "Instance":
        return replace(self, goals=self.goals | {atom})


@dataclass(frozen=True)
class PlanningTask:
    """A domain plus one instance; the unit the planner and pipeline work on."""

    domain: Domain
    instance: Instance

    @property
    def types(self) -> TypeHierarchy:
        return self.domain.types

    @property
    def objects(self) -> Mapping[str, str]:
        return self.instance.objects

    def object_type(self, name: str) -> str:
        try:
            return self.instance.objects[name]
        except KeyError:
            raise TaskError(f"unknown object {name!r}") from None

    def add_type(self, name: str, parent: str = ROOT_TYPE) -> "PlanningTask":
        return replace(self, domain=self.domain.add_type(name, parent))

    def add_object(self, name: str, type_name: str) -> "PlanningTask":
        if type_name not in self.domain.types:
            raise TaskError(f"unknown type {type_name!r}")
        return replace(self, instance=self.instance.add_object(name, type_name))

    def validate_atom(self, atom: Atom) -> None:
        """Check predicate existence, arity and argument types of a ground atom."""
        pred = self.domain.predicates.get(atom[0])
        if pred is None:
            raise TaskError(f"unknown predicate {atom[0]!r}")
        if len(atom) - 1 != pred.arity:
            raise TaskError(
                f"predicate {atom[0]!r} expects {pred.arity} arguments, got {len(atom) - 1}"
            )
        for arg, (pname, texpr) in zip(atom[1:], pred.params):
            if arg not in self.instance.objects:
                raise TaskError(f"unknown object {arg!r} in atom {atom}")
            if not type_compatible(self.instance.objects[arg], texpr, self.types):
                raise TaskError(
                    f"object {arg!r} of type {self.instance.objects[arg]!r} is not "
                    f"compatible with parameter {pname!r} of {atom[0]!r}"
                )


@dataclass(frozen=True)
class PlanStep:
    start: int
    name: str
    args: tuple[str, ...]
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class Plan:
    steps: tuple[PlanStep, ...] = ()

    def __post_init__(self):
        prev_end = None
        for step in self.steps:
            if prev_end is not None and step.start < prev_end:
                raise TaskError(
                    f"plan steps overlap: step at {step.start} starts before {prev_end}"
                )
            prev_end = step.end

    @property
    def end_time(self) -> int | None:
        return self.steps[-1].end if self.steps else None

    def makespan(self, from_time: int) -> int:
        return 0 if not self.steps else self.steps[-1].end - from_time
