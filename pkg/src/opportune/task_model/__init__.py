"""Planning-task model: PDDL-subset parsing, typed objects, plans."""

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
from opportune.task_model.parser import (
    parse_atom,
    parse_domain,
    parse_plan,
    parse_problem,
    parse_task,
)
from opportune.task_model.writer import (
    domain_to_pddl,
    format_atom,
    format_expr,
    format_literal,
    plan_to_text,
    problem_to_pddl,
    task_to_pddl,
)

__all__ = [
    "ActionSchema",
    "Atom",
    "Domain",
    "Expr",
    "Instance",
    "Literal",
    "NumericEffect",
    "Plan",
    "PlanStep",
    "PlanningTask",
    "PredicateSchema",
    "ROOT_TYPE",
    "TimedCondition",
    "TimedEffect",
    "TypeExpr",
    "TypeHierarchy",
    "type_compatible",
    "parse_atom",
    "parse_domain",
    "parse_plan",
    "parse_problem",
    "parse_task",
    "domain_to_pddl",
    "format_atom",
    "format_expr",
    "format_literal",
    "plan_to_text",
    "problem_to_pddl",
    "task_to_pddl",
]
